"""Seeded trials, regret and its four-term decomposition, and multi-seed aggregation."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import AGENT_KINDS, Agent, AgentConfig
from .errors import AdaptiveLQRError, ConfigError, DimensionMismatch, UnknownBenchmark
from .estimation import GramState
from .optimization import PgdConfig
from .riccati import CostParams, RiccatiSolution, SystemParams, solve_dare
from .system import NoiseModel, TrajectoryLog, fmt, stage_cost, step, warmup

logger = logging.getLogger(__name__)

_BENCHMARKS = {
    "laplacian3": (
        [[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]],
        np.eye(3), 10.0 * np.eye(3), np.eye(3),
    ),
    "integrator2": ([[1.0, 0.1], [0.0, 1.0]], np.eye(2), 10.0 * np.eye(2), np.eye(2)),
    "scalar": ([[1.0]], [[1.0]], [[10.0]], [[1.0]]),
}


def benchmark_names() -> list[str]:
    return sorted(_BENCHMARKS)


def benchmark_registry(key: str) -> tuple[SystemParams, CostParams]:
    try:
        A, B, Q, R = _BENCHMARKS[key]
    except KeyError:
        raise UnknownBenchmark(f"unknown system {key!r}; known: {', '.join(benchmark_names())}") from None
    return SystemParams(np.array(A, dtype=float), np.array(B, dtype=float)), CostParams(Q, R)


def auto_c(true_params: SystemParams) -> float:
    """Default norm bound: twice the Frobenius norm of the true parameters."""
    return 2.0 * np.sqrt(true_params.frobenius_sq())


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    alpha0: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}")
        if self.alpha0 < 0:
            raise ConfigError("alpha0 must be nonnegative")
        if not self.label:
            object.__setattr__(self, "label", self.kind)


@dataclass
class ExperimentConfig:
    """Everything that defines an experiment.

    ``c=None`` means twice the Frobenius norm of the true parameters.
    ``noise_scale=0`` switches off the process noise (test mode).
    """

    system: str | None = "laplacian3"
    agents: list = field(default_factory=lambda: [AgentSpec("rbmle"), AgentSpec("ofu"), AgentSpec("ts")])
    T: int = 2000
    warmup: int = 10
    seeds: int = 200
    base_seed: int = 0
    delta: float = 0.05
    lam: float = 1.0
    L: float = 1.0
    c: float | None = None
    out_dir: str = "out"
    true_params: SystemParams | None = None
    cost: CostParams | None = None
    pgd: PgdConfig = field(default_factory=PgdConfig)
    noise_scale: float = 1.0
    # a state norm above this ends the trial as diverged (regret +inf from then on)
    state_cap: float = 1e6

    def __post_init__(self):
        if self.T < 1 or self.seeds < 1 or self.warmup < 0:
            raise ConfigError("T and seeds must be at least 1 and warmup nonnegative")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.lam <= 0 or self.L <= 0:
            raise ConfigError("lambda and L must be positive")
        if self.c is not None and self.c <= 0:
            raise ConfigError("c must be positive")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        labels = [a.label for a in self.agents]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"agent labels must be unique, got {labels}")
        if self.true_params is None:
            if self.system is None:
                raise ConfigError("either a system key or inline matrices are required")
            benchmark_registry(self.system)
        elif self.cost is None:
            raise ConfigError("inline system matrices need cost matrices too")

    def resolve(self) -> tuple[SystemParams, CostParams, float]:
        """True parameters, cost and the norm bound ``c``."""
        if self.true_params is not None:
            true_params, cost = self.true_params, self.cost
        else:
            true_params, cost = benchmark_registry(self.system)
        c = self.c if self.c is not None else auto_c(true_params)
        return true_params, cost, c


@dataclass
class RunResult:
    """One trial of one agent.

    Curves are indexed by ``t = 1..T`` (position ``t - 1``) and cover the
    first ``t`` post-warm-up steps; parameter-based curves refer to the
    parameter in force at step ``t - 1``. If the state blew past
    ``ExperimentConfig.state_cap`` at step ``diverged_at`` the simulation
    stopped there: regret is ``+inf`` and the other curves NaN afterwards.
    """

    label: str
    seed: int
    failed: bool = False
    error: str = ""
    diverged_at: int | None = None
    log: TrajectoryLog | None = None
    warmup_log: TrajectoryLog | None = None
    selections: list = field(default_factory=list)
    episode_of_step: np.ndarray | None = None
    optimal_cost: float = np.nan
    regret: np.ndarray | None = None
    delta: np.ndarray | None = None
    gain_err: np.ndarray | None = None
    beta: np.ndarray | None = None
    wdist: np.ndarray | None = None
    decomposition: np.ndarray | None = None

    def thetas(self) -> np.ndarray:
        """Per-step parameters ``theta_0..theta_T`` (fewer after a divergence)."""
        stack = np.array([s.theta for s in self.selections])
        return stack[self.episode_of_step]

    def compact(self) -> "RunResult":
        """Copy without the trajectory logs (cheap to ship between processes)."""
        return RunResult(self.label, self.seed, self.failed, self.error, self.diverged_at, None, None,
                         self.selections,
                         self.episode_of_step, self.optimal_cost, self.regret, self.delta, self.gain_err,
                         self.beta, self.wdist, self.decomposition)


def regret_curve(log: TrajectoryLog, true_solution: RiccatiSolution) -> np.ndarray:
    """``R(t) = sum_{s<t} c_s - t J*`` for ``t = 1..T``."""
    c = np.asarray(log.costs, dtype=float)
    t = np.arange(1, len(c) + 1)
    return np.cumsum(c) - t * true_solution.avg_cost


def metric_delta(theta_t, theta_true) -> float:
    theta_t = np.asarray(theta_t, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_t.shape != theta_true.shape:
        raise DimensionMismatch(f"shapes {theta_t.shape} and {theta_true.shape} differ")
    return float(np.linalg.norm(theta_t - theta_true))


def decompose_regret(log: TrajectoryLog, theta_sequence, cost: CostParams, true_params: SystemParams,
                     P_sequence=None) -> np.ndarray:
    """Cumulative regret terms ``R1..R4`` as an array of shape ``(4, T)``.

    ``theta_sequence`` holds ``theta_0..theta_T`` (one more than the number of
    steps). Conditional expectations of the next-state quadratic form are
    taken in closed form under unit noise covariance, with
    ``f_s = A x_s + B u_s`` for the true system and ``g_s = A_s x_s + B_s u_s``
    for the parameter in force:

    * R1: ``x_s' P_s x_s - (f_s' P_{s+1} f_s + tr P_{s+1})``
    * R2: ``f_s' (P_{s+1} - P_s) f_s + tr(P_{s+1} - P_s)``
    * R3: ``f_s' P_s f_s - g_s' P_s g_s``
    * R4: ``tr P_s - J*(true)``

    Their sum equals ``c_s - J*(true)`` whenever ``P_s`` satisfies the Bellman
    equation for ``theta_s`` and ``u_s = K(theta_s) x_s``.
    """
    X, U, _, _ = log.arrays()
    T = U.shape[0]
    thetas = np.asarray(theta_sequence, dtype=float)
    if thetas.shape[0] != T + 1:
        raise DimensionMismatch(f"need {T + 1} parameters for {T} steps, got {thetas.shape[0]}")
    n = true_params.n
    if P_sequence is None:
        cache = {}
        P_sequence = []
        for th in thetas:
            key = th.tobytes()
            if key not in cache:
                cache[key] = solve_dare(SystemParams.from_theta(th, n), cost).P
            P_sequence.append(cache[key])
    P = np.asarray(P_sequence, dtype=float)
    J_true = solve_dare(true_params, cost).avg_cost

    Xs = X[:T]
    F = Xs @ true_params.A.T + U @ true_params.B.T
    G = np.einsum("sij,sj->si", thetas[:T, :, :n], Xs) + np.einsum("sij,sj->si", thetas[:T, :, n:], U)
    P_now, P_next = P[:T], P[1:]
    quad = lambda v, M: np.einsum("si,sij,sj->s", v, M, v)  # noqa: E731
    tr_now = np.trace(P_now, axis1=1, axis2=2)
    tr_next = np.trace(P_next, axis1=1, axis2=2)
    r1 = quad(Xs, P_now) - quad(F, P_next) - tr_next
    r2 = quad(F, P_next) - quad(F, P_now) + tr_next - tr_now
    r3 = quad(F, P_now) - quad(G, P_now)
    r4 = tr_now - J_true
    return np.cumsum(np.vstack([r1, r2, r3, r4]), axis=1)


def _agent_config(cfg: ExperimentConfig, spec: AgentSpec, c: float) -> AgentConfig:
    return AgentConfig(delta=cfg.delta, L=cfg.L, c=c, alpha0=spec.alpha0, pgd=cfg.pgd)


def run_trial(cfg: ExperimentConfig, agent, seed: int) -> RunResult:
    """Simulate one agent for ``cfg.T`` steps after the shared warm-up.

    Everything random is derived from ``seed``; agents run under the same
    seed see the same warm-up inputs and the same process noise.
    A :class:`~adaptive_lqr.errors.NoFeasiblePoint` (or any other solver
    failure) marks the result as failed instead of propagating.
    """
    spec = agent if isinstance(agent, AgentSpec) else AgentSpec(agent)
    true_params, cost, c = cfg.resolve()
    n, m = true_params.n, true_params.m
    result = RunResult(spec.label, seed)
    true_sol = solve_dare(true_params, cost)
    result.optimal_cost = true_sol.avg_cost

    model = NoiseModel(n, seed, scale=cfg.noise_scale)
    gram = GramState(n, m, cfg.lam)
    if cfg.warmup > 0:
        wlog = warmup(true_params, cost, model, cfg.warmup)
        for s in range(cfg.warmup):
            gram.update(np.concatenate([wlog.states[s], wlog.inputs[s]]), wlog.states[s + 1])
        result.warmup_log = wlog
        x = wlog.states[-1]
    else:
        x = np.zeros(n)

    ctrl = Agent(spec.kind, cost, _agent_config(cfg, spec, c), true_params, seed=seed, label=spec.label)
    log = TrajectoryLog(states=[x])
    episode_of_step = np.zeros(cfg.T + 1, dtype=int)
    try:
        ctrl.start(gram)
        for t in range(cfg.T):
            episode_of_step[t] = len(ctrl.selections) - 1
            u = ctrl.control(x)
            ct = stage_cost(x, u, cost)
            w = model.draw()
            x_next = step(true_params, x, u, w)
            log.append(u, w, x_next, ct)
            if not np.linalg.norm(x_next) <= cfg.state_cap:
                result.diverged_at = t
                episode_of_step[t + 1] = episode_of_step[t]
                break
            gram.update(np.concatenate([x, u]), x_next)
            # the policy after the horizon is the one last used
            if t < cfg.T - 1:
                ctrl.advance(gram)
            x = x_next
        else:
            episode_of_step[cfg.T] = len(ctrl.selections) - 1
    except AdaptiveLQRError as exc:
        logger.warning("trial %s seed %d failed: %s", spec.label, seed, exc)
        result.failed = True
        result.error = f"{type(exc).__name__}: {exc}"
        result.log = log
        result.selections = ctrl.selections
        return result

    result.log = log
    result.selections = ctrl.selections
    result.episode_of_step = episode_of_step
    _fill_curves(result, true_params, true_sol, cost)
    return result


def _fill_curves(result: RunResult, true_params, true_sol, cost) -> None:
    sel = result.selections
    steps_run = len(result.log)
    episodes = result.episode_of_step[:steps_run + 1]
    steps = episodes[:-1]
    theta_true = true_params.theta
    deltas = np.array([metric_delta(s.theta, theta_true) for s in sel])
    gains = np.array([float(np.linalg.norm(s.K - true_sol.K)) for s in sel])
    P_seq = np.array([s.P for s in sel])[episodes]
    thetas = np.array([s.theta for s in sel])[episodes]
    curves = {
        "regret": regret_curve(result.log, true_sol),
        "delta": deltas[steps],
        "gain_err": gains[steps],
        "beta": np.array([s.beta for s in sel])[steps],
        "wdist": np.array([s.wdist for s in sel])[steps],
    }
    decomposition = decompose_regret(result.log, thetas, cost, true_params, P_seq)
    T = len(result.episode_of_step) - 1
    if result.diverged_at is not None:
        curves["regret"][result.diverged_at:] = np.inf
    if steps_run < T:
        pad = T - steps_run
        curves = {k: np.concatenate([v, np.full(pad, np.inf if k == "regret" else np.nan)])
                  for k, v in curves.items()}
        decomposition = np.hstack([decomposition, np.full((4, pad), np.nan)])
        result.episode_of_step = result.episode_of_step[:steps_run + 1]
    for k, v in curves.items():
        setattr(result, k, v)
    result.decomposition = decomposition


def _trial_job(args):
    cfg, spec, seed = args
    return run_trial(cfg, spec, seed).compact()


def _thread_count(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("ALQR_THREADS", "").strip()
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, threads)


@dataclass
class AgentReport:
    label: str
    seeds: list
    regrets: np.ndarray
    median: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    delta_median: np.ndarray
    gain_err_median: np.ndarray
    failures: list
    trials: list
    diverged: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    agents: list

    def agent(self, label: str) -> AgentReport:
        for a in self.agents:
            if a.label == label:
                return a
        raise KeyError(label)

    @property
    def failed_trials(self) -> int:
        return sum(len(a.failures) for a in self.agents)


def _nanmedian(a: np.ndarray) -> np.ndarray:
    out = np.full(a.shape[1], np.nan)
    cols = ~np.all(np.isnan(a), axis=0)
    out[cols] = np.nanmedian(a[:, cols], axis=0)
    return out


def aggregate(label: str, results: list, T: int) -> AgentReport:
    """Median, mean and population standard deviation of regret at every ``t`` over successful trials.

    Diverged trials stay in (their regret is ``+inf``), so the mean and
    standard deviation become infinite wherever one has diverged.
    """
    ok = [r for r in results if not r.failed]
    failures = [(r.seed, r.error) for r in results if r.failed]
    if ok:
        regrets = np.vstack([r.regret for r in ok])
        with np.errstate(invalid="ignore"):
            med, mean, std = np.median(regrets, axis=0), regrets.mean(axis=0), regrets.std(axis=0)
        std = np.where(np.isfinite(mean), std, np.inf)
        dmed = _nanmedian(np.vstack([r.delta for r in ok]))
        gmed = _nanmedian(np.vstack([r.gain_err for r in ok]))
    else:
        regrets = np.empty((0, T))
        med = mean = std = dmed = gmed = np.full(T, np.nan)
    diverged = [(r.seed, r.diverged_at) for r in ok if r.diverged_at is not None]
    return AgentReport(label, [r.seed for r in ok], regrets, med, mean, std, dmed, gmed, failures, ok, diverged)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None, seed_order=None) -> ExperimentReport:
    """Run every agent on seeds ``base_seed .. base_seed + seeds - 1``.

    Trials are independent and may run in worker processes (``threads``, or
    ``ALQR_THREADS``, or the core count); results are reduced in seed order,
    so the report does not depend on scheduling. ``seed_order`` permutes the
    submission order (for testing that claim).
    """
    seeds = list(range(cfg.base_seed, cfg.base_seed + cfg.seeds))
    order = list(seed_order) if seed_order is not None else seeds
    if sorted(order) != seeds:
        raise ValueError("seed_order must be a permutation of the configured seeds")
    jobs = [(cfg, spec, s) for spec in cfg.agents for s in order]
    workers = min(_thread_count(threads), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        done = [_trial_job(j) for j in jobs]
    by_key = {(r.label, r.seed): r for r in done}
    reports = [aggregate(spec.label, [by_key[(spec.label, s)] for s in seeds], cfg.T) for spec in cfg.agents]
    return ExperimentReport(cfg, reports)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return fmt(v)


def report_files(report: ExperimentReport) -> dict[str, str]:
    """File name to CSV text for every output of an experiment."""
    T = report.config.T
    files = {}
    summary_rows = []
    for a in report.agents:
        rows = [[t, *(_num(v) for v in a.regrets[:, t - 1])] for t in range(1, T + 1)]
        files[f"regret_{a.label}.csv"] = _csv_text(["t", *(f"seed_{s}" for s in a.seeds)], rows)
        summary_rows += [[t, a.label, _num(a.median[t - 1]), _num(a.mean[t - 1]), _num(a.std[t - 1])]
                         for t in range(1, T + 1)]
        for r in a.trials:
            d = r.decomposition
            rows = [[t, *(_num(v) for v in (r.delta[t - 1], r.gain_err[t - 1], r.beta[t - 1],
                                            r.wdist[t - 1], *d[:, t - 1]))] for t in range(1, T + 1)]
            files[f"diagnostics_{a.label}_{r.seed}.csv"] = _csv_text(
                ["t", "delta", "gain_err", "beta", "wdist", "R1", "R2", "R3", "R4"], rows)
    files["summary.csv"] = _csv_text(["t", "agent", "median", "mean", "std"], summary_rows)
    failures = []
    for a in report.agents:
        rows = [[a.label, seed, "failed", msg] for seed, msg in a.failures]
        rows += [[a.label, seed, "diverged", f"state norm exceeded cap at step {step}"] for seed, step in a.diverged]
        failures += sorted(rows, key=lambda row: row[1])
    if failures:
        files["failures.csv"] = _csv_text(["agent", "seed", "status", "detail"], failures)
    return files


def write_report(report: ExperimentReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in report_files(report).items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written
