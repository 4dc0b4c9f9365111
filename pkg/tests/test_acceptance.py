"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line before asserting.
Criterion 5 runs the full desk-scale comparison (a few minutes on one core);
criterion 6 reuses its laplacian3 RBMLE curves.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from adaptive_lqr import AdaptiveLQRError, CostParams, SystemParams, grad_avg_cost, solve_dare, spectral_radius
from adaptive_lqr.estimation import ConfidenceBall, GramState
from adaptive_lqr.harness import AgentSpec, ExperimentConfig, auto_c, benchmark_registry, run_experiment, run_trial
from adaptive_lqr.system import NoiseModel, step, stream_rng

import oracles

SEEDS_FIG = 100


@pytest.fixture(scope="module")
def figure_reports():
    reports = {}
    for system in ("laplacian3", "integrator2"):
        cfg = ExperimentConfig(system=system, agents=[AgentSpec("rbmle"), AgentSpec("ofu"), AgentSpec("ts")],
                               T=2000, seeds=SEEDS_FIG)
        reports[system] = run_experiment(cfg)
    return reports


def test_1_scalar_dare_exactness(acceptance_report):
    theta, cost = SystemParams([[1.0]], [[1.0]]), CostParams([[10.0]], [[1.0]])
    solve_dare(theta, cost)
    t0 = time.perf_counter()
    sol = solve_dare(theta, cost)
    elapsed = time.perf_counter() - t0
    p = 5 + np.sqrt(35)
    dp, dk = abs(sol.P[0, 0] - p), abs(sol.K[0, 0] + p / (6 + np.sqrt(35)))
    ok = dp <= 1e-8 and dk <= 1e-8 and elapsed < 1e-3
    acceptance_report(1, "scalar DARE exactness", ok, f"|dP|={dp:.1e} |dK|={dk:.1e} time={elapsed * 1e3:.3f}ms")
    assert ok


def test_2_gradient_correctness(acceptance_report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(10):
        while True:
            A = rng.normal(size=(3, 3))
            A *= rng.uniform(0.5, 1.3) / spectral_radius(A)
            B = rng.normal(size=(3, 3))
            theta, cost = SystemParams(A, B), CostParams(np.eye(3), np.eye(3))
            try:
                solve_dare(theta, cost)
                break
            except AdaptiveLQRError:
                continue
        gA, gB = grad_avg_cost(theta, cost)
        fA = oracles.central_difference(lambda X: solve_dare(SystemParams(X, B), cost).avg_cost, A, h=1e-6)
        fB = oracles.central_difference(lambda X: solve_dare(SystemParams(A, X), cost).avg_cost, B, h=1e-6)
        for g, f in ((gA, fA), (gB, fB)):
            worst = max(worst, float(np.max(np.abs(g - f) / np.abs(f))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 1.0
    acceptance_report(2, "gradient vs central differences", ok, f"max rel err={worst:.2e} time={elapsed:.2f}s")
    assert ok


def test_3_decomposition_identity(acceptance_report):
    cfg = ExperimentConfig(system="scalar", agents=[AgentSpec("rbmle")], T=500, seeds=1)
    t0 = time.perf_counter()
    r = run_trial(cfg, "rbmle", 0)
    elapsed = time.perf_counter() - t0
    gap = np.abs(r.regret - r.decomposition.sum(axis=0)) / (1 + np.abs(r.regret))
    ok = (not r.failed) and r.diverged_at is None and float(gap.max()) <= 1e-6 and elapsed < 10
    acceptance_report(3, "regret decomposition identity", ok,
                      f"max scaled gap={gap.max():.2e} R(500)={r.regret[-1]:.2f} time={elapsed:.2f}s")
    assert ok


def test_4_confidence_coverage(acceptance_report):
    theta, _ = benchmark_registry("scalar")
    c = auto_c(theta)
    t0 = time.perf_counter()
    hits = 0
    for seed in range(200):
        model, inputs = NoiseModel(1, seed), stream_rng(seed, 1)
        g = GramState(1, 1)
        x = np.zeros(1)
        for _ in range(500):
            u = inputs.standard_normal(1)
            xn = step(theta, x, u, model.draw())
            g.update(np.concatenate([x, u]), xn)
            x = xn
        hits += ConfidenceBall.from_gram(g, 0.1, 1.0, c).contains(theta.theta)
    elapsed = time.perf_counter() - t0
    ok = hits / 200 >= 0.85 and elapsed < 60
    acceptance_report(4, "confidence coverage", ok, f"coverage={hits}/200 time={elapsed:.1f}s")
    assert ok


def test_5_figure_ordering(acceptance_report, figure_reports):
    parts, ok = [], True
    for system, rep in figure_reports.items():
        med = {a.label: a.median[-1] for a in rep.agents}
        n_ok = {a.label: len(a.seeds) for a in rep.agents}
        good = med["rbmle"] < med["ofu"] and med["rbmle"] < med["ts"]
        ok &= good and all(v >= SEEDS_FIG // 2 for v in n_ok.values())
        parts.append(f"{system}: rbmle={med['rbmle']:.4g} ofu={med['ofu']:.4g} ts={med['ts']:.4g}")
    acceptance_report(5, "RBMLE median regret below OFU and TS", ok, "; ".join(parts) + f" ({SEEDS_FIG} seeds)")
    assert ok


def test_6_sublinear_growth(acceptance_report, figure_reports):
    med = figure_reports["laplacian3"].agent("rbmle").median
    t = np.arange(500, 2001)
    y = med[t - 1]
    if np.all(y > 0) and np.all(np.isfinite(y)):
        slope = oracles.ols_slope(np.log(t), np.log(y))
        ok = 0.3 <= slope <= 0.8
        detail = f"slope={slope:.3f} (median R(500)={y[0]:.1f}, R(2000)={y[-1]:.1f})"
    else:
        ok = False
        detail = "median regret not positive and finite on [500, 2000]"
    acceptance_report(6, "log-log slope of median RBMLE regret in [0.3, 0.8]", ok, detail)
    assert ok


def test_7_rbmle_ofu_ordering_on_grid(acceptance_report):
    theta, cost = benchmark_registry("scalar")
    c = auto_c(theta)
    rng = np.random.default_rng(7)
    model = NoiseModel(1, 7)
    g = GramState(1, 1)
    x = np.zeros(1)
    for t in range(64):
        u = rng.normal(size=1) if t < 10 else 0.3 * rng.normal(size=1) - 0.9 * x
        xn = step(theta, x, u, model.draw())
        g.update(np.concatenate([x, u]), xn)
        x = xn
    ball = ConfidenceBall.from_gram(g, 0.05, 1.0, c)
    alpha = np.sqrt(64)
    t0 = time.perf_counter()
    args = (g.Z, g.M[0], g.sq, g.lam, ball.center[0], ball.radius, c, 10.0, 1.0)
    *_, J_r, V_r = oracles.scalar_objective_grid(*args, alpha, levels=1, kind="rbmle")
    *_, J_o, V_o = oracles.scalar_objective_grid(*args, 0.0, levels=1, kind="ofu")
    elapsed = time.perf_counter() - t0
    ok = J_r >= J_o and V_r <= V_o and elapsed < 10
    acceptance_report(7, "grid RBMLE/OFU inequalities", ok,
                      f"J(R)={J_r:.4f} >= J(O)={J_o:.4f}, V(R)={V_r:.2f} <= V(O)={V_o:.2f}")
    assert ok


def test_8_cli_determinism(acceptance_report, tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text("system = integrator2\nagents = rbmle, ofu, ts, ce\nT = 120\nseeds = 4\n")
    outputs = []
    for threads, run in (("1", "a"), ("1", "b"), ("2", "c")):
        out = tmp_path / run
        proc = subprocess.run([sys.executable, "-m", "adaptive_lqr", "run", str(cfg_path), "--out-dir", str(out)],
                              env={**os.environ, "ALQR_THREADS": threads},
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) > 3
    acceptance_report(8, "cmd_run byte-identical across reruns and ALQR_THREADS", ok,
                      f"{len(outputs[0])} files compared over 3 runs (threads 1, 1, 2)")
    assert ok
