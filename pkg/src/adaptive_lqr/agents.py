"""Episodic adaptive controllers sharing one interface.

Every agent acts with ``u = K(theta) x`` and recomputes ``theta`` only at the
start of an episode; episode ``k`` lasts ``2**k`` steps, so selections happen
at ``t = 0, 1, 3, 7, 15, ...``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AdaptiveLQRError, NoFeasiblePoint
from .estimation import ConfidenceBall, GramState
from .optimization import OFU, RBMLE, ObjectiveSpec, PgdConfig, pgd_minimize, project_feasible, project_to_norm_ball
from .riccati import CostParams, SystemParams, solve_dare
from .system import STREAM_AGENT, STREAM_RESTART, stream_rng

AGENT_KINDS = ("rbmle", "ofu", "ts", "ce", "oracle")


@dataclass
class AgentConfig:
    delta: float = 0.05
    L: float = 1.0
    c: float = 1.0
    alpha0: float = 1.0
    pgd: PgdConfig = field(default_factory=PgdConfig)
    ts_max_resample: int = 50


def is_stabilizable(theta: np.ndarray, cost: CostParams) -> bool:
    try:
        solve_dare(SystemParams.from_theta(theta, theta.shape[0]), cost)
    except AdaptiveLQRError:
        return False
    return True


def feasible_fallback(ball: ConfidenceBall, cost: CostParams, c: float, previous=None, rng=None,
                      attempts: int = 3) -> np.ndarray:
    """Nearest usable parameter: projected estimate, then ``previous``, then random points of the ball."""
    cand = project_feasible(ball.center, ball, c)
    if cand is not None and is_stabilizable(cand, cost):
        return cand
    if previous is not None:
        return np.asarray(previous, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    Lz = np.linalg.cholesky(ball.weight)
    for _ in range(attempts):
        H = rng.standard_normal(ball.center.shape)
        D = solve_triangular(Lz, H.T, lower=True).T
        D *= np.sqrt(ball.radius) * rng.uniform() / max(np.linalg.norm(H), 1e-300)
        cand = project_feasible(ball.center + D, ball, c)
        if cand is not None and is_stabilizable(cand, cost):
            return cand
    raise NoFeasiblePoint("no stabilizable parameter found near the estimate")


def _pgd_init(ball, c, previous):
    if previous is not None and ball.contains(previous) and np.linalg.norm(previous) <= c:
        return previous
    return ball.center


def _select_pgd(obj, ball, c, cfg, previous, rng, trace=None):
    try:
        theta, _ = pgd_minimize(obj, ball, c, _pgd_init(ball, c, previous), cfg, rng=rng,
                                previous=previous, trace=trace)
    except NoFeasiblePoint:
        return feasible_fallback(ball, obj.cost, c, previous, rng)
    return theta


def select_params_rbmle(gram: GramState, ball: ConfidenceBall, cost: CostParams, alpha0: float, t_k: int,
                        c: float, cfg: PgdConfig | None = None, previous=None, rng=None, trace=None) -> np.ndarray:
    """Minimize ``V(theta) + alpha0 * sqrt(t_k) * J(theta)`` over the feasible set."""
    alpha = alpha0 * np.sqrt(max(t_k, 1))
    obj = ObjectiveSpec(RBMLE, gram, cost, alpha=alpha)
    return _select_pgd(obj, ball, c, cfg or PgdConfig(), previous, rng, trace)


def select_params_ofu(ball: ConfidenceBall, cost: CostParams, c: float, cfg: PgdConfig | None = None,
                      previous=None, rng=None, trace=None) -> np.ndarray:
    """Minimize the optimal average cost ``J(theta)`` over the feasible set."""
    n, p = ball.center.shape
    obj = ObjectiveSpec(OFU, GramState(n, p - n), cost)
    return _select_pgd(obj, ball, c, cfg or PgdConfig(), previous, rng, trace)


def sample_ts(ball: ConfidenceBall, rng: np.random.Generator) -> np.ndarray:
    """One raw draw ``theta_hat + sqrt(beta) H Z^{-1/2}`` with ``Z^{-1/2}`` an inverse Cholesky factor."""
    H = rng.standard_normal(ball.center.shape)
    Lz = np.linalg.cholesky(ball.weight)
    # H L^{-1} has row covariance L^{-T} L^{-1} = Z^{-1}
    return ball.center + np.sqrt(ball.radius) * solve_triangular(Lz, H.T, lower=True, trans="T").T


def select_params_ts(gram: GramState, ball: ConfidenceBall, cost: CostParams, rng: np.random.Generator,
                     c: float, max_resample: int = 50) -> np.ndarray:
    """Perturbed estimate, resampled until stabilizable; projected estimate on exhaustion."""
    for _ in range(max_resample):
        cand = project_to_norm_ball(sample_ts(ball, rng), c)
        if is_stabilizable(cand, cost):
            return cand
    return feasible_fallback(ball, cost, c, rng=rng)


def select_params_ce(gram: GramState, ball: ConfidenceBall, c: float, cost: CostParams, previous=None,
                     rng=None) -> np.ndarray:
    """The estimate itself, moved into the feasible set if it is not already there."""
    return feasible_fallback(ball, cost, c, previous, rng)


@dataclass
class Selection:
    """What an agent chose at the start of one episode."""

    t: int
    episode: int
    theta: np.ndarray
    beta: float
    wdist: float
    P: np.ndarray
    K: np.ndarray
    # ||A + BK||_2 of the selected model (may exceed 1 for a stable closed loop)
    op_norm: float = np.nan


class Agent:
    """Episodic controller of one of the kinds in :data:`AGENT_KINDS`.

    ``seed`` and ``label`` determine the agent's private random streams, so
    agents with different labels never share draws.
    """

    def __init__(self, kind: str, cost: CostParams, cfg: AgentConfig | None = None,
                 true_params: SystemParams | None = None, seed: int = 0, label: str | None = None):
        if kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {kind!r}")
        if kind == "oracle" and true_params is None:
            raise ValueError("the oracle agent needs the true parameters")
        self.kind = kind
        self.cost = cost
        self.cfg = cfg or AgentConfig()
        self.true_params = true_params
        self.label = label or kind
        tag = zlib.crc32(self.label.encode())
        self._rng = stream_rng(seed, STREAM_AGENT, tag)
        self._restart_rng = stream_rng(seed, STREAM_RESTART, tag)
        self.theta = None
        self.gain = None
        self.episode = 0
        self.tau = 0
        self.t = 0
        self.selections: list[Selection] = []

    def start(self, gram: GramState) -> None:
        """Make the first selection, at ``t = 0``."""
        self.episode, self.tau, self.t = 0, 0, 0
        self._select(gram)

    def control(self, x) -> np.ndarray:
        return self.gain @ np.asarray(x, dtype=float)

    def advance(self, gram: GramState, reselect: bool = True) -> bool:
        """Count one elapsed step; at the end of an episode open the next one.

        Returns True when a new selection was made.
        """
        self.tau += 1
        self.t += 1
        if self.tau < 2**self.episode:
            return False
        self.episode += 1
        self.tau = 0
        if reselect and self.kind != "oracle":
            self._select(gram)
            return True
        return False

    def _select(self, gram: GramState) -> None:
        cfg = self.cfg
        if self.kind == "oracle":
            theta = self.true_params.theta
            beta = wdist = np.nan
        else:
            ball = ConfidenceBall.from_gram(gram, cfg.delta, cfg.L, cfg.c)
            prev = self.theta
            if self.kind == "rbmle":
                theta = select_params_rbmle(gram, ball, self.cost, cfg.alpha0, self.t, cfg.c, cfg.pgd,
                                            previous=prev, rng=self._restart_rng)
            elif self.kind == "ofu":
                theta = select_params_ofu(ball, self.cost, cfg.c, cfg.pgd, previous=prev, rng=self._restart_rng)
            elif self.kind == "ts":
                try:
                    theta = select_params_ts(gram, ball, self.cost, self._rng, cfg.c, cfg.ts_max_resample)
                except NoFeasiblePoint:
                    if prev is None:
                        raise
                    theta = prev
            else:
                theta = select_params_ce(gram, ball, cfg.c, self.cost, previous=prev, rng=self._rng)
            beta = ball.radius
            wdist = ball.weighted_distance(theta)
        params = SystemParams.from_theta(theta, theta.shape[0])
        sol = solve_dare(params, self.cost)
        self.theta = np.array(theta, dtype=float)
        self.gain = sol.K
        self.selections.append(Selection(self.t, self.episode, self.theta, beta, wdist, sol.P, sol.K,
                                         sol.closed_loop_norm(params)))
