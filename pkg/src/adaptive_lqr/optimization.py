"""Projected gradient descent for the cost-biased (RBMLE) and optimistic (OFU) selection problems.

Both problems minimize over the intersection of the confidence ellipsoid and
the Frobenius ball ``||theta||_F <= c``:

* RBMLE: ``V(theta) + alpha * trace(P(theta))``
* OFU:   ``trace(P(theta))``

Parameters for which the Riccati iteration fails are given the value ``+inf``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import AdaptiveLQRError, NoFeasiblePoint
from .estimation import ConfidenceBall, GramState
from .riccati import CostParams, RiccatiSolution, SystemParams, avg_cost_gradient, solve_dare

logger = logging.getLogger(__name__)

RBMLE = "rbmle"
OFU = "ofu"


@dataclass
class ObjectiveSpec:
    kind: str
    gram: GramState
    cost: CostParams
    alpha: float = 0.0
    # tighter budget than the standalone solver: a candidate that needs more
    # Riccati sweeps than this is treated as infeasible
    dare_max_iter: int = 10_000

    def __post_init__(self):
        if self.kind not in (RBMLE, OFU):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def evaluate(self, theta: np.ndarray) -> tuple[float, RiccatiSolution | None]:
        """Objective value and the Riccati solution it came from (``None`` if infeasible)."""
        params = SystemParams.from_theta(theta, self.gram.n)
        try:
            sol = solve_dare(params, self.cost, max_iter=self.dare_max_iter)
        except AdaptiveLQRError:
            return np.inf, None
        if self.kind == OFU:
            return sol.avg_cost, sol
        value = self.gram.squared_error(theta)
        if self.alpha > 0:
            value += self.alpha * sol.avg_cost
        return value, sol

    def gradient(self, theta: np.ndarray, sol: RiccatiSolution) -> np.ndarray:
        n = self.gram.n
        gA, gB = avg_cost_gradient(SystemParams.from_theta(theta, n), sol)
        gJ = np.hstack([gA, gB])
        if self.kind == OFU:
            return gJ
        return self.gram.squared_error_grad(theta) + self.alpha * gJ


def objective_value(obj: ObjectiveSpec, theta) -> float:
    return obj.evaluate(np.asarray(theta, dtype=float))[0]


@dataclass
class PgdConfig:
    """Settings for :func:`pgd_minimize`.

    The first iteration tries ``init_step``; later ones try the Barzilai-Borwein
    step (twice the last accepted step when curvature is not positive). Trial
    steps shrink by ``backtrack_factor`` until the Armijo condition holds and
    the value does not increase, or ``max_backtracks`` is exhausted.
    """

    max_iters: int = 200
    init_step: float = 0.1
    backtrack_factor: float = 0.5
    armijo_const: float = 1e-4
    stop_tol: float = 1e-8
    restarts: int = 3
    max_backtracks: int = 40
    # also stop once an accepted step improves the value by less than this, relatively
    value_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iters < 1 or self.init_step <= 0 or self.stop_tol <= 0 or self.restarts < 1:
            raise ValueError("PGD settings must be positive")
        if not (0 < self.backtrack_factor < 1 and 0 < self.armijo_const < 1):
            raise ValueError("backtrack_factor and armijo_const must lie in (0, 1)")


def project_to_ellipsoid(theta, ball: ConfidenceBall) -> np.ndarray:
    """Radial projection toward the center in the metric induced by the ball's weight."""
    theta = np.asarray(theta, dtype=float)
    d = ball.weighted_distance(theta)
    if d <= ball.radius:
        return theta
    return ball.center + (theta - ball.center) * np.sqrt(ball.radius / d)


def project_to_norm_ball(theta, c: float) -> np.ndarray:
    """Radial scaling onto ``{theta : ||theta||_F <= c}``."""
    if c <= 0:
        raise ValueError("norm bound must be positive")
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta)
    if norm <= c:
        return theta
    return theta * (c / norm)


def project_feasible(theta, ball: ConfidenceBall, c: float, cycles: int = 3) -> np.ndarray | None:
    """Alternate the two radial projections; ``None`` if no point in both sets emerges."""
    for _ in range(cycles):
        theta = project_to_norm_ball(project_to_ellipsoid(theta, ball), c)
        if ball.contains(theta, rtol=1e-12):
            return theta
    return None


def _descend(obj, ball, c, theta, value, sol, cfg, chol, trace):
    step = cfg.init_step
    g_prev = theta_prev = None
    for it in range(cfg.max_iters):
        g = obj.gradient(theta, sol)
        # Z-metric preconditioning keeps the quadratic part well scaled and
        # matches the metric of the radial ellipsoid projection
        direction = -cho_solve(chol, g.T).T
        trial = step if it == 0 else 2.0 * step
        if g_prev is not None:
            # Barzilai-Borwein trial step in the Z metric
            s_k = theta - theta_prev
            curv = float(np.sum(s_k * (g - g_prev)))
            if curv > 0:
                trial = float(np.sum((s_k @ ball.weight) * s_k)) / curv
        accepted = None
        for _ in range(cfg.max_backtracks):
            cand = project_feasible(theta + trial * direction, ball, c)
            if cand is not None:
                v, s = obj.evaluate(cand)
                decrease = min(float(np.sum(g * (cand - theta))), 0.0)
                if v <= value + cfg.armijo_const * decrease and v <= value:
                    accepted = (cand, v, s)
                    break
            trial *= cfg.backtrack_factor
        if accepted is None:
            break
        step = trial
        cand, v, s = accepted
        moved = np.linalg.norm(cand - theta)
        g_prev, theta_prev = g, theta
        improvement = value - v
        theta, value, sol = cand, v, s
        trace.append(value)
        if moved <= cfg.stop_tol or improvement <= cfg.value_tol * (1.0 + abs(value)):
            break
    return theta, value


def _random_feasible(ball: ConfidenceBall, c: float, rng: np.random.Generator) -> np.ndarray | None:
    H = rng.standard_normal(ball.center.shape)
    Lz = np.linalg.cholesky(ball.weight)
    # D = H L^{-T} has weighted norm ||H||_F
    D = solve_triangular(Lz, H.T, lower=True).T
    scale = np.sqrt(ball.radius) * rng.uniform() / max(np.linalg.norm(H), 1e-300)
    return project_feasible(ball.center + scale * D, ball, c)


def pgd_minimize(
    obj: ObjectiveSpec,
    ball: ConfidenceBall,
    c: float,
    init,
    cfg: PgdConfig | None = None,
    rng: np.random.Generator | None = None,
    previous=None,
    trace: list | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize ``obj`` over the ellipsoid intersected with the norm ball.

    The first descent starts from ``init`` (projected if needed). With
    ``cfg.restarts > 1`` further descents start from the projected center,
    ``previous`` and random feasible points, in that order, until ``restarts``
    descents have run; the best end point is returned.

    ``trace``, if given, receives the objective value of every accepted iterate
    of every descent.

    Raises:
        NoFeasiblePoint: no start point has a finite objective value.
    """
    cfg = cfg or PgdConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    chol = (np.linalg.cholesky(ball.weight), True)
    pool = [init, ball.center]
    if previous is not None:
        pool.append(previous)

    best = None
    runs = 0
    attempts = 0
    max_attempts = len(pool) + 2 * cfg.restarts
    seen = []
    while runs < cfg.restarts and attempts < max_attempts:
        attempts += 1
        if pool:
            start = project_feasible(np.asarray(pool.pop(0), dtype=float), ball, c)
        else:
            start = _random_feasible(ball, c, rng)
        if start is None or any(np.array_equal(start, s) for s in seen):
            continue
        seen.append(start)
        value, sol = obj.evaluate(start)
        if not np.isfinite(value):
            continue
        runs += 1
        run_trace = [value]
        theta, value = _descend(obj, ball, c, start, value, sol, cfg, chol, run_trace)
        if trace is not None:
            trace.extend(run_trace)
        if best is None or value < best[1]:
            best = (theta, value)
    if best is None:
        raise NoFeasiblePoint("no stabilizable start point in the constraint set")
    return best
