import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptive_lqr import NoFeasiblePoint, SystemParams, solve_dare
from adaptive_lqr.estimation import ConfidenceBall, GramState
from adaptive_lqr.harness import auto_c, benchmark_registry
from adaptive_lqr.optimization import (
    OFU,
    RBMLE,
    ObjectiveSpec,
    PgdConfig,
    objective_value,
    pgd_minimize,
    project_feasible,
    project_to_ellipsoid,
    project_to_norm_ball,
)
from adaptive_lqr.system import NoiseModel, step

import oracles

THETA, COST = benchmark_registry("scalar")
C = auto_c(THETA)
P_SCALAR = 5 + np.sqrt(35)


def scalar_snapshot(seed, T):
    """Gram statistics of a scalar-benchmark run with exploratory inputs."""
    rng = np.random.default_rng(seed)
    model = NoiseModel(1, seed)
    g = GramState(1, 1)
    x = np.zeros(1)
    for t in range(T):
        u = rng.normal(size=1) if t < 10 else 0.3 * rng.normal(size=1) - 0.9 * x
        xn = step(THETA, x, u, model.draw())
        g.update(np.concatenate([x, u]), xn)
        x = xn
    return g, ConfidenceBall.from_gram(g, 0.05, 1.0, C)


def noiseless_gram(T=20):
    rng = np.random.default_rng(0)
    g = GramState(1, 1)
    for _ in range(T):
        z = rng.normal(size=2)
        g.update(z, THETA.theta @ z)
    return g


def test_objective_reductions():
    g = noiseless_gram()
    theta = THETA.theta
    assert objective_value(ObjectiveSpec(RBMLE, g, COST, alpha=1.0), theta) == pytest.approx(P_SCALAR, abs=1e-9)
    other = np.array([[0.7, 1.3]])
    rb = objective_value(ObjectiveSpec(RBMLE, g, COST, alpha=2.5), other)
    of = objective_value(ObjectiveSpec(OFU, g, COST), other)
    assert rb - 2.5 * of == pytest.approx(g.squared_error(other), rel=1e-12)
    assert objective_value(ObjectiveSpec(RBMLE, g, COST), other) == g.squared_error(other)


def test_objective_infinite_when_not_stabilizable():
    g = noiseless_gram()
    bad = np.array([[1.5, 0.0]])
    assert objective_value(ObjectiveSpec(RBMLE, g, COST, alpha=1.0), bad) == np.inf
    assert objective_value(ObjectiveSpec(OFU, g, COST), bad) == np.inf


def test_objective_validation():
    g = noiseless_gram()
    with pytest.raises(ValueError):
        ObjectiveSpec("ts", g, COST)
    with pytest.raises(ValueError):
        ObjectiveSpec(RBMLE, g, COST, alpha=-1.0)
    with pytest.raises(ValueError):
        PgdConfig(backtrack_factor=1.0)


def test_projection_examples():
    ball = ConfidenceBall(np.zeros((1, 2)), np.eye(2), 1.0)
    inner = np.array([[0.3, 0.4]])
    np.testing.assert_array_equal(project_to_ellipsoid(inner, ball), inner)
    out = project_to_ellipsoid(np.array([[1.2, 1.6]]), ball)
    assert np.linalg.norm(out) == pytest.approx(1.0)
    np.testing.assert_allclose(out, [[0.6, 0.8]])
    np.testing.assert_array_equal(project_to_norm_ball(np.zeros((1, 2)), 5.0), 0.0)
    np.testing.assert_array_equal(project_to_norm_ball(np.array([[3.0, 4.0]]), 5.0), [[3.0, 4.0]])
    np.testing.assert_allclose(project_to_norm_ball(np.array([[6.0, 8.0]]), 5.0), [[3.0, 4.0]])
    with pytest.raises(ValueError):
        project_to_norm_ball(inner, 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), scale=st.floats(0.01, 100.0))
def test_ellipsoid_projection_lands_inside(seed, scale):
    rng = np.random.default_rng(seed)
    Lz = rng.normal(size=(3, 3))
    Z = Lz @ Lz.T + 0.1 * np.eye(3)
    ball = ConfidenceBall(rng.normal(size=(2, 3)), Z, float(rng.uniform(0.1, 10)))
    theta = ball.center + scale * rng.normal(size=(2, 3))
    out = project_to_ellipsoid(theta, ball)
    assert ball.weighted_distance(out) <= ball.radius * (1 + 1e-12)


def test_project_feasible_reports_empty_intersection():
    ball = ConfidenceBall(np.array([[10.0, 10.0]]), np.eye(2), 1.0)
    assert project_feasible(ball.center, ball, 1.0) is None


def test_unconstrained_quadratic_reaches_estimate():
    g, _ = scalar_snapshot(0, 64)
    big = ConfidenceBall(g.estimate(), g.Z.copy(), 1e6)
    obj = ObjectiveSpec(RBMLE, g, COST, alpha=0.0)
    theta, value = pgd_minimize(obj, big, 100.0, np.array([[0.3, 1.5]]))
    # V alone is minimized at M G^{-1}, which the lam-regularized estimate
    # approaches; compare against that unregularized minimizer
    G = g.Z - g.lam * np.eye(2)
    target = np.linalg.solve(G, g.M.T).T
    assert np.linalg.norm(theta - target) <= 1e-6
    assert value == pytest.approx(g.squared_error(target), abs=1e-9)


def test_rerun_from_optimum_does_not_increase():
    g, ball = scalar_snapshot(1, 64)
    obj = ObjectiveSpec(RBMLE, g, COST, alpha=8.0)
    theta, value = pgd_minimize(obj, ball, C, ball.center)
    theta2, value2 = pgd_minimize(obj, ball, C, theta)
    assert value2 <= value
    trace = []
    pgd_minimize(obj, ball, C, ball.center, PgdConfig(restarts=1), trace=trace)
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_no_feasible_point():
    g = GramState(1, 1)
    # |b| <= 1e-8 around an unstable a: the Riccati iterates blow past the cap
    ball = ConfidenceBall(np.array([[3.0, 0.0]]), np.diag([1.0, 1e12]), 1e-4)
    obj = ObjectiveSpec(OFU, g, COST)
    with pytest.raises(NoFeasiblePoint):
        pgd_minimize(obj, ball, 10.0, ball.center)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("kind", [RBMLE, OFU])
def test_matches_grid_oracle(seed, kind):
    g, ball = scalar_snapshot(seed, 64)
    alpha = 1.0 * np.sqrt(64) if kind == RBMLE else 0.0
    obj = ObjectiveSpec(kind, g, COST, alpha=alpha)
    theta, value = pgd_minimize(obj, ball, C, ball.center, rng=np.random.default_rng(0))
    _, _, grid_value, _, _ = oracles.scalar_objective_grid(
        g.Z, g.M[0], g.sq, g.lam, ball.center[0], ball.radius, C, 10.0, 1.0, alpha, kind=kind)
    assert abs(value - grid_value) <= 1e-3
    assert ball.contains(theta, rtol=1e-9) and np.linalg.norm(theta) <= C * (1 + 1e-12)
    sol = solve_dare(SystemParams.from_theta(theta, 1), COST)
    assert value == pytest.approx(sol.avg_cost if kind == OFU else g.squared_error(theta) + alpha * sol.avg_cost)


def test_deterministic_given_rng():
    g, ball = scalar_snapshot(3, 64)
    obj = ObjectiveSpec(OFU, g, COST)
    a = pgd_minimize(obj, ball, C, ball.center, rng=np.random.default_rng(4))
    b = pgd_minimize(obj, ball, C, ball.center, rng=np.random.default_rng(4))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]
