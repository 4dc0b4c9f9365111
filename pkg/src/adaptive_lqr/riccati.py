"""Discrete algebraic Riccati and Lyapunov solvers for the infinite-horizon LQ problem.

The average-cost LQ problem for ``x' = A x + B u + w`` with unit noise
covariance and stage cost ``x'Qx + u'Ru`` has optimal feedback ``u = K x`` and
optimal average cost ``trace(P)`` where ``P`` solves the DARE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NoConvergence, NonStabilizable, Unstable

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
DIVERGENCE_CAP = 1e12


@dataclass(frozen=True, eq=False)
class SystemParams:
    """A pair ``theta = (A, B)`` with ``A`` of shape ``(n, n)`` and ``B`` of shape ``(n, m)``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def theta(self) -> np.ndarray:
        """The stacked ``n x (n+m)`` matrix ``[A B]``, acting as ``x' = theta @ z``."""
        return np.hstack([self.A, self.B])

    @classmethod
    def from_theta(cls, theta: np.ndarray, n: int) -> "SystemParams":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != n or theta.shape[1] <= n:
            raise DimensionMismatch(f"theta of shape {theta.shape} does not split with n={n}")
        return cls(theta[:, :n], theta[:, n:])

    def frobenius_sq(self) -> float:
        """``trace(theta^T theta)``."""
        return float(np.sum(self.A**2) + np.sum(self.B**2))


@dataclass(frozen=True, eq=False)
class CostParams:
    """Quadratic stage cost weights; ``Q`` PSD and ``R`` PD."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionMismatch("Q and R must be square")
        if not np.allclose(Q, Q.T) or not np.allclose(R, R.T):
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semi-definite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    def check(self, theta: SystemParams) -> None:
        if self.Q.shape[0] != theta.n or self.R.shape[0] != theta.m:
            raise DimensionMismatch(
                f"cost dims (Q {self.Q.shape}, R {self.R.shape}) do not match n={theta.n}, m={theta.m}"
            )


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    avg_cost: float
    iterations: int = 0

    def closed_loop(self, theta: SystemParams) -> np.ndarray:
        return theta.A + theta.B @ self.K

    def closed_loop_norm(self, theta: SystemParams) -> float:
        """Spectral norm of ``A + BK``; informational only, stability is judged by the spectral radius."""
        return float(np.linalg.norm(self.closed_loop(theta), 2))


def gain_from_P(theta: SystemParams, cost: CostParams, P: np.ndarray) -> np.ndarray:
    """``K = -(B'PB + R)^{-1} B'PA``."""
    A, B = theta.A, theta.B
    PB = P @ B
    return -np.linalg.solve(B.T @ PB + cost.R, PB.T @ A)


def solve_dare(
    theta: SystemParams,
    cost: CostParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cap: float = DIVERGENCE_CAP,
) -> RiccatiSolution:
    """Solve the DARE by value iteration from ``P_0 = Q``.

    Iterates ``P <- Q + A'PA - A'PB (B'PB + R)^{-1} B'PA`` (re-symmetrized each
    step) until ``||P_new - P||_F <= tol * (1 + ||P||_F)``.

    Raises:
        NonStabilizable: iterates exceed ``cap`` in Frobenius norm, or the
            converged closed loop ``A + BK`` is not strictly stable.
        NoConvergence: ``max_iter`` reached without settling or diverging.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    cost.check(theta)
    A, B = np.ascontiguousarray(theta.A), np.ascontiguousarray(theta.B)
    P, K, k, status, rho = _kernels.riccati(A, B, cost.Q, cost.R, float(tol), int(max_iter), float(cap))
    if status == _kernels.DIVERGED:
        raise NonStabilizable(f"Riccati iterates exceeded {cap:g} after {k} steps")
    if status == _kernels.EXHAUSTED:
        raise NoConvergence(f"Riccati iteration did not settle within {max_iter} steps")
    if not rho < 1.0:
        raise NonStabilizable(f"closed loop A + BK has spectral radius {rho:.6g}")
    return RiccatiSolution(P=P, K=K, avg_cost=float(np.trace(P)), iterations=k)


def solve_dlyap(L: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve ``S = L S L' + C`` for stable ``L``.

    Uses the vectorized form ``(I - L kron L) vec(S) = vec(C)``, which is exact
    and cheap at the dimensions used here.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = L.shape[0]
    if L.shape != (n, n) or C.shape != (n, n):
        raise DimensionMismatch(f"L {L.shape} and C {C.shape} must be square and equal")
    if spectral_radius(L) >= 1.0 - 1e-9:
        raise Unstable("Lyapunov equation needs spectral radius of L below one")
    return _kernels.lyapunov(np.ascontiguousarray(L), np.ascontiguousarray(C))


def avg_cost_gradient(theta: SystemParams, sol: RiccatiSolution) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``trace(P)`` given an already converged solution for ``theta``."""
    L = sol.closed_loop(theta)
    S = solve_dlyap(L, np.eye(theta.n))
    G = 2.0 * sol.P @ L @ S
    return G, G @ sol.K.T


def grad_avg_cost(theta: SystemParams, cost: CostParams, **dare_kwargs) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(d trace P / dA, d trace P / dB)``.

    By the envelope theorem the gain may be held fixed, so with ``L = A + BK``
    and ``S = L S L' + I`` the gradients are ``2 P L S`` and ``2 P L S K'``.
    """
    return avg_cost_gradient(theta, solve_dare(theta, cost, **dare_kwargs))


def spectral_radius(M: np.ndarray) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"spectral radius needs a square matrix, got {M.shape}")
    if M.shape[0] == 1:
        return abs(float(M[0, 0]))
    return float(_kernels.spectral_radius(np.ascontiguousarray(M)))
