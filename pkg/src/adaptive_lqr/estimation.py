"""Online regularized least squares and the confidence ellipsoid around its estimate.

Parameters are stored as ``theta`` of shape ``(n, n+m)`` acting as
``x_{t+1} = theta @ z_t`` with ``z_t = (x_t, u_t)``. The ellipsoid is
``{theta : trace((theta - theta_hat) Z (theta - theta_hat)') <= beta}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, InvalidDelta


@dataclass
class GramState:
    """Sufficient statistics of the regression ``x_{s+1} ~ theta z_s``.

    ``Z = lam I + sum z z'``, ``M = sum x_{s+1} z'``, ``sq = sum ||x_{s+1}||^2``
    and ``t`` is the number of samples absorbed.
    """

    n: int
    m: int
    lam: float = 1.0
    Z: np.ndarray = field(default=None)
    M: np.ndarray = field(default=None)
    sq: float = 0.0
    t: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("regularizer must be positive")
        p = self.n + self.m
        if self.Z is None:
            self.Z = self.lam * np.eye(p)
        if self.M is None:
            self.M = np.zeros((self.n, p))
        self._chol = None

    @property
    def p(self) -> int:
        return self.n + self.m

    def copy(self) -> "GramState":
        return GramState(self.n, self.m, self.lam, self.Z.copy(), self.M.copy(), self.sq, self.t)

    def update(self, z, x_next) -> "GramState":
        """Absorb one transition in place and return ``self``."""
        z = np.asarray(z, dtype=float).reshape(-1)
        x_next = np.asarray(x_next, dtype=float).reshape(-1)
        if z.shape[0] != self.p or x_next.shape[0] != self.n:
            raise DimensionMismatch(f"expected z in R^{self.p} and x_next in R^{self.n}")
        self.Z += np.outer(z, z)
        self.M += np.outer(x_next, z)
        self.sq += float(x_next @ x_next)
        self.t += 1
        self._chol = None
        return self

    def cholesky(self):
        """Lower Cholesky factor of ``Z`` in scipy ``cho_factor`` form, cached until the next update."""
        if self._chol is None:
            self._chol = cho_factor(self.Z, lower=True)
        return self._chol

    def logdet_ratio(self) -> float:
        """``log det(Z) - log det(lam I)``."""
        c, _ = self.cholesky()
        return float(2.0 * np.sum(np.log(np.diag(c))) - self.p * np.log(self.lam))

    def estimate(self) -> np.ndarray:
        """Regularized least-squares estimate ``theta_hat = M Z^{-1}``."""
        return cho_solve(self.cholesky(), self.M.T).T

    def squared_error(self, theta) -> float:
        """``V(theta) = sum_s ||x_{s+1} - theta z_s||^2`` from the stored statistics."""
        theta = self._check_theta(theta)
        G = self.Z - self.lam * np.eye(self.p)
        val = np.sum((theta @ G) * theta) - 2.0 * np.sum(theta * self.M) + self.sq
        return max(float(val), 0.0)

    def squared_error_grad(self, theta) -> np.ndarray:
        theta = self._check_theta(theta)
        G = self.Z - self.lam * np.eye(self.p)
        return 2.0 * (theta @ G - self.M)

    def regularized_error(self, theta) -> float:
        """``E(theta) = lam ||theta||_F^2 + V(theta)``."""
        theta = self._check_theta(theta)
        return self.lam * float(np.sum(theta**2)) + self.squared_error(theta)

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n, self.p):
            raise DimensionMismatch(f"theta must have shape {(self.n, self.p)}, got {theta.shape}")
        return theta


def update(state: GramState, z, x_next) -> GramState:
    return state.update(z, x_next)


def estimate(state: GramState) -> np.ndarray:
    return state.estimate()


def squared_error(state: GramState, theta) -> float:
    return state.squared_error(theta)


def beta_radius(state: GramState, delta: float, L: float = 1.0, c: float = 1.0) -> float:
    """Radius ``(n L sqrt(2 log(sqrt(det Z / det(lam I)) / delta)) + sqrt(lam) c)^2``.

    The determinant ratio is clamped at one from below.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    half_logdet = 0.5 * max(state.logdet_ratio(), 0.0)
    log_term = max(half_logdet - np.log(delta), 0.0)
    return float((state.n * L * np.sqrt(2.0 * log_term) + np.sqrt(state.lam) * c) ** 2)


@dataclass
class ConfidenceBall:
    center: np.ndarray
    weight: np.ndarray
    radius: float

    @classmethod
    def from_gram(cls, state: GramState, delta: float, L: float = 1.0, c: float = 1.0) -> "ConfidenceBall":
        return cls(state.estimate(), state.Z.copy(), beta_radius(state, delta, L, c))

    def weighted_distance(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.center.shape:
            raise DimensionMismatch(f"theta must have shape {self.center.shape}, got {theta.shape}")
        D = theta - self.center
        return float(np.sum((D @ self.weight) * D))

    def contains(self, theta, rtol: float = 0.0) -> bool:
        return self.weighted_distance(theta) <= self.radius * (1.0 + rtol)


def weighted_distance(ball: ConfidenceBall, theta) -> float:
    return ball.weighted_distance(theta)


def contains(ball: ConfidenceBall, theta) -> bool:
    return ball.contains(theta)
