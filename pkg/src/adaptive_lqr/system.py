"""Simulation of the true linear system with seeded Gaussian noise."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .riccati import CostParams, SystemParams

# Independent random streams derived from one trial seed. Each stream is a
# PCG64 generator seeded by SeedSequence(seed, spawn_key=(stream, *extra)),
# so adding a consumer never shifts the draws of another.
STREAM_NOISE = 0
STREAM_WARMUP = 1
STREAM_AGENT = 2
STREAM_RESTART = 3


def stream_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream, *extra))
    return np.random.Generator(np.random.PCG64(ss))


class NoiseModel:
    """i.i.d. standard Gaussian process noise in ``R^n`` drawn from a PCG64 stream.

    ``scale=0`` gives a noiseless model (used for deterministic tests).
    """

    def __init__(self, n: int, seed: int, scale: float = 1.0):
        if n < 1:
            raise ValueError("noise dimension must be positive")
        self.n = n
        self.seed = int(seed)
        self.scale = float(scale)
        self._rng = stream_rng(self.seed, STREAM_NOISE)

    def draw(self) -> np.ndarray:
        w = self._rng.standard_normal(self.n)
        return w * self.scale if self.scale != 1.0 else w


def draw_noise(model: NoiseModel) -> np.ndarray:
    return model.draw()


def step(true_params: SystemParams, x, u, w) -> np.ndarray:
    """One transition ``A x + B u + w``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    n, m = true_params.n, true_params.m
    if x.shape[0] != n or u.shape[0] != m or w.shape[0] != n:
        raise DimensionMismatch(f"expected x, w in R^{n} and u in R^{m}")
    return true_params.A @ x + true_params.B @ u + w


def stage_cost(x, u, cost: CostParams) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != cost.Q.shape[0] or u.shape[0] != cost.R.shape[0]:
        raise DimensionMismatch("state or input does not match cost dimensions")
    return float(x @ cost.Q @ x + u @ cost.R @ u)


@dataclass
class TrajectoryLog:
    """States ``x_0..x_T``, inputs ``u_0..u_{T-1}``, noises ``w_1..w_T`` and costs ``c_0..c_{T-1}``.

    ``noises[t]`` is the noise that produced ``states[t + 1]``.
    """

    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    noises: list = field(default_factory=list)
    costs: list = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)

    def append(self, u, w, x_next, c):
        self.inputs.append(u)
        self.noises.append(w)
        self.states.append(x_next)
        self.costs.append(c)

    def arrays(self):
        """``(X, U, W, c)`` as numpy arrays of shapes ``(T+1, n)``, ``(T, m)``, ``(T, n)``, ``(T,)``."""
        X = np.asarray(self.states, dtype=float)
        n = X.shape[1]
        U = np.asarray(self.inputs, dtype=float)
        W = np.asarray(self.noises, dtype=float)
        if U.size == 0:
            U = U.reshape(0, 0)
            W = W.reshape(0, n)
        return X, U, W, np.asarray(self.costs, dtype=float)

    def replay(self, true_params: SystemParams) -> np.ndarray:
        """Re-simulate the logged inputs and noises from ``x_0``."""
        xs = [np.asarray(self.states[0], dtype=float)]
        for u, w in zip(self.inputs, self.noises):
            xs.append(step(true_params, xs[-1], u, w))
        return np.asarray(xs)

    def to_csv(self) -> str:
        X, U, W, c = self.arrays()
        n = X.shape[1]
        m = U.shape[1] if U.ndim == 2 and U.shape[0] else 0
        header = ["t", *(f"x_{i}" for i in range(n)), *(f"u_{i}" for i in range(m)),
                  *(f"w_{i}" for i in range(n)), "cost"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for t in range(len(c)):
            writer.writerow([t, *map(fmt, X[t]), *map(fmt, U[t]), *map(fmt, W[t]), fmt(c[t])])
        # final state has no input, noise or cost attached
        writer.writerow([len(c), *map(fmt, X[-1]), *([""] * (m + n + 1))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrajectoryLog":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        n = sum(1 for h in header if h.startswith("x_"))
        m = sum(1 for h in header if h.startswith("u_"))
        log = cls()
        for row in body:
            log.states.append(np.array([float(v) for v in row[1:1 + n]]))
            if row[-1] == "":
                break
            log.inputs.append(np.array([float(v) for v in row[1 + n:1 + n + m]]))
            log.noises.append(np.array([float(v) for v in row[1 + n + m:1 + 2 * n + m]]))
            log.costs.append(float(row[-1]))
        return log


def fmt(v: float) -> str:
    """Serialize a float with 17 significant digits (round-trips float64 exactly)."""
    return "%.17g" % v


def warmup(
    true_params: SystemParams,
    cost: CostParams,
    model: NoiseModel,
    horizon: int = 10,
    input_rng: np.random.Generator | None = None,
) -> TrajectoryLog:
    """Drive the system from ``x_0 = 0`` with i.i.d. standard normal inputs.

    The inputs come from the warm-up stream of ``model.seed`` unless an explicit
    generator is given; the noise advances ``model``.
    """
    if horizon < 1:
        raise ValueError("warm-up horizon must be at least 1")
    if input_rng is None:
        input_rng = stream_rng(model.seed, STREAM_WARMUP)
    x = np.zeros(true_params.n)
    log = TrajectoryLog(states=[x])
    for _ in range(horizon):
        u = input_rng.standard_normal(true_params.m)
        c = stage_cost(x, u, cost)
        w = model.draw()
        x = step(true_params, x, u, w)
        log.append(u, w, x, c)
    return log
