"""Shared deterministic numerical kernels.

Dense matrix exponential (Pade 13 with scaling and squaring), classical RK4
integration on uniform grids, state-transition matrices, SVD-based numerical
rank, and composite Simpson quadrature.  Everything here is a pure function
of its inputs; all downstream modules build on these kernels so that results
are bit-reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "IntegrationBlowup",
    "GridError",
    "Trajectory",
    "OdeProblem",
    "expm",
    "integrate",
    "rk4_step",
    "transition_matrix",
    "numerical_rank",
    "simpson",
    "simpson_matrix",
]


class DimensionError(ValueError):
    """Raised when matrix/vector shapes are inconsistent."""


class IntegrationBlowup(RuntimeError):
    """Raised when an ODE sweep produces a non-finite value.

    Attributes:
        time: the grid time at which the blow-up was detected.
    """

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"non-finite state during integration at t={time}")


class GridError(ValueError):
    """Raised for invalid quadrature grids (even sample count, bad step)."""


@dataclass(frozen=True)
class Trajectory:
    """A sampled path: strictly increasing times, one state vector per node."""

    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or x.ndim != 2 or x.shape[0] != t.shape[0]:
            raise DimensionError("trajectory times/states shape mismatch")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def at_end(self) -> np.ndarray:
        return self.states[-1]

    def interp(self, t: float) -> np.ndarray:
        """Linear interpolation between grid nodes."""
        return np.array(
            [np.interp(t, self.times, self.states[:, k]) for k in range(self.dim)]
        )


@dataclass(frozen=True)
class OdeProblem:
    """An initial value problem dx/dt = rhs(t, x) on [t0, t1] with a fixed grid."""

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    x0: np.ndarray
    t1: float
    steps: int

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.dimension,):
            raise DimensionError("x0 length must equal dimension")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        object.__setattr__(self, "x0", x0)


# ---------------------------------------------------------------------------
# Matrix exponential
# ---------------------------------------------------------------------------

# Pade 13 numerator coefficients (denominator is the same with alternating signs).
_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)

# 1-norm threshold below which the order-13 approximant alone is accurate.
_THETA13 = 5.371920351148152


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring with a Pade 13 approximant."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expm requires a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("expm requires finite entries")
    n = M.shape[0]
    norm1 = np.linalg.norm(M, 1)
    s = 0
    if norm1 > _THETA13:
        s = int(np.ceil(np.log2(norm1 / _THETA13)))
    A = M / (2.0**s)

    b = _PADE13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6
        + b[5] * A4
        + b[3] * A2
        + b[1] * ident
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6
        + b[4] * A4
        + b[2] * A2
        + b[0] * ident
    )
    F = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        F = F @ F
    return F


# ---------------------------------------------------------------------------
# ODE integration (classical RK4, fixed uniform grid)
# ---------------------------------------------------------------------------


def rk4_step(rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(problem: OdeProblem) -> Trajectory:
    """Integrate an OdeProblem with classical RK4; returns all grid nodes."""
    h = (problem.t1 - problem.t0) / problem.steps
    times = problem.t0 + h * np.arange(problem.steps + 1)
    states = np.empty((problem.steps + 1, problem.dimension))
    x = np.asarray(problem.x0, dtype=float).copy()
    states[0] = x
    for k in range(problem.steps):
        x = rk4_step(problem.rhs, times[k], x, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowup(float(times[k + 1]))
        states[k + 1] = x
    # RK4 can accumulate a representable but astronomically large state just
    # before overflow; the finiteness check above is the only guard needed.
    if problem.t1 < problem.t0:
        order = np.argsort(times)
        return Trajectory(times[order], states[order])
    return Trajectory(times, states)


def transition_matrix(A, t: float, s: float, steps: int = 200) -> np.ndarray:
    """State-transition matrix R(t, s) with dR/dt = A(t) R, R(s, s) = I.

    `A` is either a constant square matrix (autonomous case, delegates to
    expm((t-s) A)) or a callable tau -> matrix.
    """
    if not callable(A):
        A = np.asarray(A, dtype=float)
        return expm((t - s) * A)
    n = np.asarray(A(s)).shape[0]
    if t == s:
        return np.eye(n)
    h = (t - s) / steps
    R = np.eye(n)

    def rhs(tau, Rflat):
        return (np.asarray(A(tau)) @ Rflat.reshape(n, n)).ravel()

    x = R.ravel()
    tau = s
    for k in range(steps):
        x = rk4_step(rhs, tau, x, h)
        tau = s + (k + 1) * h
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowup(tau)
    return x.reshape(n, n)


# ---------------------------------------------------------------------------
# Rank and quadrature
# ---------------------------------------------------------------------------


def numerical_rank(M: np.ndarray, rel_tol: float = 1e-9) -> int:
    """Number of singular values above rel_tol times the largest one."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))


def simpson(samples: Sequence[float], step: float) -> float:
    """Composite Simpson rule on a uniform grid with an odd sample count."""
    y = np.asarray(samples, dtype=float)
    if y.shape[0] < 3 or y.shape[0] % 2 == 0:
        raise GridError(f"Simpson needs an odd sample count >= 3, got {y.shape[0]}")
    if step <= 0:
        raise GridError("step must be positive")
    return float(step / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def simpson_matrix(samples: np.ndarray, step: float) -> np.ndarray:
    """Simpson rule applied entrywise to a stack of matrices (axis 0 is time)."""
    y = np.asarray(samples, dtype=float)
    if y.shape[0] < 3 or y.shape[0] % 2 == 0:
        raise GridError(f"Simpson needs an odd sample count >= 3, got {y.shape[0]}")
    if step <= 0:
        raise GridError("step must be positive")
    return step / 3.0 * (
        y[0] + y[-1] + 4.0 * y[1:-1:2].sum(axis=0) + 2.0 * y[2:-1:2].sum(axis=0)
    )
