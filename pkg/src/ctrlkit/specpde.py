"""Spectral control of 1D heat and wave equations on (0, L).

Everything lives on the Dirichlet sine basis: heat and wave evolution are
diagonal, observability functionals reduce to trigonometric quadrature with
closed-form space integrals, the wave boundary-control Gramian is assembled
mode by mode, the heat moment-method control uses an extended-precision
biorthogonal family, and the semilinear heat equation is stabilized through
its finite-mode Galerkin truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import mpmath as mp
import numpy as np

from .numcore import DimensionError, expm, rk4_step, simpson
from .lincontrol import LtiSystem
from .stabilize import lyapunov_solve, pole_place

__all__ = [
    "SineBasis",
    "WaveState",
    "IntervalUnion",
    "SemilinearPlant",
    "IllPosedError",
    "KTooLargeError",
    "heat_evolve",
    "wave_evolve",
    "wave_energy",
    "boundary_observation_energy",
    "sin2_mass",
    "periago_bound",
    "optimal_interval_union",
    "internal_wave_observation",
    "hum_wave_boundary",
    "HumWaveResult",
    "biorthogonal_family",
    "moment_heat_control",
    "MomentControlResult",
    "damping_decay_experiment",
    "DampingResult",
    "semilinear_stabilize",
    "SemilinearResult",
]


class IllPosedError(RuntimeError):
    """Raised when a control Gramian is numerically non-invertible.

    Attributes:
        min_singular_value: smallest singular value of the offending Gramian.
    """

    def __init__(self, message, min_singular_value):
        self.min_singular_value = min_singular_value
        super().__init__(message)


class KTooLargeError(RuntimeError):
    """Raised when a biorthogonal family exceeds feasible precision.

    Attributes:
        feasible_K: the largest family size whose Gram system is solvable.
    """

    def __init__(self, message, feasible_K):
        self.feasible_K = feasible_K
        super().__init__(message)


@dataclass(frozen=True)
class SineBasis:
    """Dirichlet sine basis of (0, L): modes sin(j pi x / L), j = 1..N.

    mu holds the (positive convention) Dirichlet-Laplacian eigenvalues
    (j pi / L)^2; norm is the L2 normalization factor sqrt(2/L).
    """

    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0 or self.N < 1:
            raise ValueError("need L > 0 and N >= 1")

    @property
    def j(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @property
    def mu(self) -> np.ndarray:
        return (self.j * np.pi / self.L) ** 2

    @property
    def omega(self) -> np.ndarray:
        """Wave angular frequencies j pi / L."""
        return self.j * np.pi / self.L

    @property
    def norm(self) -> float:
        return math.sqrt(2.0 / self.L)


@dataclass(frozen=True)
class WaveState:
    """Truncated wave data in the (a, b) Fourier amplitude convention.

    The free solution is psi(t, x) = sum_k (L / k pi) (a_k cos(k pi t / L)
    + b_k sin(k pi t / L)) sin(k pi x / L); a holds the position amplitudes,
    b the velocity-related ones.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise DimensionError("a and b must be equal-length vectors")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def N(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint sorted open subintervals of (0, L)."""

    intervals: tuple

    def __init__(self, intervals: Sequence[Sequence[float]]):
        ivs = tuple(tuple(map(float, iv)) for iv in intervals)
        for lo, hi in ivs:
            if not lo < hi:
                raise ValueError(f"degenerate interval ({lo}, {hi})")
        for (l0, h0), (l1, h1) in zip(ivs, ivs[1:]):
            if h0 > l1:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", ivs)

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


def heat_evolve(basis: SineBasis, coeffs, t: float) -> np.ndarray:
    """Heat semigroup on coefficients: multiply mode j by exp(-mu_j t)."""
    if t < 0:
        raise ValueError("the heat semigroup is not reversible: t must be >= 0")
    c = np.asarray(coeffs, dtype=float)
    return c * np.exp(-basis.mu[: c.shape[0]] * t)


def wave_evolve(basis: SineBasis, s: WaveState, t: float) -> WaveState:
    """Wave group: rotation by angle j pi t / L in each (a_j, b_j) plane."""
    th = basis.omega[: s.N] * t
    co, si = np.cos(th), np.sin(th)
    return WaveState(s.a * co + s.b * si, -s.a * si + s.b * co)


def wave_energy(basis: SineBasis, s: WaveState) -> float:
    """||psi(0)||^2_{H^1_0} + ||dt psi(0)||^2_{L^2} = (L/2) sum(a^2 + b^2)."""
    return 0.5 * basis.L * float(np.sum(s.a**2) + np.sum(s.b**2))


# ---------------------------------------------------------------------------
# Observability functionals
# ---------------------------------------------------------------------------


def boundary_observation_energy(
    basis: SineBasis, s: WaveState, T: float, time_steps: int = 2000
) -> float:
    """int_0^T |dx psi(t, L)|^2 dt with the boundary trace computed modally.

    dx psi(t, L) = sum_k (-1)^k (a_k cos(k pi t / L) + b_k sin(k pi t / L)).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if time_steps % 2 != 0:
        time_steps += 1
    sign = (-1.0) ** basis.j[: s.N]
    times = np.linspace(0.0, T, time_steps + 1)
    th = np.outer(times, basis.omega[: s.N])
    trace = (np.cos(th) * (sign * s.a) + np.sin(th) * (sign * s.b)).sum(axis=1)
    return simpson(trace**2, T / time_steps)


def sin2_mass(omega: IntervalUnion, j: int, basis: SineBasis) -> float:
    """int_omega sin^2(j pi x / L) dx by the closed-form antiderivative."""
    L = basis.L
    w = 2.0 * j * np.pi / L

    def anti(x):
        return 0.5 * x - np.sin(w * x) / (2.0 * w)

    return float(sum(anti(hi) - anti(lo) for lo, hi in omega.intervals))


def periago_bound(measure: float, L: float) -> float:
    """Lower bound (1/2)(|omega| - (L/pi) sin(pi |omega| / L)) on sin^2 masses."""
    return 0.5 * (measure - (L / np.pi) * np.sin(np.pi * measure / L))


def optimal_interval_union(j: int, measure: float, L: float) -> IntervalUnion:
    """The measure-|omega| set on which int sin^2(j pi x/L) attains the bound.

    Neighborhoods of the j+1 zeros of sin(j pi x / L): half-width measure/2j
    around each interior zero, and measure/2j stubs at both endpoints.
    """
    d = measure / (2.0 * j)
    ivs = [(0.0, d)]
    for k in range(1, j):
        c = k * L / j
        ivs.append((c - d, c + d))
    ivs.append((L - d, L))
    return IntervalUnion(ivs)


def _sin_product_integrals(omega: IntervalUnion, basis: SineBasis, N: int) -> np.ndarray:
    """S[j-1, k-1] = int_omega sin(j pi x/L) sin(k pi x/L) dx, closed form."""
    L = basis.L
    S = np.empty((N, N))
    for j in range(1, N + 1):
        for k in range(j, N + 1):
            if j == k:
                val = sin2_mass(omega, j, basis)
            else:
                wm = (j - k) * np.pi / L
                wp = (j + k) * np.pi / L
                val = 0.0
                for lo, hi in omega.intervals:
                    val += 0.5 * (
                        (np.sin(wm * hi) - np.sin(wm * lo)) / wm
                        - (np.sin(wp * hi) - np.sin(wp * lo)) / wp
                    )
            S[j - 1, k - 1] = S[k - 1, j - 1] = val
    return S


def internal_wave_observation(
    basis: SineBasis, s: WaveState, omega: IntervalUnion, T: float, steps: int = 2000
) -> float:
    """int_0^T int_omega phi(t, x)^2 dx dt for the internal-observation solution.

    Here phi(t, x) = sum_j (a_j cos(j pi t/L) + b_j sin(j pi t/L))
    sin(j pi x/L); the space integral is closed-form, time by Simpson.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if steps % 2 != 0:
        steps += 1
    N = s.N
    S = _sin_product_integrals(omega, basis, N)
    times = np.linspace(0.0, T, steps + 1)
    th = np.outer(times, basis.omega[:N])
    C = np.cos(th) * s.a + np.sin(th) * s.b  # modal amplitudes per node
    vals = np.einsum("ij,jk,ik->i", C, S, C)
    return simpson(vals, T / steps)


# ---------------------------------------------------------------------------
# HUM for the boundary-controlled wave
# ---------------------------------------------------------------------------


def _wave_control_operator(basis: SineBasis, N: int):
    """Input vector D of the boundary-controlled truncated wave in (a, b) form.

    With state Z = (a, b), the controlled system is dZ/dt = A Z + D u where
    a_j' = omega_j b_j and b_j' = -omega_j a_j + d_j u,
    d_j = (2/L)(j pi / L)(-1)^(j+1).
    """
    j = np.arange(1, N + 1)
    d = (2.0 / basis.L) * (j * np.pi / basis.L) * (-1.0) ** (j + 1)
    D = np.zeros(2 * N)
    D[N:] = d
    return D


def _wave_rotation(basis: SineBasis, N: int, t: float) -> np.ndarray:
    """Free group S(t) on Z = (a, b) as a block matrix of mode rotations."""
    th = basis.omega[:N] * t
    co, si = np.cos(th), np.sin(th)
    S = np.zeros((2 * N, 2 * N))
    S[:N, :N] = np.diag(co)
    S[:N, N:] = np.diag(si)
    S[N:, :N] = np.diag(-si)
    S[N:, N:] = np.diag(co)
    return S


@dataclass
class HumWaveResult:
    z: WaveState  # the HUM minimizer (adjoint datum psi)
    times: np.ndarray
    control: np.ndarray  # u(t) samples
    endpoint: WaveState
    endpoint_error: float
    gramian: np.ndarray
    condition_number: float
    cost: float  # <G z, z>
    control_l2_sq: float  # Simpson of u^2 on the same grid


def hum_wave_boundary(
    basis: SineBasis,
    y0: WaveState,
    y1: WaveState,
    T: float,
    steps: int = 2000,
    force: bool = False,
    cond_limit: float = 1e12,
) -> HumWaveResult:
    """Minimal-L2 boundary control steering the truncated wave y0 -> y1.

    Assembles the 2N x 2N Gramian G = int_0^T S(T-t) D D' S(T-t)' dt on the
    (a, b) coefficients, solves G z = y1 - S(T) y0, and applies
    u(t) = D' S(T-t)' z.  The same Simpson grid is reused for the Gramian,
    the control norm, and the re-simulated endpoint, so those identities are
    exact up to round-off.
    """
    N = y0.N
    if y1.N != N:
        raise DimensionError("y0 and y1 must have the same mode count")
    if T < 2.0 * basis.L and not force:
        raise IllPosedError(
            f"T={T} < 2L={2 * basis.L}: uniform observability fails; "
            "pass force=True to attempt anyway",
            float("nan"),
        )
    if steps % 2 != 0:
        steps += 1
    D = _wave_control_operator(basis, N)
    times = np.linspace(0.0, T, steps + 1)
    h = T / steps
    # Columns w_i = S(T - t_i) D of the observation map.
    w = np.empty((steps + 1, 2 * N))
    for i, t in enumerate(times):
        w[i] = _wave_rotation(basis, N, T - t) @ D
    wts = np.ones(steps + 1)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    wts *= h / 3.0
    G = (w.T * wts) @ w
    G = 0.5 * (G + G.T)
    sv = np.linalg.svd(G, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if cond > cond_limit:
        raise IllPosedError(
            f"wave Gramian condition number {cond:.3e} exceeds {cond_limit:.1e}",
            float(sv[-1]),
        )
    Z0 = np.concatenate([y0.a, y0.b])
    Z1 = np.concatenate([y1.a, y1.b])
    target = Z1 - _wave_rotation(basis, N, T) @ Z0
    z = np.linalg.solve(G, target)
    control = w @ z
    endpoint_vec = _wave_rotation(basis, N, T) @ Z0 + (w.T * wts) @ control
    endpoint = WaveState(endpoint_vec[:N], endpoint_vec[N:])
    return HumWaveResult(
        z=WaveState(z[:N], z[N:]),
        times=times,
        control=control,
        endpoint=endpoint,
        endpoint_error=float(np.linalg.norm(endpoint_vec - Z1)),
        gramian=G,
        condition_number=cond,
        cost=float(z @ G @ z),
        control_l2_sq=simpson(control**2, h),
    )


# ---------------------------------------------------------------------------
# Moment method for the heat equation
# ---------------------------------------------------------------------------


def biorthogonal_family(exponents: Sequence[float], T: float, K: int, dps: int = 80):
    """Family theta^k(t) = sum_i c_ik exp(-mu_i t) biorthogonal to exp(-mu_j t).

    Solves the K x K exponential Gram system in mpmath working precision
    (the condition number grows super-exponentially in K).  Returns the
    mpmath coefficient matrix (column k holds theta^k) and the Gram
    condition number as a float.
    """
    mus = [mp.mpf(x) for x in exponents]
    if K > len(mus):
        raise DimensionError("K exceeds the number of exponents")
    if len(set(float(m) for m in mus)) != len(mus):
        raise ValueError("exponents must be distinct")
    with mp.workdps(dps):
        Tm = mp.mpf(T)

        def gram(KK):
            M = mp.matrix(KK, KK)
            for i in range(KK):
                for j in range(KK):
                    s = mus[i] + mus[j]
                    M[i, j] = (1 - mp.exp(-s * Tm)) / s
            return M

        M = gram(K)
        sv = mp.svd_r(M, compute_uv=False)
        cond = float(sv[0] / sv[K - 1]) if sv[K - 1] > 0 else float("inf")
        if not math.isfinite(cond) or cond > mp.mpf(10) ** (dps - 15):
            feasible = 0
            for KK in range(K - 1, 0, -1):
                svk = mp.svd_r(gram(KK), compute_uv=False)
                ck = svk[0] / svk[KK - 1] if svk[KK - 1] > 0 else mp.inf
                if ck < mp.mpf(10) ** (dps - 15):
                    feasible = KK
                    break
            raise KTooLargeError(
                f"Gram condition {cond:.3e} exceeds precision; largest feasible K={feasible}",
                feasible,
            )
        C = M**-1  # columns are the biorthogonal coefficient vectors
        return C, cond


@dataclass
class MomentControlResult:
    times: np.ndarray
    xs: np.ndarray
    u_field: np.ndarray  # u(t_i, x_j)
    mode_coeffs: Callable  # t -> per-mode control coefficients g_k(t)
    final_modes: np.ndarray  # y_j(T) after re-simulation, j = 1..N
    max_final: float
    denominators: np.ndarray


def moment_heat_control(
    basis: SineBasis,
    omega: IntervalUnion,
    y0_coeffs,
    T: float,
    N: int,
    steps: int = 4000,
    space_nodes: int = 201,
) -> MomentControlResult:
    """Null control of the first N heat modes on (0, pi) by the moment method.

    u(t, x) = -sum_k a_k exp(-k^2 T) theta_T^k(T - t) sin(k x)
    / int_omega sin^2(k y) dy, with the paper's projection convention
    y_j' = -j^2 y_j + int_omega u(t, x) sin(j x) dx.  The controlled system
    is re-simulated to report the surviving mode amplitudes at T.
    """
    if abs(basis.L - np.pi) > 1e-12:
        raise ValueError("the moment construction uses the L = pi convention")
    a0 = np.asarray(y0_coeffs, dtype=float)
    if a0.shape[0] < N:
        raise DimensionError("y0_coeffs must cover the first N modes")
    mus = [float(k * k) for k in range(1, N + 1)]
    C, _cond = biorthogonal_family(mus, T, N)
    if omega.measure <= 0.0:
        raise ValueError("omega must have positive measure")
    denom = np.array([sin2_mass(omega, k, basis) for k in range(1, N + 1)])
    S = _sin_product_integrals(omega, basis, N)  # int_omega sin(jx) sin(kx) dx

    # Biorthogonal coefficients in float64: the K <= 6 families used here lose
    # only a few digits to cancellation, so stage-time evaluation stays exact
    # enough for the RK4 re-simulation to keep its fourth order.
    Cf = np.array([[float(C[i, k]) for k in range(N)] for i in range(N)])
    mu_arr = np.array(mus)
    scale = -a0[:N] * np.exp(-mu_arr * T) / denom

    def mode_coeffs(t: float) -> np.ndarray:
        """g_k(t): coefficient of sin(k x) in u(t, .)."""
        return scale * (np.exp(-mu_arr * (T - t)) @ Cf)

    if steps % 2 != 0:
        steps += 1
    times = np.linspace(0.0, T, steps + 1)
    g_samples = np.array([mode_coeffs(t) for t in times])

    # Re-simulate y_j' = -mu_j y_j + sum_k S[j,k] g_k(t) with RK4, evaluating
    # the control coefficients exactly at every stage time.
    y = a0[:N].astype(float).copy()
    h = T / steps
    for i in range(steps):
        t = times[i]
        y = rk4_step(lambda tt, yy: -mu_arr * yy + S @ mode_coeffs(tt), t, y, h)
    xs = np.linspace(0.0, basis.L, space_nodes)
    sines = np.sin(np.outer(xs, np.arange(1, N + 1)))
    u_field = g_samples @ sines.T
    return MomentControlResult(
        times=times,
        xs=xs,
        u_field=u_field,
        mode_coeffs=mode_coeffs,
        final_modes=y,
        max_final=float(np.max(np.abs(y))),
        denominators=denom,
    )


# ---------------------------------------------------------------------------
# Damped wave: observability vs exponential decay
# ---------------------------------------------------------------------------


@dataclass
class DampingResult:
    delta: float
    C1: float
    observability_value: float
    times: np.ndarray
    energy: np.ndarray


def damping_decay_experiment(
    basis: SineBasis,
    damping: Optional[IntervalUnion],
    T_fit: float,
    samples: int = 400,
    y0: Optional[WaveState] = None,
) -> DampingResult:
    """Energy decay of the internally damped truncated wave.

    Simulates dZ/dt = M Z with M the Galerkin matrix of the damped wave
    (damping operator B_jk = (2/L) int_omega sin sin), steps with the exact
    matrix exponential of M, fits log E(t) by least squares for delta, and
    reports C1 = max_t E(t) e^(delta t) / E(0).  The observability value is
    the conservative integral int_0^T ||B^(1/2) dt phi||^2 dt.
    """
    N = basis.N
    if y0 is None:
        y0 = WaveState(np.ones(N), np.zeros(N))
    if samples % 2 != 0:
        samples += 1
    om = basis.omega
    M = np.zeros((2 * N, 2 * N))
    M[:N, N:] = np.diag(om)
    M[N:, :N] = np.diag(-om)
    if damping is not None and damping.intervals:
        B = (2.0 / basis.L) * _sin_product_integrals(damping, basis, N)
    else:
        B = np.zeros((N, N))
    M[N:, N:] = -B
    h = T_fit / samples
    step = expm(h * M)
    Z = np.empty((samples + 1, 2 * N))
    Z[0] = np.concatenate([y0.a, y0.b])
    for i in range(samples):
        Z[i + 1] = step @ Z[i]
    times = h * np.arange(samples + 1)
    energy = 0.5 * np.sum(Z**2, axis=1)
    if damping is not None and damping.intervals:
        logs = np.log(energy)
        slope, _ = np.polyfit(times, logs, 1)
        delta = -float(slope)
        C1 = float(np.max(energy * np.exp(delta * times)) / energy[0])
    else:
        delta = 0.0
        C1 = 1.0
    # Conservative observation integral on the undamped flow from the same data.
    cons = np.empty(samples + 1)
    for i, t in enumerate(times):
        s = wave_evolve(basis, y0, t)
        cons[i] = 0.5 * basis.L * float(s.b @ B @ s.b)
    obs = simpson(cons, h)
    return DampingResult(delta, C1, obs, times, energy)


# ---------------------------------------------------------------------------
# Semilinear heat stabilization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemilinearPlant:
    """1D semilinear heat plant dt y = dxx y + f(y), y(t, L) = u(t).

    n is the stabilized (finite-mode) count, N_sim the Galerkin simulation
    size, gamma the weight of the finite-mode block in the composite
    Lyapunov function.
    """

    L: float
    f: Callable[[float], float]
    f_prime_0: float
    n: int
    N_sim: int
    gamma: float

    def __post_init__(self):
        if self.N_sim < self.n or self.n < 1:
            raise ValueError("need N_sim >= n >= 1")
        if abs(float(self.f(0.0))) > 1e-12:
            raise ValueError("nonlinearity must satisfy f(0) = 0")


def semilinear_defaults(L: float, f, f_prime_0: float, gamma: Optional[float] = None):
    """Default mode counts: all unstable modes plus two; gamma scaled by |f'(0)|."""
    mu = lambda j: (j * np.pi / L) ** 2
    unstable = 0
    while f_prime_0 - mu(unstable + 1) > 0:
        unstable += 1
    n = unstable + 2
    if gamma is None:
        gamma = 10.0 * max(1.0, abs(f_prime_0))
    return n, max(2 * n, 8), gamma


@dataclass
class SemilinearResult:
    K: np.ndarray
    P: np.ndarray
    A_n: np.ndarray
    B_n: np.ndarray
    a: np.ndarray
    b: np.ndarray
    times: np.ndarray
    u: np.ndarray
    z: np.ndarray  # shape (nodes, N_sim)
    v: np.ndarray
    V: np.ndarray


def semilinear_matrices(plant: SemilinearPlant):
    """The finite-mode model X_n = (u, z_1..z_n): X' = A_n X + B_n v.

    a_j = (f'(0)/L) int x e_j, b_j = -(1/L) int x e_j, lambda_j = f'(0)-mu_j;
    A_n has the a_j in its first column, the lambda_j on the diagonal, and a
    zero first row (u' = v); B_n = (1, b_1, ..., b_n)^T.
    """
    L = plant.L
    n = plant.n
    j = np.arange(1, n + 1)
    mu = (j * np.pi / L) ** 2
    lam = plant.f_prime_0 - mu
    # int_0^L x e_j dx with e_j = sqrt(2/L) sin(j pi x / L).
    I = math.sqrt(2.0 / L) * L**2 * (-1.0) ** (j + 1) / (j * np.pi)
    a = plant.f_prime_0 / L * I
    b = -I / L
    A = np.zeros((n + 1, n + 1))
    A[1:, 0] = a
    A[1:, 1:] = np.diag(lam)
    B = np.concatenate([[1.0], b]).reshape(n + 1, 1)
    return A, B, a, b, lam


def semilinear_stabilize(
    plant: SemilinearPlant,
    y0_coeffs,
    T_sim: float,
    steps: int = 2000,
    space_nodes: int = 201,
) -> SemilinearResult:
    """Finite-mode boundary stabilization of the semilinear heat equation.

    Pole-places the (n+1)-dimensional model at -1 (all multiplicities),
    solves the Lyapunov equation for the closed loop, then simulates the
    N_sim-mode Galerkin truncation of the true nonlinear system under
    v = K X_n, u' = v, u(0) = 0 (z = y - (x/L) u substitution), recording
    the composite Lyapunov function V = gamma X'PX - (1/2) sum lambda_j z_j^2.
    """
    A, B, a, b, lam_n = semilinear_matrices(plant)
    n = plant.n
    target = np.poly(-np.ones(n + 1))  # (s+1)^(n+1)
    K = pole_place(LtiSystem(A, B), target)
    Krow = np.asarray(K).ravel()
    P = lyapunov_solve(A + B @ K)

    Ns = plant.N_sim
    L = plant.L
    jj = np.arange(1, Ns + 1)
    mu = (jj * np.pi / L) ** 2
    lam_all = plant.f_prime_0 - mu
    I_all = math.sqrt(2.0 / L) * L**2 * (-1.0) ** (jj + 1) / (jj * np.pi)
    b_all = -I_all / L
    if space_nodes % 2 == 0:
        space_nodes += 1
    xs = np.linspace(0.0, L, space_nodes)
    E = math.sqrt(2.0 / L) * np.sin(np.outer(xs, jj) * np.pi / L)  # e_j on grid
    hx = L / (space_nodes - 1)
    wts = np.ones(space_nodes)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    wts *= hx / 3.0
    f_vec = np.vectorize(plant.f)

    z0 = np.zeros(Ns)
    y0_coeffs = np.asarray(y0_coeffs, dtype=float)
    z0[: y0_coeffs.shape[0]] = y0_coeffs

    def rhs(t, state):
        u = state[0]
        z = state[1:]
        X = np.concatenate([[u], z[:n]])
        v = float(Krow @ X)
        y_grid = E @ z + (xs / L) * u
        fz = (E.T * wts) @ f_vec(y_grid)  # <f(y), e_j>
        dz = -mu * z + fz + b_all * v
        return np.concatenate([[v], dz])

    # Explicit RK4 stability for the fastest mode requires h < 2.78/mu_max;
    # refine the requested grid if the simulation size makes it stiffer.
    steps = max(steps, int(np.ceil(T_sim * float(mu[-1]) / 2.5)))
    h = T_sim / steps
    times = h * np.arange(steps + 1)
    states = np.empty((steps + 1, Ns + 1))
    states[0] = np.concatenate([[0.0], z0])
    for i in range(steps):
        states[i + 1] = rk4_step(rhs, times[i], states[i], h)
    u_samples = states[:, 0]
    z_samples = states[:, 1:]
    v_samples = np.array(
        [float(Krow @ np.concatenate([[s[0]], s[1 : n + 1]])) for s in states]
    )
    V = np.array(
        [
            plant.gamma
            * float(
                np.concatenate([[s[0]], s[1 : n + 1]])
                @ P
                @ np.concatenate([[s[0]], s[1 : n + 1]])
            )
            - 0.5 * float(lam_all @ s[1:] ** 2)
            for s in states
        ]
    )
    return SemilinearResult(
        K=K,
        P=P,
        A_n=A,
        B_n=B,
        a=a,
        b=b,
        times=times,
        u=u_samples,
        z=z_samples,
        v=v_samples,
        V=V,
    )
