"""Optimal control: finite-horizon LQ via Riccati, tracking, and PMP shooting.

The LQ path integrates the matrix Riccati equation backward and returns the
optimal state feedback.  The shooting path integrates the Hamiltonian system
of the maximum principle forward with a pluggable Hamiltonian maximizer and
drives the terminal/transversality/free-time residuals to zero with a damped
Newton iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numcore import DimensionError, Trajectory, rk4_step, simpson
from .lincontrol import ControlLaw, LtiSystem, LtvSystem, _as_callables

__all__ = [
    "LqProblem",
    "RiccatiSolution",
    "RiccatiBlowup",
    "OcProblem",
    "Extremal",
    "ShootingError",
    "riccati_solve",
    "lq_feedback",
    "lq_cost",
    "tracking_gains",
    "pmp_shoot",
    "hamiltonian_maximizer_box",
    "hamiltonian_maximizer_ball",
    "hamiltonian_maximizer_unconstrained",
    "check_extremal",
]


class RiccatiBlowup(RuntimeError):
    """Raised when the backward Riccati sweep exceeds the norm guard."""


class ShootingError(RuntimeError):
    """Raised when the shooting Newton iteration fails to converge.

    Attributes:
        residual_history: norms of the residual across accepted iterates.
    """

    def __init__(self, message, residual_history):
        self.residual_history = list(residual_history)
        super().__init__(message)


# ---------------------------------------------------------------------------
# LQ / Riccati
# ---------------------------------------------------------------------------


def _mat_fun(M):
    """Accept either a constant matrix or a callable t -> matrix."""
    if callable(M):
        return lambda t: np.atleast_2d(np.asarray(M(t), dtype=float))
    Mc = np.atleast_2d(np.asarray(M, dtype=float))
    return lambda t: Mc


@dataclass(frozen=True)
class LqProblem:
    """Minimize int_0^T x'W x + u'U u dt + x(T)'Q x(T) subject to dx = Ax + Bu."""

    sys: object  # LtiSystem | LtvSystem
    W: object  # matrix or t -> matrix, PSD
    U: object  # matrix or t -> matrix, PD
    Q: np.ndarray
    T: float


@dataclass(frozen=True)
class RiccatiSolution:
    grid: np.ndarray
    E: np.ndarray  # shape (nodes, n, n), symmetric at every node

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of E between grid nodes."""
        g = self.grid
        if t < g[0] - 1e-9 or t > g[-1] + 1e-9:
            raise ValueError(f"t={t} outside the Riccati grid [{g[0]}, {g[-1]}]")
        t = min(max(t, g[0]), g[-1])
        i = min(int(np.searchsorted(g, t, side="right")) - 1, len(g) - 2)
        w = (t - g[i]) / (g[i + 1] - g[i])
        return (1.0 - w) * self.E[i] + w * self.E[i + 1]


def _riccati_sweep(Afun, Bfun, Wfun, Uinvfun, Q, T, steps):
    n = Q.shape[0]
    grid = np.linspace(0.0, T, steps + 1)
    E = np.empty((steps + 1, n, n))
    E[-1] = -Q

    def rhs(t, Eflat):
        Em = Eflat.reshape(n, n)
        A = Afun(t)
        B = Bfun(t)
        dE = Wfun(t) - A.T @ Em - Em @ A - Em @ B @ Uinvfun(t) @ B.T @ Em
        return dE.ravel()

    h = T / steps
    x = E[-1].ravel().copy()
    for k in range(steps, 0, -1):
        x = rk4_step(rhs, grid[k], x, -h)
        Em = x.reshape(n, n)
        Em = 0.5 * (Em + Em.T)
        if np.linalg.norm(Em) > 1e8 or not np.all(np.isfinite(Em)):
            raise RiccatiBlowup(f"Riccati sweep blew up near t={grid[k - 1]:.6g}")
        E[k - 1] = Em
        x = Em.ravel()
    return grid, E


def riccati_solve(p: LqProblem, steps: int = 2000) -> RiccatiSolution:
    """Backward RK4 sweep of E' = W - A'E - EA - EBU^-1B'E, E(T) = -Q."""
    Afun, Bfun, _, n = _as_callables(p.sys)
    Wfun = _mat_fun(p.W)
    Ufun = _mat_fun(p.U)
    Uinvfun = lambda t: np.linalg.inv(Ufun(t))
    Q = np.atleast_2d(np.asarray(p.Q, dtype=float))
    grid, E = _riccati_sweep(Afun, Bfun, Wfun, Uinvfun, Q, p.T, steps)
    return RiccatiSolution(grid, E)


def lq_feedback(sol: RiccatiSolution, p: LqProblem) -> ControlLaw:
    """Optimal LQ state feedback u(t) = U(t)^-1 B(t)^T E(t) x(t)."""
    _, Bfun, _, _ = _as_callables(p.sys)
    Ufun = _mat_fun(p.U)

    def law(t, x):
        B = Bfun(t)
        return np.linalg.solve(Ufun(t), B.T @ sol.at(t) @ x)

    return ControlLaw("feedback", law)


def lq_cost(p: LqProblem, law: ControlLaw, x0, steps: int = 2000):
    """Simulate the controlled plant and evaluate the LQ cost by Simpson.

    Returns (cost, trajectory, control samples).
    """
    from .lincontrol import simulate_linear

    if steps % 2 != 0:
        steps += 1
    Wfun = _mat_fun(p.W)
    Ufun = _mat_fun(p.U)
    traj = simulate_linear(p.sys, law, x0, p.T, steps)
    running = np.empty(steps + 1)
    controls = []
    for i, (t, x) in enumerate(zip(traj.times, traj.states)):
        u = law(t, x)
        controls.append(u)
        running[i] = float(x @ Wfun(t) @ x + u @ Ufun(t) @ u)
    Q = np.atleast_2d(np.asarray(p.Q, dtype=float))
    xT = traj.at_end()
    cost = simpson(running, p.T / steps) + float(xT @ Q @ xT)
    return cost, traj, np.asarray(controls)


def _central4_vec(fun, z, k, h):
    e = np.zeros_like(z)
    e[k] = 1.0
    return (
        -fun(z + 2 * h * e)
        + 8.0 * fun(z + h * e)
        - 8.0 * fun(z - h * e)
        + fun(z - 2 * h * e)
    ) / (12.0 * h)


def tracking_gains(
    f: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    m: int,
    xi: Trajectory,
    W,
    U,
    Q,
    steps: int = 1000,
):
    """LQ tracking of a reference trajectory xi of dx = f(t, x, u).

    Linearizes f along (xi(t), 0), integrates the Riccati equation backward,
    then the affine correction h backward (h' = -A'h - E(f(t,xi,0) - xi')
    - E B U^-1 B' h, h(T) = 0).  Returns (RiccatiSolution, h grid values,
    feedback law u(t, x) = U^-1 B' (E (x - xi) + h)).
    """
    n = xi.dim
    T = float(xi.times[-1])
    Wfun = _mat_fun(W)
    Ufun = _mat_fun(U)
    Qm = np.atleast_2d(np.asarray(Q, dtype=float))
    xi_dot = np.gradient(xi.states, xi.times, axis=0)

    def jacobians(t):
        x = xi.interp(t)
        u0 = np.zeros(m)
        A = np.empty((n, n))
        for k in range(n):
            h = 1e-5 * max(1.0, abs(x[k]))
            A[:, k] = _central4_vec(
                lambda z: np.asarray(f(t, z, u0), dtype=float), x, k, h
            )
        B = np.empty((n, m))
        for k in range(m):
            B[:, k] = _central4_vec(
                lambda w: np.asarray(f(t, x, w), dtype=float), u0, k, 1e-5
            )
        return A, B

    Afun = lambda t: jacobians(t)[0]
    Bfun = lambda t: jacobians(t)[1]
    Uinvfun = lambda t: np.linalg.inv(Ufun(t))
    grid, E = _riccati_sweep(Afun, Bfun, Wfun, Uinvfun, Qm, T, steps)
    sol = RiccatiSolution(grid, E)

    def forcing(t):
        x = xi.interp(t)
        xd = np.array([np.interp(t, xi.times, xi_dot[:, k]) for k in range(n)])
        return np.asarray(f(t, x, np.zeros(m)), dtype=float) - xd

    def h_rhs(t, h):
        A, B = jacobians(t)
        Et = sol.at(t)
        return -A.T @ h - Et @ forcing(t) - Et @ B @ Uinvfun(t) @ B.T @ h

    hstep = T / steps
    hvals = np.empty((steps + 1, n))
    hvals[-1] = 0.0
    hv = np.zeros(n)
    for k in range(steps, 0, -1):
        hv = rk4_step(h_rhs, grid[k], hv, -hstep)
        hvals[k - 1] = hv

    def law(t, x):
        A, B = jacobians(t)
        i = min(int(np.searchsorted(grid, min(max(t, 0.0), T), side="right")) - 1, steps - 1)
        w = (t - grid[i]) / (grid[i + 1] - grid[i])
        ht = (1.0 - w) * hvals[i] + w * hvals[i + 1]
        return np.linalg.solve(Ufun(t), B.T @ (sol.at(t) @ (x - xi.interp(t)) + ht))

    return sol, hvals, ControlLaw("feedback", law)


# ---------------------------------------------------------------------------
# PMP shooting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OcProblem:
    """A Pontryagin optimal control problem for single shooting.

    terminal_kind is one of "fixed" (x1 given), "free", or "manifold"
    (F(x) = 0 with F_jacobian rows).  horizon is the fixed final time or
    None for free final time (then the shooting guess must include one).
    The maximizer returns argmax_u H(t, x, p, p0, u).  `hamiltonian_dx`,
    when provided, supplies the analytic dH/dx and avoids finite
    differencing the Hamiltonian (worth it for tight runtimes).
    """

    dimension: int
    control_dim: int
    f: Callable
    maximizer: Callable
    x0: np.ndarray
    f0: Optional[Callable] = None
    g: Optional[Callable] = None
    g_t: Optional[Callable] = None
    g_x: Optional[Callable] = None
    terminal_kind: str = "fixed"
    x1: Optional[np.ndarray] = None
    F: Optional[Callable] = None
    F_jacobian: Optional[Callable] = None
    horizon: Optional[float] = None
    hamiltonian_dx: Optional[Callable] = None

    def __post_init__(self):
        kinds = ("fixed", "free", "manifold")
        if self.terminal_kind not in kinds:
            raise ValueError(f"terminal_kind must be one of {kinds}")
        if self.terminal_kind == "fixed" and self.x1 is None:
            raise ValueError("fixed terminal condition requires x1")
        if self.terminal_kind == "manifold" and (self.F is None or self.F_jacobian is None):
            raise ValueError("manifold terminal condition requires F and F_jacobian")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.x1 is not None:
            object.__setattr__(self, "x1", np.asarray(self.x1, dtype=float))


@dataclass
class Extremal:
    state: Trajectory
    adjoint: Trajectory
    p0: float
    control: np.ndarray
    residual: np.ndarray
    hamiltonian_samples: np.ndarray
    converged: bool
    residual_history: list
    tf: float
    singular_arc: bool = False


def _hamiltonian(p: OcProblem, t, x, pv, p0, u):
    val = float(pv @ np.asarray(p.f(t, x, u), dtype=float))
    if p.f0 is not None:
        val += p0 * float(p.f0(t, x, u))
    return val


def _ham_rhs(p: OcProblem, p0):
    n = p.dimension

    def rhs(t, z, u=None):
        x = z[:n]
        pv = z[n:]
        if u is None:
            u = np.atleast_1d(np.asarray(p.maximizer(t, x, pv, p0), dtype=float))
        fx = np.asarray(p.f(t, x, u), dtype=float)
        if p.hamiltonian_dx is not None:
            dHdx = np.asarray(p.hamiltonian_dx(t, x, pv, p0, u), dtype=float)
        else:
            dHdx = np.empty(n)
            for k in range(n):
                h = 1e-6 * (1.0 + abs(x[k]))
                e = np.zeros(n)
                e[k] = h
                dHdx[k] = (
                    _hamiltonian(p, t, x + e, pv, p0, u)
                    - _hamiltonian(p, t, x - e, pv, p0, u)
                ) / (2.0 * h)
        return np.concatenate([fx, -dHdx])

    return rhs


def _switch_signs(switching, t, z, n, p0):
    phi = np.atleast_1d(switching(t, z[:n], z[n:], p0))
    s = np.sign(phi)
    s[np.abs(phi) < 1e-12] = 0.0
    return s


def _event_step(rhs, maximizer, switching, t, z, h, n, p0):
    """RK4 step that locates bang-bang switching times by bisection.

    Bang-bang controls are piecewise constant, so each substep freezes the
    control at its starting value; splitting the step at each sign change of
    the switching function then keeps the shooting map smooth in the initial
    adjoint.  The integration lands 1e-10 past each crossing so the new sign
    is resolved against the maximizer's tie-break.
    """
    remaining = h
    for _ in range(12):
        u0 = np.atleast_1d(np.asarray(maximizer(t, z[:n], z[n:], p0), dtype=float))
        frozen = lambda tt, zz: rhs(tt, zz, u0)
        s0 = _switch_signs(switching, t, z, n, p0)
        z_try = rk4_step(frozen, t, z, remaining)
        s1 = _switch_signs(switching, t + remaining, z_try, n, p0)
        if not np.any(s0 * s1 < 0.0):
            return z_try
        lo, hi = 0.0, remaining
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            z_mid = rk4_step(frozen, t, z, mid)
            if np.any(s0 * _switch_signs(switching, t + mid, z_mid, n, p0) < 0.0):
                hi = mid
            else:
                lo = mid
        step = min(remaining, hi + 1e-10)
        z = rk4_step(frozen, t, z, step)
        t += step
        remaining -= step
        if remaining <= 0.0:
            return z
    return rk4_step(rhs, t, z, remaining)


def _integrate_extremal(p: OcProblem, p_init, tf, steps, p0):
    n = p.dimension
    rhs = _ham_rhs(p, p0)
    switching = (
        getattr(p.maximizer, "switching", None)
        if getattr(p.maximizer, "bang_bang", False)
        else None
    )
    h = tf / steps
    times = h * np.arange(steps + 1)
    Z = np.empty((steps + 1, 2 * n))
    z = np.concatenate([p.x0, p_init])
    Z[0] = z
    for k in range(steps):
        if switching is None:
            z = rk4_step(rhs, times[k], z, h)
        else:
            z = _event_step(rhs, p.maximizer, switching, times[k], z, h, n, p0)
        if not np.all(np.isfinite(z)):
            raise RiccatiBlowup(f"extremal integration blew up at t={times[k + 1]:.6g}")
        Z[k + 1] = z
    return times, Z


def _terminal_residual(p: OcProblem, t_f, x_f, p_f, p0):
    pieces = []
    gx = np.asarray(p.g_x(t_f, x_f), dtype=float) if p.g_x is not None else np.zeros(p.dimension)
    if p.terminal_kind == "fixed":
        pieces.append(x_f - p.x1)
    elif p.terminal_kind == "free":
        pieces.append(p_f - p0 * gx)
    else:
        Fv = np.atleast_1d(np.asarray(p.F(x_f), dtype=float))
        dF = np.atleast_2d(np.asarray(p.F_jacobian(x_f), dtype=float))
        pieces.append(Fv)
        # Tangent basis of the manifold: null space of the gradient rows.
        _, sv, Vt = np.linalg.svd(dF)
        q = int(np.count_nonzero(sv > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)))
        tangent = Vt[q:]
        pieces.append(tangent @ (p_f - p0 * gx))
    if p.horizon is None:
        gt = float(p.g_t(t_f, x_f)) if p.g_t is not None else 0.0
        u_f = np.atleast_1d(np.asarray(p.maximizer(t_f, x_f, p_f, p0), dtype=float))
        pieces.append(np.array([_hamiltonian(p, t_f, x_f, p_f, p0, u_f) + p0 * gt]))
    return np.concatenate(pieces)


def pmp_shoot(
    p: OcProblem,
    guess,
    steps: int = 1000,
    newton_iters: int = 50,
    tol: float = 1e-9,
    p0: float = -1.0,
    jacobian_step: Optional[float] = None,
) -> Extremal:
    """Damped-Newton single shooting on the PMP boundary value problem.

    `guess` is the initial adjoint vector p(0), with the final-time guess
    appended when the horizon is free.  Abnormal candidates (p0 = 0) append
    the normalization ||p(0)||^2 = 1 to the residual and use a least-squares
    Newton step.

    Bang-bang maximizers are integrated with switch-time event location, so
    the shooting map stays smooth in the guess and the default
    finite-difference `jacobian_step` applies to them too.
    """
    n = p.dimension
    z = np.asarray(guess, dtype=float).copy()
    expect = n + (1 if p.horizon is None else 0)
    if z.shape[0] != expect:
        raise DimensionError(f"guess must have {expect} entries")

    def residual(zv):
        p_init = zv[:n]
        tf = float(zv[n]) if p.horizon is None else float(p.horizon)
        if tf <= 0:
            # Penalize nonpositive horizons smoothly so backtracking recovers.
            return np.full(expect + (1 if p0 == 0.0 else 0), 1e6 * (1.0 - tf))
        times, Z = _integrate_extremal(p, p_init, tf, steps, p0)
        r = _terminal_residual(p, tf, Z[-1, :n], Z[-1, n:], p0)
        if p0 == 0.0:
            r = np.concatenate([r, [p_init @ p_init - 1.0]])
        return r

    if jacobian_step is None:
        jacobian_step = 1e-6
    r = residual(z)
    history = [float(np.linalg.norm(r))]
    for _ in range(newton_iters):
        if history[-1] < tol:
            break
        J = np.empty((r.shape[0], z.shape[0]))
        for k in range(z.shape[0]):
            h = jacobian_step * (1.0 + abs(z[k]))
            e = np.zeros_like(z)
            e[k] = h
            J[:, k] = (residual(z + e) - r) / h
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        alpha = 1.0
        improved = False
        for _ in range(30):
            r_new = residual(z + alpha * step)
            if np.linalg.norm(r_new) < history[-1]:
                z = z + alpha * step
                r = r_new
                history.append(float(np.linalg.norm(r)))
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break

    converged = history[-1] < tol
    p_init = z[:n]
    tf = float(z[n]) if p.horizon is None else float(p.horizon)
    times, Z = _integrate_extremal(p, p_init, tf, steps, p0)
    controls = np.empty((steps + 1, p.control_dim))
    hams = np.empty(steps + 1)
    for i, t in enumerate(times):
        x, pv = Z[i, :n], Z[i, n:]
        u = np.atleast_1d(np.asarray(p.maximizer(t, x, pv, p0), dtype=float))
        controls[i] = u
        hams[i] = _hamiltonian(p, t, x, pv, p0, u)
    singular = False
    switching = getattr(p.maximizer, "switching", None)
    if switching is not None:
        phi = np.array(
            [
                np.min(np.abs(np.atleast_1d(switching(t, Z[i, :n], Z[i, n:], p0))))
                for i, t in enumerate(times)
            ]
        )
        below = phi < 1e-9
        run = 0
        for flag in below:
            run = run + 1 if flag else 0
            if run >= 5:
                singular = True
                break
    return Extremal(
        state=Trajectory(times, Z[:, :n]),
        adjoint=Trajectory(times, Z[:, n:]),
        p0=p0,
        control=controls,
        residual=r,
        hamiltonian_samples=hams,
        converged=converged,
        residual_history=history,
        tf=tf,
        singular_arc=singular,
    )


# ---------------------------------------------------------------------------
# Hamiltonian maximizers
# ---------------------------------------------------------------------------


def hamiltonian_maximizer_box(a: float, fields: Sequence[Callable]):
    """Bang-bang maximizer for f = f_0 + sum u_i f_i with |u_i| <= a.

    The switching function is phi_i(t) = <p, f_i(t, x)>; u_i = a sign(phi_i),
    with the measure-zero tie |phi_i| < 1e-12 broken to 0.
    """

    def switching(t, x, p, p0):
        return np.array([float(p @ np.asarray(fi(t, x), dtype=float)) for fi in fields])

    def maximizer(t, x, p, p0):
        phi = switching(t, x, p, p0)
        u = a * np.sign(phi)
        u[np.abs(phi) < 1e-12] = 0.0
        return u

    maximizer.switching = switching
    maximizer.bang_bang = True
    return maximizer


def hamiltonian_maximizer_ball(r: float, fields: Sequence[Callable]):
    """Maximizer over the Euclidean ball ||u|| <= r: u = r phi / ||phi||."""

    def switching(t, x, p, p0):
        return np.array([float(p @ np.asarray(fi(t, x), dtype=float)) for fi in fields])

    def maximizer(t, x, p, p0):
        phi = switching(t, x, p, p0)
        nrm = np.linalg.norm(phi)
        if nrm < 1e-12:
            return np.zeros_like(phi)
        return r * phi / nrm

    maximizer.switching = switching
    return maximizer


def hamiltonian_maximizer_unconstrained(B, U):
    """Stationary maximizer for quadratic-in-u cost: u = U^-1 B^T p (p0 = -1)."""
    Bfun = _mat_fun(B)
    Ufun = _mat_fun(U)

    def maximizer(t, x, p, p0):
        return np.linalg.solve(Ufun(t), Bfun(t).T @ p)

    return maximizer


def check_extremal(e: Extremal, p: OcProblem) -> dict:
    """Diagnostics: Hamiltonian constancy, transversality, nontriviality."""
    hams = e.hamiltonian_samples
    diag = {
        "hamiltonian_deviation": float(np.max(np.abs(hams - np.mean(hams)))),
        "nontriviality": float(
            np.hypot(np.linalg.norm(e.adjoint.states[0]), abs(e.p0))
        ),
        "terminal_residual": float(
            np.linalg.norm(
                _terminal_residual(p, e.tf, e.state.at_end(), e.adjoint.at_end(), e.p0)
            )
        ),
    }
    if p.horizon is None:
        gt = float(p.g_t(e.tf, e.state.at_end())) if p.g_t is not None else 0.0
        diag["free_time_residual"] = float(abs(hams[-1] + e.p0 * gt))
    return diag
