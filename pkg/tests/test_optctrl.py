"""Tests for Riccati LQ synthesis and PMP indirect shooting."""

import math
import time

import numpy as np
import pytest

import ctrlkit as ck
from ctrlkit import LtiSystem
from ctrlkit.optctrl import LqProblem
from ctrlkit import problems as pr

from conftest import di_min_time_oracle


def scalar_lq():
    sys = LtiSystem(np.array([[0.0]]), np.array([[1.0]]))
    return LqProblem(
        sys=sys,
        W=np.array([[1.0]]),
        U=np.array([[1.0]]),
        Q=np.array([[0.0]]),
        T=2.0,
    )


class TestRiccati:
    def test_scalar_tanh(self):
        p = scalar_lq()
        sol = ck.riccati_solve(p, steps=2000)
        ts = np.linspace(0.0, 2.0, 2001)
        exact = -np.tanh(2.0 - ts)
        got = np.array([sol.at(t)[0, 0] for t in ts])
        assert np.max(np.abs(got - exact)) < 1e-8

    def test_cost_equals_value(self):
        p = scalar_lq()
        sol = ck.riccati_solve(p, steps=2000)
        law = ck.lq_feedback(sol, p)
        x0 = np.array([1.0])
        cost, _, _ = ck.lq_cost(p, law, x0, steps=2000)
        value = float(x0 @ (-sol.at(0.0)) @ x0)
        assert abs(cost - value) < 1e-6

    def test_beats_random_open_loop(self):
        p = scalar_lq()
        sol = ck.riccati_solve(p, steps=2000)
        law = ck.lq_feedback(sol, p)
        cost_cl, _, _ = ck.lq_cost(p, law, np.array([1.0]), steps=2000)
        rng = np.random.default_rng(0)
        steps, nseg = 2000, 40
        h = p.T / steps
        seg = np.minimum(
            (np.arange(steps) / steps * nseg).astype(int), nseg - 1
        )
        best = math.inf
        for _ in range(1000):
            amps = rng.normal(-0.5, 0.7, nseg)
            u = amps[seg]
            x = np.concatenate([[1.0], 1.0 + np.cumsum(u) * h])
            best = min(best, float(np.sum(x[:-1] ** 2 + u**2) * h))
        assert cost_cl < best

    def test_blowup_detection(self):
        # negative state weight can drive the Riccati solution to blow up
        sys = LtiSystem(np.array([[0.0]]), np.array([[1.0]]))
        p = LqProblem(
            sys=sys,
            W=np.array([[-10.0]]),
            U=np.array([[1.0]]),
            Q=np.array([[0.0]]),
            T=10.0,
        )
        with pytest.raises((ck.RiccatiBlowup, Exception)):
            ck.riccati_solve(p, steps=2000)


class TestBrachistochrone:
    def test_final_time(self):
        t0 = time.time()
        p = pr.brachistochrone_free_y(1.0, 9.81)
        e = ck.pmp_shoot(p, np.array([0.3, 0.1, 0.7]))
        elapsed = time.time() - t0
        assert e.converged
        ref = math.sqrt(2.0 * math.pi * 1.0 / 9.81)
        assert abs(e.tf - ref) / ref < 1e-4
        assert elapsed < 10.0

    def test_diagnostics(self):
        p = pr.brachistochrone_free_y(1.0, 9.81)
        e = ck.pmp_shoot(p, np.array([0.3, 0.1, 0.7]))
        d = ck.check_extremal(e, p)
        assert d["hamiltonian_deviation"] < 1e-5
        assert abs(e.hamiltonian_samples[-1]) < 1e-6
        assert d["nontriviality"] > 1e-6


class TestZermelo:
    def test_drift_direction_identity(self):
        p = pr.zermelo_min_drift()
        guess = pr.zermelo_shooting_guess(p, delta=1.5e-5)
        e = ck.pmp_shoot(p, guess)
        assert e.converged
        # cos u = -v / c(y) along the path (v = c here, both 1 at y = 0)
        c_of_y = 1.0 + e.state.states[:, 1] ** 2  # default profile c(y) = 1 + y^2
        cos_u = np.cos(e.control[:, 0])
        assert np.max(np.abs(cos_u + 1.0 / c_of_y)) < 1e-4

    def test_diagnostics(self):
        p = pr.zermelo_min_drift()
        e = ck.pmp_shoot(p, pr.zermelo_shooting_guess(p, delta=1.5e-5))
        h = e.hamiltonian_samples
        assert np.max(np.abs(h - h.mean())) < 1e-5
        assert abs(h[-1]) < 1e-6


class TestDoubleIntegratorMinTime:
    def test_bang_bang_one_switch_and_oracle(self):
        x0 = np.array([1.0, 0.0])
        p = pr.double_integrator_min_time(x0)
        e = ck.pmp_shoot(p, np.array([-0.8, -1.2, 1.8]))
        assert e.converged
        u = e.control[:, 0]
        assert np.max(np.abs(np.abs(u) - 1.0)) < 1e-9  # bang-bang
        switches = int(np.sum(np.abs(np.diff(np.sign(u))) > 1.0))
        assert switches <= 1
        oracle = di_min_time_oracle(x0[0], x0[1])
        assert abs(e.tf - oracle) < 1e-4

    def test_closed_form_above_switching_curve(self):
        assert abs(pr.double_integrator_min_time_tf([1.0, 0.0]) - 2.0) < 1e-12
        assert abs(
            pr.double_integrator_min_time_tf([2.0, 1.0])
            - di_min_time_oracle(2.0, 1.0)
        ) < 1e-9

    def test_diagnostics(self):
        p = pr.double_integrator_min_time(np.array([1.0, 0.0]))
        e = ck.pmp_shoot(p, np.array([-0.8, -1.2, 1.8]))
        h = e.hamiltonian_samples
        assert np.max(np.abs(h - h.mean())) < 1e-5
        assert abs(h[-1]) < 1e-6


class TestShootingRobustness:
    def test_bad_guess_reports_not_converged(self):
        p = pr.double_integrator_min_time(np.array([1.0, 0.0]))
        e = ck.pmp_shoot(p, np.array([5.0, 5.0, 0.05]), newton_iters=3)
        assert not e.converged

    def test_residual_history_decreases(self):
        p = pr.brachistochrone_free_y(1.0, 9.81)
        e = ck.pmp_shoot(p, np.array([0.3, 0.1, 0.7]))
        hist = e.residual_history
        assert hist[-1] < hist[0]


class TestMaximizers:
    def test_unconstrained_quadratic(self):
        # u = U^-1 B^T p with B = U = 1: u = p
        maximizer = ck.hamiltonian_maximizer_unconstrained(
            np.array([[1.0]]), np.array([[1.0]])
        )
        u = maximizer(0.0, np.zeros(1), np.array([0.7]), -1.0)
        assert abs(u[0] - 0.7) < 1e-6

    def test_box_is_bang_bang(self):
        field = lambda t, x: np.array([1.0])
        maximizer = ck.hamiltonian_maximizer_box(1.0, [field])
        assert maximizer(0.0, np.zeros(1), np.array([2.0]), -1.0)[0] == 1.0
        assert maximizer(0.0, np.zeros(1), np.array([-0.3]), -1.0)[0] == -1.0
        assert maximizer(0.0, np.zeros(1), np.array([0.0]), -1.0)[0] == 0.0

    def test_ball_is_normalized(self):
        fields = [
            lambda t, x: np.array([1.0, 0.0]),
            lambda t, x: np.array([0.0, 1.0]),
        ]
        maximizer = ck.hamiltonian_maximizer_ball(2.0, fields)
        u = maximizer(0.0, np.zeros(2), np.array([3.0, 4.0]), -1.0)
        assert np.allclose(u, np.array([1.2, 1.6]), atol=1e-12)
