"""Tests for the numerical core: expm, RK4 integration, Simpson, rank."""

import math

import numpy as np
import pytest

from ctrlkit import (
    DimensionError,
    IntegrationBlowup,
    OdeProblem,
    expm,
    integrate,
    numerical_rank,
    simpson,
    transition_matrix,
)


class TestExpm:
    def test_zero_matrix(self):
        assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        D = np.diag([1.0, -2.0, 0.5])
        assert np.allclose(expm(D), np.diag(np.exp([1.0, -2.0, 0.5])), atol=1e-14)

    def test_rotation_generator(self):
        # exp of a rotation generator is the rotation matrix
        for th in (0.3, 1.0, 2.7):
            J = np.array([[0.0, -th], [th, 0.0]])
            R = np.array(
                [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
            )
            assert np.allclose(expm(J), R, atol=1e-14)

    def test_nilpotent(self):
        N = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        expected = np.eye(3) + N + 0.5 * (N @ N)
        assert np.allclose(expm(N), expected, atol=1e-15)

    def test_large_norm_scaling_squaring(self):
        # scaling-and-squaring must handle norms far above 1
        A = np.array([[0.0, 30.0], [-30.0, 0.0]])
        R = np.array(
            [[math.cos(30.0), math.sin(30.0)], [-math.sin(30.0), math.cos(30.0)]]
        )
        assert np.allclose(expm(A), R, atol=1e-11)

    def test_group_property(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((4, 4))
        assert np.allclose(expm(A) @ expm(-A), np.eye(4), atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            expm(np.zeros((2, 3)))


class TestIntegrate:
    def test_exponential_decay(self):
        p = OdeProblem(
            dimension=1,
            rhs=lambda t, x: -x,
            t0=0.0,
            x0=np.array([1.0]),
            t1=1.0,
            steps=200,
        )
        traj = integrate(p)
        assert abs(traj.states[-1][0] - math.exp(-1.0)) < 1e-9

    def test_fourth_order_convergence(self):
        errors = []
        for steps in (25, 50, 100):
            p = OdeProblem(
                dimension=1,
                rhs=lambda t, x: -x,
                t0=0.0,
                x0=np.array([1.0]),
                t1=1.0,
                steps=steps,
            )
            errors.append(abs(integrate(p).states[-1][0] - math.exp(-1.0)))
        # halving h should cut the error by about 2**4
        assert errors[0] / errors[1] > 12.0
        assert errors[1] / errors[2] > 12.0

    def test_nonautonomous(self):
        # x' = 2t, x(0)=0 -> x(1)=1, exact for RK4
        p = OdeProblem(
            dimension=1,
            rhs=lambda t, x: np.array([2.0 * t]),
            t0=0.0,
            x0=np.array([0.0]),
            t1=1.0,
            steps=10,
        )
        assert abs(integrate(p).states[-1][0] - 1.0) < 1e-13

    def test_trajectory_interpolation(self):
        p = OdeProblem(
            dimension=1,
            rhs=lambda t, x: -x,
            t0=0.0,
            x0=np.array([1.0]),
            t1=1.0,
            steps=400,
        )
        traj = integrate(p)
        assert abs(traj.interp(0.5)[0] - math.exp(-0.5)) < 1e-6

    def test_blowup_detection(self):
        p = OdeProblem(
            dimension=1,
            rhs=lambda t, x: x * x,
            t0=0.0,
            x0=np.array([5.0]),
            t1=2.0,
            steps=2000,
        )
        with pytest.raises(IntegrationBlowup):
            integrate(p)


class TestSimpson:
    def test_cubic_exact(self):
        xs = np.linspace(0.0, 1.0, 21)
        vals = xs**3
        assert abs(simpson(vals, xs[1] - xs[0]) - 0.25) < 1e-15

    def test_sine(self):
        xs = np.linspace(0.0, math.pi, 201)
        vals = np.sin(xs)
        assert abs(simpson(vals, xs[1] - xs[0]) - 2.0) < 1e-9

    def test_requires_even_interval_count(self):
        with pytest.raises((ValueError, Exception)):
            simpson(np.array([0.0, 1.0]), 1.0)


class TestNumericalRank:
    def test_full_rank(self):
        rng = np.random.default_rng(2)
        assert numerical_rank(rng.standard_normal((5, 5))) == 5

    def test_exact_deficiency(self):
        u = np.array([[1.0], [2.0], [3.0]])
        v = np.array([[1.0, -1.0, 0.5]])
        assert numerical_rank(u @ v) == 1

    def test_tolerance_sensitivity(self):
        M = np.diag([1.0, 1e-12])
        assert numerical_rank(M, rel_tol=1e-9) == 1
        assert numerical_rank(M, rel_tol=1e-15) == 2

    def test_zero_matrix(self):
        assert numerical_rank(np.zeros((3, 4))) == 0


class TestTransitionMatrix:
    def test_constant_matches_expm(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        Phi = transition_matrix(lambda t: A, 1.3, 0.0, steps=400)
        assert np.allclose(Phi, expm(1.3 * A), atol=1e-10)

    def test_identity_at_equal_times(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(transition_matrix(lambda t: A, 0.7, 0.7), np.eye(2))

    def test_scalar_time_varying(self):
        # x' = t x -> Phi(t, 0) = exp(t^2 / 2)
        Phi = transition_matrix(lambda t: np.array([[t]]), 1.0, 0.0, steps=400)
        assert abs(Phi[0, 0] - math.exp(0.5)) < 1e-9
