"""Shared helpers for the test suite."""

import numpy as np

from ctrlkit.lincontrol import LtiSystem
from ctrlkit import kalman_test


def random_controllable_pairs(seed, count, n_max, m_max):
    """Yield `count` random controllable (A, B) pairs with n <= n_max, m <= m_max."""
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, m_max + 1))
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        sys = LtiSystem(A, B)
        if not kalman_test(sys).controllable:
            continue
        produced += 1
        yield sys, rng


def separated_stable_poles(rng, n, gap=0.2):
    """Random negative real poles with guaranteed pairwise separation >= gap."""
    return -np.sort(rng.uniform(0.5, 3.0, n)) - gap * np.arange(n)


def di_min_time_oracle(x1, x2, tf_max=8.0, grid=4001):
    """Independent one-switch grid/bisection oracle for the min-time double integrator.

    For a single switch at s with initial control sigma, the final-velocity
    condition v(tf) = 0 fixes s = tf/2 - x2/(2 sigma); the remaining scalar
    equation x(tf) = 0 is bracketed on a grid and solved by bisection.
    """
    best = np.inf
    for sig in (1.0, -1.0):

        def endpoint_position(tf):
            s = 0.5 * tf - x2 / (2.0 * sig)
            if s < 0.0 or s > tf:
                return np.nan
            v1 = x2 + sig * s
            p1 = x1 + x2 * s + 0.5 * sig * s * s
            d = tf - s
            return p1 + v1 * d - 0.5 * sig * d * d

        ts = np.linspace(0.0, tf_max, grid)
        vals = np.array([endpoint_position(t) for t in ts])
        for i in range(grid - 1):
            lo_v, hi_v = vals[i], vals[i + 1]
            if np.isnan(lo_v) or np.isnan(hi_v) or lo_v * hi_v > 0.0:
                continue
            lo, hi = ts[i], ts[i + 1]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if endpoint_position(lo) * endpoint_position(mid) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            best = min(best, 0.5 * (lo + hi))
            break
    return best
