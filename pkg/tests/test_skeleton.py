"""Penalized and projected solvers, their limit, and complementarity."""
import numpy as np
import pytest

from obslab.grid import ht_distance
from obslab.skeleton import (Control, complementarity_residual,
                             constant_control, solve_penalized,
                             solve_projected, solve_skeleton, zero_control)


class TestControl:
    def test_norm_and_ball(self):
        k = constant_control(100, 2, 1.0, 0.5, mode=0)
        # dt * sum v^2 = 1.0 * 0.25 over one mode
        assert k.k_norm_sq() == pytest.approx(0.25)
        assert k.in_ball(0.25 + 1e-12)
        assert not k.in_ball(0.2)

    def test_rejects_non_finite(self):
        vals = np.zeros((10, 1))
        vals[3, 0] = np.nan
        with pytest.raises(ValueError):
            Control(np.linspace(0, 1, 11), vals)

    def test_zero_control(self):
        k = zero_control(20, 3, 0.5)
        assert k.k_norm_sq() == 0.0
        assert k.values.shape == (20, 3)


class TestAgainstProjection:
    def test_inactive_obstacle_projection_is_identity(self, linear_problem):
        pen = solve_penalized(linear_problem, None, 1e6, n_steps=200)
        proj = solve_projected(linear_problem, None, n_steps=200)
        assert ht_distance(pen.traj, proj.traj) <= 1e-8

    def test_projection_respects_barrier_exactly(self, heat_problem):
        proj = solve_projected(heat_problem, None, n_steps=200)
        # all interior times sit on or above the zero barrier
        assert float(np.min(proj.traj.values[:-1])) >= 0.0

    def test_large_n_agrees_with_projection(self, heat_problem):
        pen = solve_penalized(heat_problem, None, 1e5, n_steps=400)
        proj = solve_projected(heat_problem, None, n_steps=400)
        assert ht_distance(pen.traj, proj.traj) <= 1e-2


class TestSkeletonLimit:
    @pytest.mark.parametrize("family", ["heat_problem", "linear_problem",
                                        "quasilinear_problem"])
    def test_limit_matches_projection(self, family, request):
        prob = request.getfixturevalue(family)
        sk = solve_skeleton(prob, None, n_steps=200, tol=1e-3)
        proj = solve_projected(prob, None, n_steps=200)
        assert sk.converged
        assert ht_distance(sk.traj, proj.traj) <= 2e-3

    def test_inactive_obstacle_converges_first_doubling(self, linear_problem):
        sk = solve_skeleton(linear_problem, None, n_steps=100, tol=1e-3)
        assert sk.n_final == 2000
        assert sk.cauchy_gap <= 1e-6

    def test_cauchy_history_decreasing(self, heat_problem):
        sk = solve_skeleton(heat_problem, None, n_steps=200, tol=1e-4)
        gaps = [g for _, g in sk.cauchy_history]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))


class TestComplementarity:
    def test_positive_negative_parts_disjoint(self, heat_problem):
        sol = solve_penalized(heat_problem, None, 1e4, n_steps=200)
        gap = sol.traj.values[:-1] - 0.0  # barrier is zero before T
        assert np.all(np.maximum(gap, 0.0) * np.maximum(-gap, 0.0) == 0.0)

    def test_residual_decreases_with_n(self, heat_problem):
        res = [complementarity_residual(
            solve_penalized(heat_problem, None, n, n_steps=200))
            for n in (1e3, 1e4, 1e5)]
        assert all(a >= b for a, b in zip(res, res[1:]))
        assert res[-1] < 1e-3

    def test_projection_residual_near_zero(self, heat_problem):
        proj = solve_projected(heat_problem, None, n_steps=200)
        assert complementarity_residual(proj) <= 1e-10


class TestPenaltyDecay:
    def test_half_order_rate(self, heat_problem):
        ns = np.array([1e3, 1e4, 1e5, 1e6])
        norms = np.array([
            solve_penalized(heat_problem, None, n,
                            n_steps=200).diagnostics.penalty_l2
            for n in ns])
        exponent = -np.polyfit(np.log(ns), np.log(norms), 1)[0]
        assert 0.4 <= exponent <= 0.6
        scaled = ns * norms**2
        assert scaled.max() / scaled.min() < 3.0
