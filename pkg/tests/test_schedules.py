"""Tests for the iteration schedules (rate, bandwidth, penalty, budget)."""

import warnings

import numpy as np
import pytest

from distrel.errors import InvalidSparsity
from distrel.schedules import (
    ProblemScale,
    bandwidth_h,
    iteration_budget,
    lambda_reg,
    practical_rate,
    rate_a,
)

SCALE = ProblemScale(n=10_000, m=500, p=500, s=20, c0_bandwidth=0.1,
                     C0_lambda=1.0)


class TestProblemScale:
    def test_sparsity_bounds(self):
        with pytest.raises(InvalidSparsity):
            ProblemScale(n=100, m=10, p=5, s=6)
        with pytest.raises(InvalidSparsity):
            ProblemScale(n=100, m=10, p=5, s=0)

    def test_shard_not_larger_than_total(self):
        with pytest.raises(ValueError):
            ProblemScale(n=100, m=200, p=5, s=2)


class TestRate:
    def test_initial_rate(self):
        assert rate_a(SCALE, 0) == pytest.approx(0.7426936602423608, abs=1e-12)

    def test_next_rate(self):
        assert rate_a(SCALE, 1) == pytest.approx(1.783318581900258, abs=1e-12)

    def test_nonincreasing_when_contraction_holds(self):
        # s^2 log n / m <= 1 makes the recursion contract
        scale = ProblemScale(n=100_000, m=5000, p=100, s=3)
        vals = [rate_a(scale, g) for g in range(6)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_practical_rate_starts_at_initial_and_decays(self):
        assert practical_rate(SCALE, 0) == rate_a(SCALE, 0)
        vals = [practical_rate(SCALE, g) for g in range(8)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert practical_rate(SCALE, 1) == bandwidth_h(SCALE, 1)


class TestBandwidth:
    def test_frozen_values(self):
        assert bandwidth_h(SCALE, 1) == pytest.approx(0.3004823858294978,
                                                      abs=1e-12)
        assert bandwidth_h(SCALE, 2) == pytest.approx(0.27715019068030144,
                                                      abs=1e-12)

    def test_second_term_decays_geometrically(self):
        base = np.sqrt(SCALE.s * np.log(SCALE.n) / SCALE.n)
        ratio = np.sqrt(SCALE.c0_bandwidth * SCALE.s ** 2
                        * np.log(SCALE.n) / SCALE.m)
        t1 = bandwidth_h(SCALE, 1) - base
        t2 = bandwidth_h(SCALE, 2) - base
        assert t2 / t1 == pytest.approx(ratio, rel=1e-12)

    def test_damping_scales_linearly_at_first_iteration(self):
        # multiplying the damping constant by 10 multiplies the decaying
        # term by 10 at g = 1 (its exponent there is one)
        hot = ProblemScale(n=10_000, m=500, p=500, s=20, c0_bandwidth=1.0)
        base = np.sqrt(SCALE.s * np.log(SCALE.n) / SCALE.n)
        assert (bandwidth_h(hot, 1) - base) == pytest.approx(
            10 * (bandwidth_h(SCALE, 1) - base), rel=1e-12)

    def test_strictly_positive(self):
        for g in range(1, 60):
            assert bandwidth_h(SCALE, g) > 0


class TestLambda:
    def test_first_iteration_uses_initial_rate(self):
        # 0.0303 + 0.7427 * 0.6070, evaluated exactly
        assert lambda_reg(SCALE, 1) == pytest.approx(0.4811419461373481,
                                                     abs=1e-12)

    def test_later_iterations_follow_damped_rate(self):
        assert lambda_reg(SCALE, 2) == pytest.approx(0.2127325922517249,
                                                     abs=1e-12)
        assert lambda_reg(SCALE, 3) == pytest.approx(0.19857062988872526,
                                                     abs=1e-12)

    def test_linear_in_constant(self):
        doubled = ProblemScale(n=10_000, m=500, p=500, s=20,
                               c0_bandwidth=0.1, C0_lambda=2.0)
        for g in (1, 2, 5):
            assert lambda_reg(doubled, g) == pytest.approx(
                2 * lambda_reg(SCALE, g), rel=1e-12)

    def test_decreases_with_the_rate(self):
        # monotone in the rate sequence: whenever the rate drops from one
        # iteration to the next, so does the penalty
        rates = [practical_rate(SCALE, g) for g in range(10)]
        lams = [lambda_reg(SCALE, g) for g in range(1, 11)]
        for i in range(9):
            if rates[i + 1] < rates[i]:
                assert lams[i + 1] < lams[i]

    def test_stays_bounded_over_long_runs(self):
        # the penalty settles toward its floor instead of blowing up, so
        # late iterations keep estimating rather than zeroing out
        lam50 = lambda_reg(SCALE, 50)
        assert lam50 == pytest.approx(0.11279391474672555, abs=1e-12)
        assert lam50 < lambda_reg(SCALE, 1)


class TestIterationBudget:
    def test_worked_example(self):
        scale = ProblemScale(n=10_000, m=500, p=500, s=5, c0_bandwidth=1.0)
        assert iteration_budget(scale) == 4

    def test_single_machine_needs_one_pass(self):
        scale = ProblemScale(n=500, m=500, p=50, s=5, c0_bandwidth=1.0)
        assert iteration_budget(scale) == 1

    def test_degenerate_scale_returns_cap_with_warning(self):
        # s = 20 with c0 = 0.1 violates the contraction precondition
        with pytest.warns(UserWarning):
            assert iteration_budget(SCALE) == 100

    def test_budget_in_bounds(self):
        scale = ProblemScale(n=1_000_000, m=2000, p=200, s=3,
                             c0_bandwidth=1.0)
        t = iteration_budget(scale)
        assert 1 <= t <= 100

    def test_never_warns_when_precondition_holds(self):
        scale = ProblemScale(n=10_000, m=500, p=500, s=5, c0_bandwidth=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            iteration_budget(scale)
