import math

import numpy as np
import pytest

from symoc.penalty import (
    PenaltyParams,
    PenaltySchedule,
    penalty_gradient,
    penalty_max,
    penalty_scalar,
    schedule_step,
)


def brute_penalty(h, eps, cutoff):
    """Independent reference implementation of the scalar penalty."""
    if h > cutoff:
        return -eps * math.log(h)
    return -eps * math.log(cutoff) + 0.5 * eps * (((h - 2.0 * cutoff) / cutoff) ** 2 - 1.0)


class TestPenaltyScalar:
    def test_log_of_one_is_zero(self):
        assert penalty_scalar(1.0, PenaltyParams(0.3, 0.5)) == pytest.approx(0.0, abs=1e-15)

    def test_branch_junction_value(self):
        eps, cutoff = 0.1, 0.2
        p = PenaltyParams(eps, cutoff)
        assert penalty_scalar(cutoff, p) == pytest.approx(-eps * math.log(cutoff), abs=1e-14)

    def test_quadratic_branch_value(self):
        # frozen from an independent evaluation of the branch-2 formula
        assert penalty_scalar(0.1, PenaltyParams(0.1, 0.2)) == pytest.approx(
            0.22344379124341003, rel=1e-12
        )

    def test_total_on_nonpositive_inputs(self):
        p = PenaltyParams(0.1, 0.1)
        for h in (-5.0, -0.1, 0.0, 1e-12):
            assert math.isfinite(penalty_scalar(h, p))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        p = PenaltyParams(0.07, 0.13)
        for h in rng.uniform(-2.0, 3.0, size=200):
            assert penalty_scalar(h, p) == pytest.approx(brute_penalty(h, p.eps, p.cutoff), rel=1e-12)

    def test_c1_continuity_at_cutoff(self):
        eps, cutoff = 0.1, 0.1
        p = PenaltyParams(eps, cutoff)
        step = 1e-8
        left = (penalty_scalar(cutoff, p) - penalty_scalar(cutoff - step, p)) / step
        right = (penalty_scalar(cutoff + step, p) - penalty_scalar(cutoff, p)) / step
        assert abs(left - right) <= 1e-6 * (eps / cutoff)

    def test_monotone_decreasing(self):
        p = PenaltyParams(0.2, 0.15)
        hs = np.linspace(-1.0, 2.0, 500)
        vals = [penalty_scalar(h, p) for h in hs]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_rejects_nonpositive_params(self):
        with pytest.raises(ValueError):
            PenaltyParams(0.0, 0.1)
        with pytest.raises(ValueError):
            PenaltyParams(0.1, -1.0)


class TestPenaltyMax:
    def test_all_equal_selects_lowest_index(self):
        val, idx = penalty_max(np.array([0.4, 0.4, 0.4]), PenaltyParams(0.1, 0.1))
        assert idx == 0
        assert val == pytest.approx(-0.1 * math.log(0.4), rel=1e-12)

    def test_quadratic_branch_dominates(self):
        p = PenaltyParams(0.1, 0.1)
        val, idx = penalty_max(np.array([1.0, 0.01]), p)
        assert idx == 1
        assert val == pytest.approx(brute_penalty(0.01, 0.1, 0.1), rel=1e-12)

    def test_single_component_equals_scalar(self):
        p = PenaltyParams(0.05, 0.2)
        val, idx = penalty_max(np.array([0.33]), p)
        assert idx == 0
        assert val == pytest.approx(penalty_scalar(0.33, p), rel=1e-14)

    def test_matches_brute_force_max(self):
        rng = np.random.default_rng(1)
        p = PenaltyParams(0.1, 0.1)
        for _ in range(50):
            h = rng.uniform(-0.5, 2.0, size=7)
            val, idx = penalty_max(h, p)
            ref = max(brute_penalty(x, p.eps, p.cutoff) for x in h)
            assert val == pytest.approx(ref, rel=1e-12)
            assert brute_penalty(h[idx], p.eps, p.cutoff) == pytest.approx(ref, rel=1e-12)


class TestPenaltyGradient:
    def test_scalar_log_branch(self):
        p = PenaltyParams(0.1, 0.1)
        g = np.asarray(penalty_gradient(np.array([1.0]), np.eye(1, 4), p))
        np.testing.assert_allclose(g, [-0.1, 0.0, 0.0, 0.0], atol=1e-14)

    def test_branch_slopes_coincide_at_cutoff(self):
        # -eps/h and eps*(h-2c)/c^2 both evaluate to -eps/c at h = c
        from symoc.penalty import penalty_slopes

        eps, cutoff = 0.3, 0.25
        lo = float(penalty_slopes(cutoff, eps, cutoff))
        hi = float(penalty_slopes(cutoff * (1 + 1e-12), eps, cutoff))
        assert lo == pytest.approx(-eps / cutoff, rel=1e-12)
        assert hi == pytest.approx(-eps / cutoff, rel=1e-9)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        p = PenaltyParams(0.1, 0.1)
        jac = rng.normal(size=(5, 3))

        def composed(x):
            # h(x) affine: keeps the FD oracle independent of the gradient code
            return h0 + jac @ x

        for _ in range(20):
            h0 = rng.uniform(0.2, 1.5, size=5)
            h0[rng.integers(5)] = rng.uniform(-0.3, 0.05)  # one clearly active component
            x = np.zeros(3)
            g = np.asarray(penalty_gradient(composed(x), jac, p))
            step = 1e-6
            for j in range(3):
                e = np.zeros(3)
                e[j] = step
                lo, _ = penalty_max(composed(x - e), p)
                hi, _ = penalty_max(composed(x + e), p)
                fd = (hi - lo) / (2 * step)
                assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


class TestSchedule:
    def test_single_step(self):
        sched = PenaltySchedule(eps_factor=0.5, cutoff_factor=0.4)
        out = schedule_step(PenaltyParams(0.1, 0.1), sched)
        assert out.eps == pytest.approx(0.05)
        assert out.cutoff == pytest.approx(0.04)

    def test_repeated_steps_compound(self):
        sched = PenaltySchedule(eps0=0.1, cutoff0=0.1, eps_factor=0.5, cutoff_factor=0.4, num_stages=5)
        params = sched.initial()
        for _ in range(sched.num_stages):
            params = schedule_step(params, sched)
        assert params.eps == pytest.approx(0.1 * 0.5**5, rel=1e-12)
        assert params.cutoff == pytest.approx(0.1 * 0.4**5, rel=1e-12)

    def test_indicator_limit_regime(self):
        # with n1=0.5, n2=0.4: eps*log(cutoff) -> 0 and cutoff^2/eps -> 0,
        # so the penalty approaches the indicator of [0, inf)
        sched = PenaltySchedule(eps0=0.1, cutoff0=0.1, eps_factor=0.5, cutoff_factor=0.4)
        params = sched.initial()
        feasible, infeasible = [], []
        eps_log, ratio = [], []
        for _ in range(30):
            feasible.append(penalty_scalar(0.5, params))
            infeasible.append(penalty_scalar(-0.1, params))
            eps_log.append(abs(params.eps * math.log(params.cutoff)))
            ratio.append(params.cutoff**2 / params.eps)
            params = schedule_step(params, sched)
        assert abs(feasible[-1]) < 1e-8
        assert infeasible[-1] > 1e6
        assert all(a < b for a, b in zip(infeasible[5:], infeasible[6:]))  # monotone growth
        assert eps_log[-1] < 1e-7 and ratio[-1] < 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            PenaltySchedule(eps_factor=1.0)
        with pytest.raises(ValueError):
            PenaltySchedule(num_stages=0)
