import math

import numpy as np
import pytest
from scipy import stats

from kmtbounds.hitting import (
    HittingTimeProblem,
    ScheduleStore,
    crossing_probability,
    hitting_bound,
    min_nontrivial_N,
)
from kmtbounds.special import DomainError
from kmtbounds.wasserstein import BoundSearchConfig

FAST = BoundSearchConfig(p_grid=tuple(range(2, 21)), kappa_grid_size=12, K_grid=(1, 2, 3, 4))


def _within(est, want, k=4.0):
    se = math.sqrt(want * (1 - want) / est.paths)
    return abs(est.point - want) <= k * se + 1e-12


class TestCrossing:
    @pytest.mark.parametrize("c", [-1.0, 0.0, 2.0])
    def test_single_step(self, c):
        est = crossing_probability(np.array([c]), paths=200_000, seed=1)
        assert _within(est, stats.norm.cdf(c))

    def test_orthant_two_steps(self):
        est = crossing_probability(np.zeros(2), paths=200_000, seed=2)
        assert _within(est, 3 / 8)

    def test_infinite_boundary(self):
        est = crossing_probability(np.full(10, np.inf), paths=100)
        assert est.point == 1.0 and est.ci_halfwidth == 0.0

    def test_nan_rejected(self):
        with pytest.raises(DomainError):
            crossing_probability(np.array([0.0, np.nan]))

    def test_seeded(self):
        a = crossing_probability(np.linspace(1, 3, 50), paths=20_000, seed=7)
        b = crossing_probability(np.linspace(1, 3, 50), paths=20_000, seed=7)
        c = crossing_probability(np.linspace(1, 3, 50), paths=20_000, seed=7, threads=3)
        assert a == b
        assert a.point == c.point

    def test_checkpoint_subset_is_conservative(self):
        # fewer constraints can only raise the staying-below probability (same draws are not shared,
        # so compare against the exact-time estimate with a CI allowance)
        upper = 3 + 0.05 * np.sqrt(np.arange(1, 5001))
        full = crossing_probability(upper, paths=20_000, seed=3, max_checkpoints=5000)
        sub = crossing_probability(upper, paths=20_000, seed=3, max_checkpoints=300)
        assert sub.checkpoints < full.checkpoints
        assert sub.point >= full.point - full.ci_halfwidth - sub.ci_halfwidth

    def test_ci_shrinks_with_paths(self):
        upper = np.full(64, 2.0)
        small = crossing_probability(upper, paths=10_000, seed=4)
        big = crossing_probability(upper, paths=40_000, seed=5)
        assert big.ci_halfwidth < small.ci_halfwidth
        assert abs(small.point - big.point) <= small.ci_halfwidth + big.ci_halfwidth


class TestProblem:
    def test_validation(self):
        with pytest.raises(DomainError):
            HittingTimeProblem(0, 1.0, 0.0, 0.5)
        with pytest.raises(DomainError):
            HittingTimeProblem(4, 1.0, 0.6, 0.5)
        with pytest.raises(DomainError):
            HittingTimeProblem(4, 1.0, 0.0, 0.7)
        with pytest.raises(DomainError):
            HittingTimeProblem(4, 1.0, 0.0, 0.5, boundary=(1.0, 2.0))

    def test_tabulated_boundary(self):
        p = HittingTimeProblem(3, 1.0, 0.0, 0.5, boundary=[1, 2, 3, 4])
        assert np.array_equal(p.boundary_array(), [1.0, 2.0, 3.0])


class TestBound:
    def test_single_step_closed_form(self):
        # D = 0, mu = 0: the crossing term is Phi(g / sigma)
        prob = HittingTimeProblem(1, 1.0, 0.0, 0.5, boundary=0.5, alpha=0.05)
        hb = hitting_bound(prob, paths=200_000, seed=0, schedule_values=np.zeros(1))
        assert _within(hb.crossing, stats.norm.cdf(1.0))
        assert hb.bound == pytest.approx(0.05 + hb.crossing.point)

    def test_orthant_with_zero_schedule(self):
        prob = HittingTimeProblem(2, 1.0, 0.0, 0.5, boundary=0.0)
        hb = hitting_bound(prob, paths=200_000, seed=6, schedule_values=np.zeros(2))
        assert _within(hb.crossing, 3 / 8)

    def test_schedule_values_length(self):
        with pytest.raises(DomainError):
            hitting_bound(HittingTimeProblem(4, 1.0, 0.0, 0.5), paths=10, schedule_values=np.zeros(3))

    def test_lower_boundary_tighter(self):
        store = ScheduleStore(FAST)
        N = 2**10
        vals = [hitting_bound(HittingTimeProblem(N, 1.0, -0.5 / 32, 0.5, g, 1 / N), paths=20_000,
                              seed=0, store=store).bound for g in (10.0, 5.0)]
        assert vals[1] < vals[0]

    def test_crossing_nonincreasing_in_alpha(self):
        store = ScheduleStore(FAST)
        N = 256
        cross = [hitting_bound(HittingTimeProblem(N, 1.0, -0.02, 0.5, 5.0, a), paths=20_000,
                               seed=0, store=store).crossing.point for a in (0.01, 0.05, 0.2)]
        # common random numbers: a larger alpha gives a smaller D, hence a lower barrier
        assert cross[0] >= cross[1] >= cross[2]

    def test_truncated_schedule(self):
        store = ScheduleStore(FAST)
        hb = hitting_bound(HittingTimeProblem(40, 1.0, -0.05, 0.5, 3.0, 0.1), paths=2000, store=store)
        assert hb.schedule.n == 64
        assert math.isfinite(hb.bound)


class TestMinN:
    def test_power_of_two_and_monotone_in_g(self):
        store = ScheduleStore(FAST)
        kw = dict(paths=4000, j_max=11, store=store)
        a = min_nontrivial_N(-0.5, 5.0, **kw)
        b = min_nontrivial_N(-0.5, 10.0, **kw)
        assert a.found and b.found
        assert a.N & (a.N - 1) == 0
        assert a.N <= b.N
        assert a.evaluated[a.N].upper_confidence < 1

    def test_stronger_drift_never_helps(self):
        # the boundary term does not depend on mu, and for mu < 0 a larger |mu| only raises the barrier
        store = ScheduleStore(FAST)
        N = 2**9
        cross = [hitting_bound(HittingTimeProblem(N, 1.0, mu / math.sqrt(N), 0.5, 5.0, 1 / N), paths=10_000,
                               seed=0, store=store).crossing.point for mu in (-0.1, -0.25, -0.5)]
        assert cross[0] <= cross[1] <= cross[2]

    def test_not_found(self):
        r = min_nontrivial_N(-0.1, 10.0, paths=2000, j_max=3, store=ScheduleStore(FAST))
        assert not r.found
        assert r.describe(3) == "trivial up to N_max=2^3"

    def test_validation(self):
        with pytest.raises(DomainError):
            min_nontrivial_N(0.1, 10.0)
        with pytest.raises(DomainError):
            min_nontrivial_N(-0.1, 0.0)
