import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kmtbounds.empirical import (
    EmpiricalSchedule,
    OracleCS,
    StitchedStdCS,
    UnitScheduleCache,
    default_fallback_share,
    default_variance_cs,
    empirical_bridge_thresholds,
    empirical_sum_thresholds,
    fallback_threshold,
    quantize_range,
    threshold_from_interval,
)
from kmtbounds.oracles import dyadic_coupling_batch
from kmtbounds.schedule import ScheduleKind, build_bridge_schedule
from kmtbounds.special import DomainError
from kmtbounds.wasserstein import BoundedModel, BoundSearchConfig

FAST = BoundSearchConfig(p_grid=tuple(range(2, 21)), kappa_grid_size=12, K_grid=(1, 2, 3, 4))


def _stitched_intervals(Y, R, delta):
    """Vectorised re-derivation of the default sequence over a (runs, k) array."""
    k = np.arange(1, Y.shape[1] + 1)
    c1 = np.cumsum(Y, axis=1)
    c2 = np.cumsum(Y * Y, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (c2 - c1 * c1 / k) / (k - 1)
        s = np.sqrt(np.maximum(var, 0))
        dk = 6 * delta / (math.pi**2 * k * k)
        h = R * np.sqrt(2 * np.log(2 / dk) / (k - 1))
    lo = np.clip(s - h, 0, R / 2)
    hi = np.minimum(np.maximum(s + h, lo), R / 2)
    lo[:, 0], hi[:, 0] = 0.0, R / 2
    return lo, hi


class TestDefaultCS:
    def test_first_interval_vacuous(self):
        cs = default_variance_cs(2.0, 0.05)
        iv = cs.update(1.3)
        assert (iv.sigma_L, iv.sigma_U) == (0.0, 1.0)
        assert cs.estimator_id == "stitched-std"

    def test_constant_stream(self):
        cs = StitchedStdCS(1.0, 0.1)
        for iv in cs.extend([0.4] * 500):
            assert iv.sigma_L == 0.0

    def test_range_check(self):
        cs = StitchedStdCS(1.0, 0.1)
        with pytest.raises(DomainError):
            cs.update(1.5)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 3), min_size=1, max_size=80), st.floats(1e-4, 0.5))
    def test_interval_invariants(self, ys, delta):
        cs = StitchedStdCS(3.0, delta)
        for k, iv in enumerate(cs.extend(ys), start=1):
            assert iv.k == k
            assert 0 <= iv.sigma_L <= iv.sigma_U <= 1.5

    def test_matches_vectorised(self):
        Y = np.random.default_rng(0).integers(0, 2, size=(3, 300)).astype(float)
        lo, hi = _stitched_intervals(Y, 1.0, 0.05)
        for r in range(3):
            cs = StitchedStdCS(1.0, 0.05)
            ivs = cs.extend(Y[r])
            assert np.allclose([iv.sigma_L for iv in ivs], lo[r], atol=1e-12)
            assert np.allclose([iv.sigma_U for iv in ivs], hi[r], atol=1e-12)

    def test_coverage_simulation(self):
        M, K, R, delta = 2000, 10_000, 1.0, 0.05
        rng = np.random.default_rng(17)
        fails = 0
        for chunk in range(0, M, 200):
            Y = R * rng.integers(0, 2, size=(200, K)).astype(float)
            lo, hi = _stitched_intervals(Y, R, delta)
            fails += int(np.any((0.5 * R < lo) | (0.5 * R > hi), axis=1).sum())
        assert fails / M <= delta + 3 * math.sqrt(delta / M)


class TestQuantize:
    def test_grid(self):
        assert quantize_range(1.5) == 2.0
        assert quantize_range(2.0) == 2.0
        assert quantize_range(2.2) == pytest.approx(2.2)
        assert quantize_range(2.21) == pytest.approx(2 * 1.1**2)

    @given(st.floats(2, 1e6))
    def test_rounds_up(self, r):
        q = quantize_range(r)
        assert r <= q <= r * 1.1 * (1 + 1e-12)


class TestThresholds:
    def test_scaling_identity(self):
        sigma, R, n, a, rho = 0.25, 1.0, 32, 0.05, 0.2
        cs = OracleCS(R, sigma, delta=rho * a)
        out = empirical_bridge_thresholds(np.full(n, 0.5), cs, a, rho, n, FAST, quantize=False)
        ref = build_bridge_schedule(n, BoundedModel.unit(R / sigma), a * (1 - rho), FAST)
        assert np.allclose(out.thresholds, sigma * ref.values, rtol=1e-14, atol=0)
        assert not any(r.fallback for r in out.rows)

    def test_rho_to_zero(self):
        sigma, R, n, a = 0.25, 1.0, 32, 0.05
        rho = 1e-9
        cs = OracleCS(R, sigma, delta=rho * a)
        out = empirical_bridge_thresholds(np.full(n, 0.5), cs, a, rho, n, FAST, quantize=False)
        known = build_bridge_schedule(n, BoundedModel(R, sigma), a, FAST)
        assert np.allclose(out.thresholds, known.values, rtol=1e-6)

    def test_nested_intervals(self):
        cache = UnitScheduleCache(FAST)
        sigma, R, n, k = 0.3, 1.0, 64, 20
        widths = [0.19, 0.15, 0.1, 0.05, 0.02, 0.0]
        vals = [threshold_from_interval(k, sigma - w, sigma + w, n, R, 0.05, ScheduleKind.BRIDGE, cache)[0]
                for w in widths]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_sequential(self):
        Y = np.random.default_rng(4).random(64)
        cache = UnitScheduleCache(FAST)
        a = empirical_sum_thresholds(Y[:20], StitchedStdCS(1.0, 0.01), 0.1, 0.1, 64, cache=cache)
        b = empirical_sum_thresholds(Y, StitchedStdCS(1.0, 0.01), 0.1, 0.1, 64, cache=cache)
        assert a.thresholds == b.thresholds[:20]

    def test_fallback_flagged(self):
        out = empirical_bridge_thresholds([0.5, 0.5, 0.5], StitchedStdCS(1.0, 0.005), 0.05, 0.1, 8, FAST)
        assert all(r.fallback for r in out.rows)
        assert out.rows[0].threshold == fallback_threshold(1, 8, 1.0, 0.5, 0.05 * 0.9 * 0.5, ScheduleKind.BRIDGE)

    def test_zero_lower_needs_share(self):
        with pytest.raises(DomainError):
            threshold_from_interval(3, 0.0, 0.2, 8, 1.0, 0.05, "bridge", UnitScheduleCache(FAST), share=0.0)

    def test_delta_budget_checked(self):
        with pytest.raises(DomainError):
            list(empirical_bridge_thresholds([0.1], StitchedStdCS(1.0, 0.05), 0.05, 0.5, 4, FAST).rows)

    def test_default_share(self):
        assert default_fallback_share(OracleCS(1.0, 0.2, 0.01)) == 0.0
        assert default_fallback_share(OracleCS(1.0, 0.0, 0.01)) == 0.5
        assert default_fallback_share(StitchedStdCS(1.0, 0.01)) == 0.5

    def test_csv(self):
        out = empirical_bridge_thresholds([0.2, 0.9], StitchedStdCS(1.0, 0.005), 0.05, 0.1, 4, FAST)
        lines = out.to_csv().splitlines()
        assert lines[0] == "k,sigma_L,sigma_U,threshold"
        assert len(lines) == 3

    def test_fallback_formulas(self):
        assert fallback_threshold(4, 4, 1.0, 0.3, 0.05, "bridge") == 0.0
        z = stats.norm.ppf(1 - 0.05 / 16)
        assert fallback_threshold(2, 8, 1.0, 0.3, 0.05, "sum") == pytest.approx(2 + 0.3 * math.sqrt(2) * z, rel=1e-9)


def _composition_rate(n, M, alpha, rho, seed, q=0.5, R=1.0):
    cache = UnitScheduleCache()
    Y, _, _, W, Zt, _ = dyadic_coupling_batch(n, q, R, np.random.default_rng(seed), M)
    hits = 0
    for t in range(M):
        cs = StitchedStdCS(R, rho * alpha)
        sched = empirical_bridge_thresholds(Y[t], cs, alpha, rho, n, cache=cache)
        thr = np.asarray(sched.thresholds)
        hits += bool(np.any(np.abs(W[t, :-1] - Zt[t, :-1]) >= thr[:-1]))
    return hits / M


def test_validity_composition():
    M, alpha = 1000, 0.1
    rate = _composition_rate(128, M, alpha, 0.5, seed=8)
    assert rate <= alpha + 3 * math.sqrt(alpha / M)


def test_empirical_schedule_type():
    s = EmpiricalSchedule(0.05, 0.1, 4, ScheduleKind.SUM)
    assert s.thresholds == []
