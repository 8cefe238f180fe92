import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kmtbounds.oracles import (
    FiniteDistribution,
    aggregated_conditional_wp,
    binary_dyadic_coupling,
    brute_force_conditional_wp,
    brute_force_marginal_wp,
    conditional_bridge_law,
    coverage_experiment,
    dyadic_coupling_batch,
    randomized_pit,
    randomized_pit_result,
    sum_law,
    wp_discrete_vs_gaussian,
)
from kmtbounds.special import DomainError
from kmtbounds.wasserstein import BoundedModel, marginal_bound, omega_conditional

PM1 = FiniteDistribution((-1.0, 1.0), (0.5, 0.5))


def _even_wp_exact(values, probs, s, p):
    """Closed form for even p: truncated-normal moments of the polynomial |v - s z|^p."""
    edges = np.concatenate([[0.0], np.cumsum(probs)])
    zs = stats.norm.ppf(np.clip(edges, 0, 1))
    total = 0.0
    for v, a, b in zip(values, zs[:-1], zs[1:]):
        phi = lambda z: 0.0 if math.isinf(z) else math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
        pw = lambda z, j: 0.0 if math.isinf(z) else z**j
        M = [stats.norm.cdf(b) - stats.norm.cdf(a), phi(a) - phi(b)]
        for j in range(2, p + 1):
            M.append((j - 1) * M[j - 2] - (pw(b, j - 1) * phi(b) - pw(a, j - 1) * phi(a)))
        total += sum(math.comb(p, j) * v ** (p - j) * (-s) ** j * M[j] for j in range(p + 1))
    return total ** (1 / p)


class TestFiniteDistribution:
    def test_validation(self):
        with pytest.raises(DomainError):
            FiniteDistribution((1.0, 0.0), (0.5, 0.5))
        with pytest.raises(DomainError):
            FiniteDistribution((0.0, 1.0), (0.5, 0.6))

    def test_from_samples(self):
        d = FiniteDistribution.from_samples([2, 0, 2, 2])
        assert d.values == (0.0, 2.0)
        assert d.probs == pytest.approx((0.25, 0.75))
        assert d.mean == pytest.approx(1.5)


class TestPIT:
    def test_boundaries(self):
        assert randomized_pit(PM1, -1.0, 1.0, 1.7) == pytest.approx(0.0, abs=1e-15)
        assert randomized_pit(PM1, 1.0, 0.0, 1.7) == pytest.approx(0.0, abs=1e-15)

    def test_clamp_flag(self):
        r = randomized_pit_result(PM1, -1.0, 0.0, 1.0)
        assert r.clamped and math.isfinite(r.value)

    def test_not_an_atom(self):
        with pytest.raises(DomainError):
            randomized_pit(PM1, 0.5, 0.3, 1.0)

    def test_ks_normal(self):
        rng = np.random.default_rng(2024)
        d = FiniteDistribution((0.0, 1.0, 3.0), (0.2, 0.5, 0.3))
        cdf_left = np.array([0.0, 0.2, 0.7])
        mass = np.array(d.probs)
        idx = rng.choice(3, size=10**5, p=mass)
        u = rng.random(10**5)
        z = 2.0 * stats.norm.ppf(cdf_left[idx] + u * mass[idx])
        assert stats.kstest(z, "norm", args=(0, 2.0)).pvalue > 0.01
        # the scalar path agrees with the vectorised one
        for i in range(20):
            assert randomized_pit(d, d.values[idx[i]], u[i], 2.0) == pytest.approx(z[i], rel=1e-12, abs=1e-12)


class TestConditionalWp:
    def test_two_point_closed_form(self):
        want = math.sqrt(1.5 - 2 * math.sqrt(0.5) * 2 / math.sqrt(2 * math.pi))
        assert brute_force_conditional_wp([-1, 1], 1, 2) == pytest.approx(want, abs=1e-6)
        assert want == pytest.approx(0.6096, abs=1e-4)

    def test_equal_values(self):
        for k in (1, 2, 4):
            assert brute_force_conditional_wp([3.0] * 5, k, 3) == 0.0

    @pytest.mark.parametrize("ms", [(0, 0, 2, 2), (-1, 0, 1, 0, 1, -1), (0, 1, 1, 3, 3, 4, 5)])
    def test_symmetry_k_n_minus_k(self, ms):
        n = len(ms)
        for k in range(1, n):
            a = brute_force_conditional_wp(ms, k, 3, sigma=1.0)
            b = brute_force_conditional_wp(ms, n - k, 3, sigma=1.0)
            assert a == pytest.approx(b, rel=1e-9, abs=1e-12)

    def test_bridge_law_support(self):
        law = conditional_bridge_law([0, 0, 2, 2], 2)
        assert law.values == (-2.0, 0.0, 2.0)
        assert law.probs == pytest.approx((1 / 6, 4 / 6, 1 / 6))

    def test_refuses_large_n(self):
        with pytest.raises(DomainError):
            brute_force_conditional_wp(list(range(13)), 3, 2)

    @pytest.mark.parametrize("p", [2, 4, 6])
    def test_quantile_quadrature_exact(self, p):
        vals, probs = (-1.5, -0.2, 0.4, 2.0), (0.1, 0.4, 0.3, 0.2)
        got = wp_discrete_vs_gaussian(vals, probs, 0.9, p)
        assert got == pytest.approx(_even_wp_exact(vals, probs, 0.9, p), rel=1e-8)

    def test_aggregated_dominated(self):
        d = FiniteDistribution((0.0, 2.0), (0.5, 0.5))
        m = BoundedModel(2.0, 1.0)
        for k in (1, 2, 3):
            assert aggregated_conditional_wp(d, 4, k, 2) <= omega_conditional(4, k, 2, m).value


class TestMarginalWp:
    def test_n1_matches_conditional(self):
        # the laws coincide once the conditional target variance sigma^2 k(n-k)/n equals 1
        a = brute_force_marginal_wp(PM1, 1, 2)
        assert a == pytest.approx(math.sqrt(2 - 2 * math.sqrt(2 / math.pi)), abs=1e-9)
        assert a == pytest.approx(brute_force_conditional_wp([-1, 1], 1, 2, sigma=math.sqrt(2)), abs=1e-9)

    def test_binary_dominated(self):
        d = FiniteDistribution((0.0, 2.0), (0.5, 0.5))
        for p in (2, 3, 4):
            assert brute_force_marginal_wp(d, 4, p) <= marginal_bound(4, p, BoundedModel(2.0, 1.0))

    def test_clt_pattern(self):
        d = FiniteDistribution((0.0, 1.0), (0.5, 0.5))
        v = [brute_force_marginal_wp(d, n, 2) for n in (4, 16, 64)]
        assert v[0] >= v[1] >= v[2]

    def test_sum_law_matches_binomial_path(self):
        d = FiniteDistribution((0.0, 1.0, 2.5), (0.3, 0.3, 0.4))
        law = sum_law(d, 3)
        assert sum(law.probs) == pytest.approx(1.0)
        assert np.dot(law.values, law.probs) == pytest.approx(0.0, abs=1e-9)
        b = FiniteDistribution((0.0, 2.0), (0.7, 0.3))
        direct = sum_law(b, 5)
        assert brute_force_marginal_wp(b, 5, 3) == pytest.approx(
            wp_discrete_vs_gaussian(direct.values, direct.probs, b.std * math.sqrt(5), 3), rel=1e-9)


class TestDyadicCoupling:
    def test_n2_hand_check(self):
        tr = binary_dyadic_coupling(2, 0.5, 1.0, seed=3)
        h = int(round(tr.Y.sum()))
        assert tr.W[0] == pytest.approx(tr.Y[0] - tr.Y.sum() / 2)
        assert tr.W[1] == 0.0
        F_left = stats.binom.cdf(h - 1, 2, 0.5)
        pm = stats.binom.pmf(h, 2, 0.5)
        Z2 = math.sqrt(2) * 0.5 * stats.norm.ppf(F_left + tr.uniforms[0] * pm)
        assert tr.Z[-1] == pytest.approx(Z2, rel=1e-12)

    def test_identities(self):
        tr = binary_dyadic_coupling(32, 0.3, 2.0, seed=1)
        k = np.arange(1, 33)
        assert np.allclose(tr.W, tr.S - k / 32 * tr.S[-1])
        assert np.allclose(tr.Z, tr.Z_tilde + k / 32 * tr.Z[-1])
        assert tr.Z_tilde[-1] == 0.0

    def test_covariance(self):
        n, M, q, R = 16, 10_000, 0.5, 1.0
        _, _, Z, _, _, _ = dyadic_coupling_batch(n, q, R, np.random.default_rng(11), M)
        s2 = R * R * q * (1 - q)
        emp = Z.T @ Z / M
        i = np.arange(1, n + 1)
        target = s2 * np.minimum.outer(i, i)
        # se of a sample second moment of a centred Gaussian pair: sqrt((s_ii s_jj + s_ij^2) / M)
        se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / M)
        assert np.all(np.abs(emp - target) <= 5 * se)

    def test_deterministic(self):
        a = binary_dyadic_coupling(16, 0.5, 1.0, 9)
        b = binary_dyadic_coupling(16, 0.5, 1.0, 9)
        assert np.array_equal(a.Z, b.Z) and np.array_equal(a.uniforms, b.uniforms)

    def test_power_of_two(self):
        with pytest.raises(DomainError):
            binary_dyadic_coupling(12, 0.5, 1.0, 0)


@pytest.mark.parametrize("n", [64])
def test_coverage_small(n):
    rep = coverage_experiment(n, 0.1, 400, seed=3)
    assert rep.passed
    assert rep.exceedance_rate <= 0.1 + 3 * math.sqrt(0.1 / 400)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0, 2.0]), min_size=2, max_size=6), st.sampled_from([2, 3, 4]))
def test_three_point_dominance(ms, p):
    d = FiniteDistribution((0.0, 1.0, 2.0), (0.25, 0.5, 0.25))
    m = BoundedModel(2.0, d.std)
    n = len(ms)
    for k in range(1, n):
        assert brute_force_conditional_wp(ms, k, p, sigma=d.std) <= omega_conditional(n, k, p, m).value + 1e-9
