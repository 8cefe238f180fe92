"""Ground-truth machinery for small instances.

Brute-force conditional and marginal Wasserstein distances, the randomized
probability integral transform, and the dyadic coupling of a binary sample
with a Gaussian process of covariance sigma^2 min(i, j).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as si
from scipy import stats

from .special import DomainError, norm_ppf

_PIT_EPS = 1e-15


@dataclass(frozen=True)
class FiniteDistribution:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        q = np.asarray(self.probs, dtype=float)
        if v.shape != q.shape or v.size == 0:
            raise DomainError("values and probs must be nonempty and aligned")
        if np.any(np.diff(v) <= 0):
            raise DomainError("values must be strictly increasing")
        if np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
            raise DomainError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "probs", tuple(float(x) for x in q))

    @classmethod
    def from_samples(cls, xs, weights=None) -> "FiniteDistribution":
        weights = np.ones(len(xs)) if weights is None else np.asarray(weights, dtype=float)
        acc: dict[float, float] = {}
        for x, w in zip(xs, weights):
            acc[float(x)] = acc.get(float(x), 0.0) + float(w)
        keys = sorted(acc)
        tot = sum(acc.values())
        probs = [acc[k] / tot for k in keys]
        # renormalise away rounding so the constructor check passes
        probs[-1] = 1.0 - sum(probs[:-1])
        return cls(tuple(keys), tuple(max(p, 0.0) for p in probs))

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def std(self) -> float:
        v = np.asarray(self.values)
        return float(math.sqrt(max(np.dot((v - self.mean) ** 2, self.probs), 0.0)))

    def cdf_left(self, x: float) -> float:
        """F(x-)"""
        return float(sum(q for v, q in zip(self.values, self.probs) if v < x))

    def mass(self, x: float) -> float:
        for v, q in zip(self.values, self.probs):
            if v == x:
                return q
        raise DomainError(f"{x} is not an atom")


@dataclass(frozen=True)
class PitResult:
    value: float
    clamped: bool


def randomized_pit_result(dist: FiniteDistribution, x: float, u: float, target_sigma: float) -> PitResult:
    if not 0.0 <= u <= 1.0:
        raise DomainError("u must lie in [0, 1]")
    level = dist.cdf_left(x) + u * dist.mass(x)
    clamped = False
    if level <= _PIT_EPS or level >= 1 - _PIT_EPS:
        clamped = True
        level = min(max(level, _PIT_EPS), 1 - _PIT_EPS)
    return PitResult(float(target_sigma * norm_ppf(level)), clamped)


def randomized_pit(dist: FiniteDistribution, x: float, u: float, target_sigma: float) -> float:
    """target_sigma * Phi^{-1}(F(x-) + u p(x)); exactly Gaussian over random (x, u)."""
    return randomized_pit_result(dist, x, u, target_sigma).value


def _abs_moment_piece(v: float, s: float, p: float, z0: float, z1: float) -> float:
    # int_{z0}^{z1} |v - s z|^p phi(z) dz, split at the kink z = v/s
    if z1 <= z0:
        return 0.0
    f = lambda z: abs(v - s * z) ** p * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    pts = [z0, z1]
    kink = v / s
    if z0 < kink < z1:
        pts = [z0, kink, z1]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = si.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)
        total += val
    return total


def wp_discrete_vs_gaussian(values, probs, s: float, p: float) -> float:
    """W_p between a finite law and N(0, s^2) via the quantile coupling."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(values)
    values, probs = values[order], probs[order]
    if s == 0:
        return float(np.dot(np.abs(values) ** p, probs) ** (1 / p))
    edges = np.concatenate([[0.0], np.cumsum(probs)])
    edges[-1] = 1.0
    zs = norm_ppf(np.clip(edges, 0, 1))
    total = 0.0
    for i, v in enumerate(values):
        if probs[i] <= 0:
            continue
        total += _abs_moment_piece(float(v), s, p, float(zs[i]), float(zs[i + 1]))
    return float(max(total, 0.0) ** (1 / p))


def conditional_bridge_law(multiset, k: int) -> FiniteDistribution:
    """Law of W_k given the unordered sample: uniform over k-subsets."""
    xs = np.asarray(multiset, dtype=float)
    n = xs.size
    total = xs.sum()
    counts: Counter = Counter()
    for sub in itertools.combinations(range(n), k):
        w = xs[list(sub)].sum() - k / n * total
        counts[round(float(w), 12)] += 1
    keys = sorted(counts)
    tot = sum(counts.values())
    return FiniteDistribution.from_samples(keys, [counts[x] / tot for x in keys])


def brute_force_conditional_wp(multiset, k: int, p: float, sigma: float | None = None) -> float:
    """W_p(law(W_k | sample), N(0, sigma^2 k(n-k)/n)).

    sigma defaults to the sample's own (1/n) standard deviation.
    """
    xs = np.asarray(multiset, dtype=float)
    n = xs.size
    if n > 12:
        raise DomainError("brute force is limited to n <= 12")
    if not 1 <= k <= n - 1:
        raise DomainError("k must lie in [1, n-1]")
    if sigma is None:
        # np.std leaves rounding residue on constant samples
        sigma = 0.0 if np.ptp(xs) == 0 else float(xs.std())
    law = conditional_bridge_law(xs, k)
    s = sigma * math.sqrt(k * (n - k) / n)
    return wp_discrete_vs_gaussian(law.values, law.probs, s, p)


def aggregated_conditional_wp(dist: FiniteDistribution, n: int, k: int, p: float) -> float:
    """|| W_p(W_k, N(0, sigma_{n,k}^2) | sample) ||_p over an i.i.d. sample from dist."""
    sigma = dist.std
    m = len(dist.values)
    acc = 0.0
    for counts in _compositions(n, m):
        logw = math.lgamma(n + 1) - sum(math.lgamma(c + 1) for c in counts)
        logw += sum(c * math.log(q) for c, q in zip(counts, dist.probs) if c)
        if any(c and q == 0 for c, q in zip(counts, dist.probs)):
            continue
        sample = np.repeat(dist.values, counts)
        d = brute_force_conditional_wp(sample, k, p, sigma=sigma)
        acc += math.exp(logw) * d**p
    return acc ** (1 / p)


def _compositions(n: int, m: int):
    if m == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, m - 1):
            yield (first,) + rest


def sum_law(dist: FiniteDistribution, n: int) -> FiniteDistribution:
    """Exact law of the centred sum of n i.i.d. draws."""
    law = {0.0: 1.0}
    mu = dist.mean
    for _ in range(n):
        nxt: dict[float, float] = {}
        for s, ps in law.items():
            for v, q in zip(dist.values, dist.probs):
                key = round(s + v - mu, 10)
                nxt[key] = nxt.get(key, 0.0) + ps * q
        law = nxt
        if len(law) > 10**6:
            raise DomainError("state space too large")
    keys = sorted(law)
    return FiniteDistribution.from_samples(keys, [law[x] for x in keys])


def brute_force_marginal_wp(dist: FiniteDistribution, n: int, p: float) -> float:
    """W_p(S_n - n mu, N(0, n sigma^2))."""
    if len(dist.values) ** n > 10**6 and len(dist.values) > 2:
        raise DomainError("state space too large")
    if n > 20 and len(dist.values) > 2:
        raise DomainError("n must be <= 20")
    if len(dist.values) == 2:
        a, b = dist.values
        q = dist.probs[1]
        j = np.arange(n + 1)
        pm = stats.binom.pmf(j, n, q)
        vals = n * a + j * (b - a) - n * dist.mean
        return wp_discrete_vs_gaussian(vals, pm, dist.std * math.sqrt(n), p)
    law = sum_law(dist, n)
    return wp_discrete_vs_gaussian(law.values, law.probs, dist.std * math.sqrt(n), p)


# ---------------------------------------------------------------------------
# dyadic coupling for binary alphabets


def _pit_levels(cdf_left, pmf, u):
    level = cdf_left + u * pmf
    return np.clip(level, _PIT_EPS, 1 - _PIT_EPS)


@dataclass
class CouplingTrace:
    n: int
    R: float
    success_prob: float
    seed: int
    Y: np.ndarray
    S: np.ndarray        # centred partial sums S_1..S_n
    Z: np.ndarray        # Z_1..Z_n
    W: np.ndarray        # bridge W_1..W_n
    Z_tilde: np.ndarray  # Z~_1..Z~_n
    uniforms: np.ndarray = field(repr=False)


def dyadic_coupling_batch(n: int, success_prob: float, R: float, rng: np.random.Generator, trials: int):
    """Vectorised dyadic coupling; returns (Y, S, Z, W, Z_tilde, U) with a leading trial axis."""
    L = int(round(math.log2(n))) if n >= 1 else -1
    if n < 1 or 2**L != n:
        raise DomainError("n must be a power of two")
    q = float(success_prob)
    if not 0 < q < 1:
        raise DomainError("success_prob must lie in (0, 1)")
    sigma = R * math.sqrt(q * (1 - q))
    bits = (rng.random((trials, n)) < q).astype(np.int64)
    Y = R * bits
    U_top = rng.random(trials)
    U_mid = rng.random((trials, max(n - 1, 0)))

    cum = np.concatenate([np.zeros((trials, 1), dtype=np.int64), np.cumsum(bits, axis=1)], axis=1)
    total = cum[:, -1]
    Zt = np.zeros((trials, n + 1))
    used = 0
    m = n
    while m >= 2:
        half = m // 2
        nb = n // m
        starts = np.arange(nb) * m
        h = cum[:, starts + m] - cum[:, starts]          # successes in each block
        J = cum[:, starts + half] - cum[:, starts]       # successes in first half
        u = U_mid[:, used:used + nb]
        used += nb
        # J | h ~ Hypergeom(population m, h successes, half draws)
        F_left = stats.hypergeom.cdf(J - 1, m, h, half)
        pm = stats.hypergeom.pmf(J, m, h, half)
        level = _pit_levels(F_left, pm, u)
        G = 0.5 * math.sqrt(m) * sigma * norm_ppf(level)
        tent = np.concatenate([np.arange(1, half + 1), np.arange(half - 1, -1, -1)]) * (2.0 / m)
        Zt[:, 1:] += (G[:, :, None] * tent[None, None, :]).reshape(trials, n)
        m = half
    # top level: centred S_n coupled through the binomial law
    F_left = stats.binom.cdf(total - 1, n, q)
    pm = stats.binom.pmf(total, n, q)
    Zn = math.sqrt(n) * sigma * norm_ppf(_pit_levels(F_left, pm, U_top))
    k = np.arange(1, n + 1)
    S = R * cum[:, 1:] - k[None, :] * R * q
    W = R * cum[:, 1:] - (k[None, :] / n) * (R * total)[:, None]
    Z = Zt[:, 1:] + (k[None, :] / n) * Zn[:, None]
    U = np.concatenate([U_top[:, None], U_mid], axis=1)
    return Y, S, Z, W, Zt[:, 1:], U


def binary_dyadic_coupling(n: int, success_prob: float, R: float, seed: int) -> CouplingTrace:
    rng = np.random.default_rng(seed)
    Y, S, Z, W, Zt, U = dyadic_coupling_batch(n, success_prob, R, rng, 1)
    return CouplingTrace(n, R, success_prob, seed, Y[0], S[0], Z[0], W[0], Zt[0], U[0])


@dataclass(frozen=True)
class CoverageReport:
    n: int
    alpha: float
    trials: int
    seed: int
    success_prob: float
    bridge_exceedance_rate: float
    sum_exceedance_rate: float
    slack: float

    @property
    def exceedance_rate(self) -> float:
        return max(self.bridge_exceedance_rate, self.sum_exceedance_rate)

    @property
    def passed(self) -> bool:
        return self.exceedance_rate <= self.alpha + self.slack


def coverage_experiment(n: int, alpha: float, trials: int, seed: int, success_prob: float = 0.5,
                        R: float = 1.0, cfg=None, bridge=None, summ=None, chunk: int = 500) -> CoverageReport:
    """Exceedance frequencies of the bridge and sum schedules under the dyadic coupling."""
    from .schedule import build_bridge_schedule, build_sum_schedule
    from .wasserstein import BoundedModel

    sigma = R * math.sqrt(success_prob * (1 - success_prob))
    model = BoundedModel(R, sigma)
    if bridge is None:
        bridge = build_bridge_schedule(n, model, alpha, cfg)
    if summ is None:
        summ = build_sum_schedule(n, model, alpha, cfg)
    rng = np.random.default_rng(seed)
    d_bridge = np.asarray(bridge.values)
    d_sum = np.asarray(summ.values)
    hit_b = hit_s = 0
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        _, S, Z, W, Zt, _ = dyadic_coupling_batch(n, success_prob, R, rng, t)
        hit_b += int(np.any(np.abs(W - Zt)[:, :-1] >= d_bridge[None, :-1], axis=1).sum())
        hit_s += int(np.any(np.abs(S - Z) >= d_sum[None, :], axis=1).sum())
        done += t
    return CoverageReport(n, alpha, trials, seed, success_prob, hit_b / trials, hit_s / trials,
                          3 * math.sqrt(alpha / trials))
