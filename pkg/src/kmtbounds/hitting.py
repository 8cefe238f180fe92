"""Upper bounds on P(tau_N >= N) for drifted bounded walks."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .schedule import SplitConfig, ThresholdSchedule, build_sum_schedule, ceil_log2
from .special import DomainError, norm_ppf
from .wasserstein import BoundedModel, BoundSearchConfig

Z99 = float(norm_ppf(0.995))


@dataclass(frozen=True)
class HittingTimeProblem:
    N: int
    R: float
    mu_N: float
    sigma_N: float
    boundary: float | tuple[float, ...] = 10.0
    alpha: float = 0.05

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be positive")
        if not self.R > 0:
            raise DomainError("R must be positive")
        if abs(self.mu_N) > self.R / 2:
            raise DomainError("need |mu_N| <= R/2")
        if not 0 < self.sigma_N <= self.R / 2 * (1 + 1e-12):
            raise DomainError("need 0 < sigma_N <= R/2")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not isinstance(self.boundary, (int, float)):
            object.__setattr__(self, "boundary", tuple(float(x) for x in self.boundary))
            if len(self.boundary) < self.N:
                raise DomainError("tabulated boundary must cover 1..N")

    def boundary_array(self) -> np.ndarray:
        if isinstance(self.boundary, tuple):
            return np.asarray(self.boundary[: self.N], dtype=float)
        return np.full(self.N, float(self.boundary))


@dataclass(frozen=True)
class CrossingEstimate:
    point: float
    ci_halfwidth: float
    paths: int
    seed: int
    checkpoints: int = 0


def _checkpoints(N: int, limit: int) -> np.ndarray:
    """Times (1-based) at which the walk is compared with the boundary.

    All times when N <= limit.  Otherwise a dense prefix, a geometric ladder
    and a uniform grid ending at N; dropping constraints can only raise the
    probability of staying below, so the estimate stays an upper bound.
    """
    if N <= limit:
        return np.arange(1, N + 1)
    third = max(limit // 3, 1)
    pts = [np.arange(1, third + 1), np.unique(np.geomspace(1, N, third).astype(np.int64)),
           np.linspace(N / third, N, third).astype(np.int64)]
    out = np.unique(np.concatenate(pts + [np.array([N])]))
    return out[(out >= 1) & (out <= N)]


def crossing_probability(upper: np.ndarray, paths: int = 100_000, seed: int = 0, max_checkpoints: int = 4096,
                         threads: int | None = None, chunk: int = 5000) -> CrossingEstimate:
    """Monte-Carlo estimate of P(B_i <= upper_i for all i), B a standard Gaussian walk."""
    upper = np.asarray(upper, dtype=float)
    N = upper.size
    if paths < 1:
        raise DomainError("paths must be positive")
    times = _checkpoints(N, max_checkpoints)
    c = upper[times - 1]
    keep = np.isfinite(c)
    if np.any(np.isnan(c)):
        raise DomainError("boundary contains NaN")
    if not keep.any():
        return CrossingEstimate(1.0, 0.0, paths, seed, 0)
    sd = np.sqrt(np.diff(np.concatenate([[0], times])).astype(float))
    n_chunks = math.ceil(paths / chunk)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(chunk, paths - i * chunk) for i in range(n_chunks)]

    def work(i: int) -> int:
        rng = np.random.default_rng(seeds[i])
        B = np.zeros(sizes[i])
        ok = np.ones(sizes[i], dtype=bool)
        # walk along checkpoints in slabs to bound memory
        step = 256
        for a in range(0, len(times), step):
            inc = rng.standard_normal((sizes[i], min(step, len(times) - a))) * sd[a:a + step]
            path = B[:, None] + np.cumsum(inc, axis=1)
            ok &= np.all(path <= c[a:a + step], axis=1)
            B = path[:, -1]
        return int(ok.sum())

    threads = threads or int(os.environ.get("KMT_THREADS", "1") or 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            hits = sum(ex.map(work, range(n_chunks)))
    else:
        hits = sum(work(i) for i in range(n_chunks))
    p = hits / paths
    hw = Z99 * math.sqrt(p * (1 - p) / paths)
    hw = min(hw, p, 1 - p)
    return CrossingEstimate(p, hw, paths, seed, int(len(times)))


@dataclass
class HittingBound:
    bound: float
    alpha: float
    crossing: CrossingEstimate
    schedule: ThresholdSchedule | None
    trivial: bool

    @property
    def upper_confidence(self) -> float:
        return self.bound + self.crossing.ci_halfwidth


class ScheduleStore:
    """Sum schedules keyed by (n, R, sigma, alpha); shared across sweeps."""

    def __init__(self, cfg: BoundSearchConfig | None = None, split_cfg: SplitConfig | None = None):
        self.cfg = cfg
        self.split_cfg = split_cfg
        self._store: dict[tuple, ThresholdSchedule] = {}

    def get(self, n: int, model: BoundedModel, alpha: float) -> ThresholdSchedule:
        key = (n, model.R, model.sigma, alpha)
        if key not in self._store:
            self._store[key] = build_sum_schedule(n, model, alpha, self.cfg, self.split_cfg)
        return self._store[key]


def hitting_bound(problem: HittingTimeProblem, paths: int = 100_000, seed: int = 0,
                  store: ScheduleStore | None = None, schedule_values: np.ndarray | None = None,
                  max_checkpoints: int = 4096, threads: int | None = None) -> HittingBound:
    """alpha + P(for all i <= N: B_i <= (g_i - i mu_N + D_i) / sigma_N).

    D is the sum schedule for Y = X + R/2, which lives in [0, R].  For N not a
    power of two the schedule is built at the next power and truncated.
    ``schedule_values`` replaces D (used to probe the crossing term alone).
    """
    N = problem.N
    sched = None
    if schedule_values is None:
        n2 = 2 ** ceil_log2(N)
        model = BoundedModel(problem.R, problem.sigma_N)
        store = store or ScheduleStore()
        sched = store.get(n2, model, problem.alpha)
        D = sched.values[:N]
    else:
        D = np.asarray(schedule_values, dtype=float)[:N]
        if D.size != N:
            raise DomainError("schedule_values must cover 1..N")
    i = np.arange(1, N + 1)
    upper = (problem.boundary_array() - i * problem.mu_N + D) / problem.sigma_N
    cross = crossing_probability(upper, paths, seed, max_checkpoints, threads)
    b = problem.alpha + cross.point
    return HittingBound(b, problem.alpha, cross, sched, b >= 1.0)


@dataclass
class MinNResult:
    mu: float
    g: float
    N: int | None
    evaluated: dict[int, HittingBound] = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.N is not None

    def describe(self, j_max: int) -> str:
        return str(self.N) if self.found else f"trivial up to N_max=2^{j_max}"


def min_nontrivial_N(mu: float, g: float, R: float = 1.0, sigma: float = 0.5, paths: int = 100_000, seed: int = 0,
                     j_min: int = 1, j_max: int = 24, store: ScheduleStore | None = None,
                     max_checkpoints: int = 4096, threads: int | None = None) -> MinNResult:
    """Smallest N = 2^j with bound + CI half-width < 1, where mu_N = mu / sqrt(N) and alpha = 1/N.

    Binary search over j; assumes the verdict is monotone in j.
    """
    if not mu < 0:
        raise DomainError("mu must be negative")
    if not g > 0:
        raise DomainError("g must be positive")
    store = store or ScheduleStore()
    res = MinNResult(mu, g, None)

    def ok(j: int) -> bool:
        N = 2**j
        prob = HittingTimeProblem(N, R, mu / math.sqrt(N), sigma, g, 1.0 / N)
        hb = hitting_bound(prob, paths, seed, store, max_checkpoints=max_checkpoints, threads=threads)
        res.evaluated[N] = hb
        return hb.upper_confidence < 1.0

    lo, hi = j_min, j_max
    if not ok(hi):
        return res
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    res.N = 2**lo
    return res


def min_n_table(mus: Sequence[float], gs: Sequence[float], **kw) -> list[MinNResult]:
    store = kw.pop("store", None) or ScheduleStore()
    return [min_nontrivial_N(m, g, store=store, **kw) for m in mus for g in gs]
