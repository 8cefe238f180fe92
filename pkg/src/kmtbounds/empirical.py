"""Variance confidence sequences and the unknown-sigma threshold wrapper."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .schedule import ScheduleKind, ThresholdSchedule, build_bridge_schedule, build_sum_schedule
from .special import DomainError, norm_ppf
from .wasserstein import BoundedModel, BoundSearchConfig


@dataclass(frozen=True)
class Interval:
    k: int
    sigma_L: float
    sigma_U: float


class VarianceConfidenceSequence:
    """Streaming anytime-valid intervals for sigma of a [0, R]-valued stream.

    Call ``update(y)`` once per observation; it returns the interval for the
    data seen so far.  Subclasses implement ``_interval``.
    """

    estimator_id = "abstract"

    def __init__(self, R: float, delta: float):
        if not R > 0:
            raise DomainError("R must be positive")
        if not 0 < delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        self.R = float(R)
        self.delta = float(delta)
        self.k = 0
        self._mean = 0.0
        self._m2 = 0.0
        self.intervals: list[Interval] = []

    def update(self, y: float) -> Interval:
        y = float(y)
        if not -1e-12 <= y <= self.R * (1 + 1e-12):
            raise DomainError(f"observation {y} outside [0, R]")
        self.k += 1
        d = y - self._mean
        self._mean += d / self.k
        self._m2 += d * (y - self._mean)
        lo, hi = self._interval()
        half = self.R / 2
        lo = min(max(lo, 0.0), half)
        hi = min(max(hi, lo), half)
        iv = Interval(self.k, lo, hi)
        self.intervals.append(iv)
        return iv

    def extend(self, ys: Iterable[float]) -> list[Interval]:
        return [self.update(y) for y in ys]

    @property
    def sample_std(self) -> float:
        if self.k < 2:
            return 0.0
        return math.sqrt(max(self._m2, 0.0) / (self.k - 1))

    def _interval(self) -> tuple[float, float]:
        raise NotImplementedError


class StitchedStdCS(VarianceConfidenceSequence):
    """Union bound over time of a bounded-difference deviation for the sample std.

    At time k the budget is 6 delta / (pi^2 k^2) and the half-width is
    R sqrt(2 log(2/delta_k) / (k-1)).
    """

    estimator_id = "stitched-std"

    def _interval(self):
        k = self.k
        if k < 2:
            return 0.0, self.R / 2
        dk = 6 * self.delta / (math.pi**2 * k * k)
        h = self.R * math.sqrt(2 * math.log(2 / dk) / (k - 1))
        s = self.sample_std
        return s - h, s + h


class OracleCS(VarianceConfidenceSequence):
    """Degenerate intervals at a known sigma; used for calibration experiments."""

    estimator_id = "oracle"

    def __init__(self, R: float, sigma: float, delta: float = 0.5):
        super().__init__(R, delta)
        if not 0 <= sigma <= R / 2 * (1 + 1e-12):
            raise DomainError("sigma must lie in [0, R/2]")
        self.sigma = min(float(sigma), R / 2)

    def _interval(self):
        return self.sigma, self.sigma


def default_variance_cs(R: float, delta: float) -> VarianceConfidenceSequence:
    return StitchedStdCS(R, delta)


# ---------------------------------------------------------------------------

QUANT_BASE = 1.1


def quantize_range(r: float) -> float:
    """Round r >= 2 up to the grid 2 * 1.1^j."""
    if r <= 2.0:
        return 2.0
    j = math.ceil(math.log(r / 2) / math.log(QUANT_BASE) - 1e-12)
    q = 2 * QUANT_BASE**j
    while q < r:
        j += 1
        q = 2 * QUANT_BASE**j
    return q


def fallback_threshold(k: int, n: int, R: float, sigma_U: float, alpha: float, kind: ScheduleKind) -> float:
    """Deterministic range bound plus a union-bounded Gaussian tail.

    Valid whenever sigma <= sigma_U, with no lower variance bound needed.
    """
    z = float(norm_ppf(1 - alpha / (2 * n)))
    if ScheduleKind(kind) is ScheduleKind.BRIDGE:
        if k >= n:
            return 0.0
        v = k * (n - k) / n
        return R * v + sigma_U * math.sqrt(v) * z
    return R * k + sigma_U * math.sqrt(k) * z


@dataclass
class EmpiricalRow:
    k: int
    sigma_L: float
    sigma_U: float
    threshold: float
    fallback: bool = False


@dataclass
class EmpiricalSchedule:
    alpha: float
    rho: float
    n: int
    kind: ScheduleKind
    rows: list[EmpiricalRow] = field(default_factory=list)

    @property
    def thresholds(self) -> list[float]:
        return [r.threshold for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sigma_L", "sigma_U", "threshold"])
        for r in self.rows:
            w.writerow([r.k, repr(r.sigma_L), repr(r.sigma_U), repr(r.threshold)])
        return buf.getvalue()


class UnitScheduleCache:
    """Unit-variance schedules keyed by (quantized range, n, alpha, kind)."""

    def __init__(self, cfg: BoundSearchConfig | None = None):
        self.cfg = cfg
        self._store: dict[tuple, ThresholdSchedule] = {}
        # scratch memo for derived scalars (split fractions, delta*)
        self.memo: dict[tuple, float] = {}

    def get(self, R_tilde: float, n: int, alpha: float, kind: ScheduleKind) -> ThresholdSchedule:
        key = (R_tilde, n, alpha, ScheduleKind(kind))
        if key not in self._store:
            model = BoundedModel.unit(R_tilde)
            if ScheduleKind(kind) is ScheduleKind.BRIDGE:
                self._store[key] = build_bridge_schedule(n, model, alpha, self.cfg)
            else:
                self._store[key] = build_sum_schedule(n, model, alpha, self.cfg)
        return self._store[key]


def default_fallback_share(cs: VarianceConfidenceSequence) -> float:
    """Budget fraction reserved for indices where sigma_L = 0.

    The schedule event and the fallback event are different events, so a
    sequence that can mix both needs the budget split between them.  A known
    positive sigma never falls back and keeps the whole budget.
    """
    if isinstance(cs, OracleCS) and cs.sigma > 0:
        return 0.0
    return 0.5


def threshold_from_interval(k: int, iv_L: float, iv_U: float, n: int, R: float, alpha: float,
                            kind: ScheduleKind, cache: UnitScheduleCache, quantize: bool = True,
                            share: float = 0.0) -> tuple[float, bool]:
    if iv_L <= 0:
        if share <= 0:
            raise DomainError("sigma_L = 0 needs a positive fallback share")
        return fallback_threshold(k, n, R, iv_U, alpha * share, kind), True
    rt = R / iv_L
    rt = quantize_range(rt) if quantize else max(rt, 2.0)
    sched = cache.get(rt, n, alpha * (1 - share), kind)
    return iv_U * sched[k], False


def empirical_thresholds(stream: Iterable[float], cs: VarianceConfidenceSequence, alpha: float, rho: float, n: int,
                         cfg: BoundSearchConfig | None = None, kind: ScheduleKind | str = ScheduleKind.BRIDGE,
                         cache: UnitScheduleCache | None = None, quantize: bool = True,
                         fallback_share: float | None = None) -> Iterator[EmpiricalRow]:
    """Yield sigma_U_k * Delta_k(alpha(1-rho), R/sigma_L_k, 1) one observation at a time."""
    if not 0 < rho < 1:
        raise DomainError("rho must lie in (0, 1)")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if cs.delta > rho * alpha * (1 + 1e-12):
        raise DomainError("the confidence sequence must be built with delta <= rho * alpha")
    kind = ScheduleKind(kind)
    cache = cache or UnitScheduleCache(cfg)
    share = default_fallback_share(cs) if fallback_share is None else fallback_share
    if not 0 <= share < 1:
        raise DomainError("fallback_share must lie in [0, 1)")
    a = alpha * (1 - rho)
    for k, y in enumerate(stream, start=1):
        if k > n:
            break
        iv = cs.update(y)
        thr, fb = threshold_from_interval(k, iv.sigma_L, iv.sigma_U, n, cs.R, a, kind, cache, quantize, share)
        yield EmpiricalRow(k, iv.sigma_L, iv.sigma_U, thr, fb)


def empirical_bridge_thresholds(stream, cs, alpha, rho, n, cfg=None, **kw) -> EmpiricalSchedule:
    out = EmpiricalSchedule(alpha, rho, n, ScheduleKind.BRIDGE)
    out.rows.extend(empirical_thresholds(stream, cs, alpha, rho, n, cfg, ScheduleKind.BRIDGE, **kw))
    return out


def empirical_sum_thresholds(stream, cs, alpha, rho, n, cfg=None, **kw) -> EmpiricalSchedule:
    out = EmpiricalSchedule(alpha, rho, n, ScheduleKind.SUM)
    out.rows.extend(empirical_thresholds(stream, cs, alpha, rho, n, cfg, ScheduleKind.SUM, **kw))
    return out
