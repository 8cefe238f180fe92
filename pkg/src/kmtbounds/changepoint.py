"""Online mean-shift detection with KMT-calibrated CUSUM thresholds."""

from __future__ import annotations

import bisect
import csv
import functools
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .empirical import (
    OracleCS,
    UnitScheduleCache,
    VarianceConfidenceSequence,
    default_fallback_share,
    default_variance_cs,
    fallback_threshold,
    quantize_range,
)
from .schedule import ScheduleKind, build_sum_schedule, delta_star
from .special import DomainError, norm_ppf
from .wasserstein import BoundedModel, BoundSearchConfig


_POW2 = 2 ** np.arange(62, dtype=np.int64)


def cusum(prefix_sums: Sequence[float], s: int, t: int) -> float:
    """|mean(Y_1..Y_s) - mean(Y_{s+1}..Y_t)|; prefix_sums[k] = Y_1 + ... + Y_k, prefix_sums[0] = 0."""
    if not 0 < s < t <= len(prefix_sums) - 1:
        raise DomainError(f"need 0 < s < t <= {len(prefix_sums) - 1}, got s={s}, t={t}")
    a = prefix_sums[s] / s
    b = (prefix_sums[t] - prefix_sums[s]) / (t - s)
    return abs(a - b)


@dataclass(frozen=True)
class BlockGrid:
    L_seq: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "L_seq", tuple(int(x) for x in self.L_seq))
        if not self.L_seq:
            raise DomainError("grid needs at least one block")
        if any(x < 0 for x in self.L_seq) or any(b <= a for a, b in zip(self.L_seq, self.L_seq[1:])):
            raise DomainError("L_seq must be strictly increasing nonnegative integers")

    @functools.cached_property
    def N(self) -> tuple[int, ...]:
        return tuple(np.cumsum([2**x for x in self.L_seq]).tolist())

    @functools.cached_property
    def N_array(self) -> np.ndarray:
        return np.asarray((0,) + self.N, dtype=np.int64)

    def blocks_of(self, k: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.N_array, k, side="left")

    @property
    def horizon(self) -> int:
        return self.N[-1]

    @classmethod
    def default(cls, horizon: int, first: int = 6) -> "BlockGrid":
        """L_i = i + 5 (blocks of 64, 128, ...) until the horizon is covered."""
        Ls, total = [], 0
        L = first
        while total < horizon:
            Ls.append(L)
            total += 2**L
            L += 1
        return cls(tuple(Ls))

    def block_of(self, k: int) -> int:
        """Index i (1-based) with N_{i-1} < k <= N_i."""
        N = self.N
        if not 1 <= k <= N[-1]:
            raise DomainError(f"k={k} outside the grid (1..{N[-1]})")
        return bisect.bisect_left(N, k) + 1

    def start(self, i: int) -> int:
        return 0 if i == 1 else self.N[i - 2]

    def length(self, i: int) -> int:
        return 2 ** self.L_seq[i - 1]


def grid_lookup(grid: BlockGrid, k: int) -> tuple[int, int]:
    """(l_L(k), u_L(k)); l = 0 when k < N_1."""
    if k < 1:
        raise DomainError("k must be >= 1")
    N = grid.N
    lo = bisect.bisect_right(N, k)  # number of N_i <= k
    u = bisect.bisect_left(N, k) + 1
    if u > len(N):
        raise DomainError(f"k={k} beyond the grid")
    return lo, u


@dataclass
class DetectorConfig:
    delta: float = 0.05
    delta1: float = 0.01
    delta2: float = 0.01
    beta: float = 2.0
    R: float = 1.0
    grid: BlockGrid = field(default_factory=lambda: BlockGrid.default(4096))
    cs_factory: Callable[[], VarianceConfidenceSequence] | None = None
    scan: str = "geometric"
    fallback_share: float | None = None
    bound_cfg: BoundSearchConfig | None = None

    def __post_init__(self):
        for name in ("delta", "delta1", "delta2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        if not self.delta1 + self.delta2 < self.delta:
            raise DomainError("config error: need delta1 + delta2 < delta")
        if not self.beta > 1:
            raise DomainError("beta must exceed 1")
        if not self.R > 0:
            raise DomainError("R must be positive")
        if self.scan not in ("geometric", "exhaustive"):
            raise DomainError("scan must be 'geometric' or 'exhaustive'")
        if self.cs_factory is None:
            R, d1 = self.R, self.delta1
            self.cs_factory = lambda: default_variance_cs(R, d1)
        if self.bound_cfg is None:
            self.bound_cfg = BoundSearchConfig.for_alpha(self.block_budget(len(self.grid.L_seq)) * 1e-3)

    @property
    def delta3(self) -> float:
        return self.delta - self.delta1 - self.delta2

    def block_budget(self, i: int) -> float:
        """delta_{2,i} = delta2 (1 - 1/beta) beta^{-(i-1)}; sums to delta2 over i >= 1."""
        if i < 1:
            raise DomainError("blocks are indexed from 1")
        return self.delta2 * (1 - 1 / self.beta) * self.beta ** (-(i - 1))


def oracle_config(sigma: float, **kw) -> DetectorConfig:
    """Detector whose variance intervals are the known sigma (calibration experiments)."""
    R = kw.get("R", 1.0)
    return DetectorConfig(cs_factory=lambda: OracleCS(R, sigma), **kw)


@dataclass
class BlockThresholds:
    i: int
    start: int
    length: int
    alpha0: float
    alpha1: float
    share: float
    delta_tilde: dict[int, float] = field(default_factory=dict)  # global k -> Delta~_k
    delta_star_final: float | None = None


class Detector:
    """Streaming detector; feed observations with ``update``."""

    def __init__(self, cfg: DetectorConfig, cache: UnitScheduleCache | None = None):
        self.cfg = cfg
        self.cs = cfg.cs_factory()
        if abs(self.cs.R - cfg.R) > 1e-12 * cfg.R:
            raise DomainError("confidence sequence range differs from the detector's R")
        self.cache = cache or UnitScheduleCache(cfg.bound_cfg)
        self.share = default_fallback_share(self.cs) if cfg.fallback_share is None else cfg.fallback_share
        if not 0 <= self.share < 1:
            raise DomainError("fallback_share must lie in [0, 1)")
        H = cfg.grid.horizon
        self.t = 0
        # index 0 is a placeholder so that arrays are indexed by time
        self.prefix = np.zeros(H + 1)
        self.sig_L = np.zeros(H + 1)
        self.sig_U = np.zeros(H + 1)
        self.dtilde = np.zeros(H + 1)     # Delta~_k
        self.cur_dstar = np.zeros(H + 1)  # delta~* of block u(t) using the interval at t
        nb = len(cfg.grid.L_seq)
        self.D = np.zeros(nb + 1)         # cumulative finalized delta~*
        self.blocks: dict[int, BlockThresholds] = {}
        self.alarm: tuple[int, int] | None = None
        self._split_cache = self.cache.memo

    # -- threshold machinery -------------------------------------------------

    def _split_fraction(self, i: int, m: int, budget: float) -> float:
        """alpha0 / budget chosen from information available before block i."""
        if i == 1:
            return 0.5
        iv_L = self.sig_L[self.cfg.grid.start(i)]
        if iv_L <= 0:
            return 0.5
        rq = quantize_range(self.cfg.R / iv_L)
        key = (rq, m, budget)
        if key not in self._split_cache:
            s = build_sum_schedule(m, BoundedModel.unit(rq), budget, self.cfg.bound_cfg)
            self._split_cache[key] = s.meta["alpha0_star"] / budget
        return self._split_cache[key]

    def _materialize(self, i: int) -> BlockThresholds:
        grid = self.cfg.grid
        m = grid.length(i)
        budget = self.cfg.block_budget(i)
        frac = self._split_fraction(i, m, budget)
        blk = BlockThresholds(i, grid.start(i), m, frac * budget, (1 - frac) * budget, self.share)
        self.blocks[i] = blk
        return blk

    def _delta_tilde(self, blk: BlockThresholds, k: int) -> float:
        j = k - blk.start
        lo, hi = self.sig_L[k], self.sig_U[k]
        a_sched = blk.alpha0 * (1 - blk.share)
        if lo <= 0:
            return fallback_threshold(j, blk.length, self.cfg.R, hi, blk.alpha0 * blk.share, ScheduleKind.BRIDGE)
        rq = quantize_range(self.cfg.R / lo)
        return hi * self.cache.get(rq, blk.length, a_sched, ScheduleKind.BRIDGE)[j]

    def _delta_star(self, blk: BlockThresholds, k: int) -> float:
        lo, hi = self.sig_L[k], self.sig_U[k]
        m = blk.length
        if lo <= 0:
            z = float(norm_ppf(1 - blk.alpha1 * blk.share / 2))
            return m * self.cfg.R + hi * math.sqrt(m) * z
        rq = quantize_range(self.cfg.R / lo)
        return hi * self._unit_dstar(rq, m, blk.alpha1 * (1 - blk.share))

    def _unit_dstar(self, rq: float, m: int, a1: float) -> float:
        key = ("dstar", rq, m, a1)
        if key not in self._split_cache:
            self._split_cache[key] = delta_star(m, BoundedModel.unit(rq), a1, self.cfg.bound_cfg)[0]
        return self._split_cache[key]

    # -- streaming -----------------------------------------------------------

    def update(self, y: float) -> tuple[int, int] | None:
        """Consume one observation; returns (s*, t*) the first time an alarm fires."""
        grid = self.cfg.grid
        if self.t >= grid.horizon:
            raise DomainError("stream exceeds the block grid horizon")
        iv = self.cs.update(y)
        self.t += 1
        t = self.t
        self.prefix[t] = self.prefix[t - 1] + float(y)
        self.sig_L[t] = iv.sigma_L
        self.sig_U[t] = iv.sigma_U
        b = grid.block_of(t)
        blk = self.blocks.get(b) or self._materialize(b)
        dt = self._delta_tilde(blk, t)
        blk.delta_tilde[t] = dt
        self.dtilde[t] = dt
        ds = self._delta_star(blk, t)
        self.cur_dstar[t] = ds
        if t == grid.N[b - 1]:
            blk.delta_star_final = ds
            self.D[b] = self.D[b - 1] + ds
        if self.alarm is not None or t < 2:
            return None
        s = self.scan_set(t)
        T = self.statistic(s, t)
        C = self.threshold(s, t)
        hit = np.nonzero(T > C)[0]
        if hit.size:
            self.alarm = (int(s[hit[0]]), t)
            return self.alarm
        return None

    def run(self, stream: Iterable[float]) -> tuple[int, int] | None:
        for y in stream:
            self.update(y)
            if self.alarm is not None:
                break
        return self.alarm

    def scan_set(self, t: int) -> np.ndarray:
        if self.cfg.scan == "exhaustive":
            return np.arange(1, t)
        off = _POW2[_POW2 < t]
        Na = self.cfg.grid.N_array[1:]
        return np.unique(np.concatenate([t - off, Na[Na < t]]))

    def statistic(self, s: np.ndarray, t: int) -> np.ndarray:
        P = self.prefix
        return np.abs(P[s] / s - (P[t] - P[s]) / (t - s))

    # -- thresholds ----------------------------------------------------------

    def g_beta(self, s, t: int) -> np.ndarray:
        """Coupling slack for S_s - (s/t) S_t, vectorized over s."""
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        if t > self.t:
            raise DomainError("materialize first: t is in the future")
        if np.any(s < 1) or np.any(s >= t):
            raise DomainError("need 0 < s < t")
        grid = self.cfg.grid
        bt = grid.block_of(t)
        D = self.D
        Na = grid.N_array
        bs = grid.blocks_of(s)
        start_s = Na[bs - 1]
        len_s = Na[bs] - start_s
        r = s / t
        dt_s = self.dtilde[s]
        dt_t = self.dtilde[t]
        cur = self.cur_dstar[t]
        same = bs == bt
        g = np.empty(len(s))
        # same block: sum_{k < b} d*_k (1 - s/t) + (s/t) d*_b + D~_s + (s/t) D~_t
        g[same] = D[bt - 1] * (1 - r[same]) + r[same] * cur + dt_s[same] + r[same] * dt_t
        o = ~same
        if np.any(o):
            bo = bs[o]
            frac_s = (s[o] - start_s[o]) / len_s[o]
            frac_t = (t - grid.start(bt)) / grid.length(bt)
            d_bs = D[bo] - D[bo - 1]
            g[o] = (D[bo - 1] * (1 - r[o])
                    + r[o] * (D[bt - 1] - D[bo])
                    + r[o] * frac_t * cur
                    + np.abs(frac_s - r[o]) * d_bs
                    + dt_s[o] + r[o] * dt_t)
        return g

    def gaussian_part(self, s: np.ndarray, t: int) -> np.ndarray:
        d3 = self.cfg.delta3
        if d3 <= 0:
            raise DomainError("config error: delta - delta1 - delta2 must be positive")
        lg = math.log(2 * (t - 1) * math.sqrt(t + 1) / d3)
        return self.sig_U[t] * np.sqrt(t / (s * (t - s))) * math.sqrt((1 + 1 / t) * 2 * lg)

    def threshold(self, s, t: int) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        return self.gaussian_part(s, t) + t / (s * (t - s)) * self.g_beta(s, t)


def threshold_C(s, t: int, cfg: DetectorConfig, state: Detector) -> np.ndarray:
    if state.cfg is not cfg:
        raise DomainError("state was built for a different config")
    return state.threshold(s, t)


# ---------------------------------------------------------------------------
# simulation harness


def uniform_average_stream(rng: np.random.Generator, horizon: int, ell: int, shift: float = 0.0,
                           T_cp: int | None = None) -> np.ndarray:
    """Averages of ell Uniform[0,1]; mean moves up by shift after T_cp."""
    y = rng.random((horizon, ell)).mean(axis=1)
    if shift and T_cp is not None:
        y[T_cp:] += shift
    return y


def uniform_average_sigma(ell: int) -> float:
    return math.sqrt(1 / (12 * ell))


@dataclass
class DetectionSummary:
    shift: float
    trials: int
    detections: int
    false_alarms: int
    delays: list[int]

    @property
    def detection_rate(self) -> float:
        return self.detections / self.trials

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.trials

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.delays)) if self.delays else math.nan

    def delay_quantiles(self, qs=(0.1, 0.5, 0.9)) -> list[float]:
        if not self.delays:
            return [math.nan for _ in qs]
        return [float(x) for x in np.quantile(self.delays, qs)]


def run_detection_experiment(shift: float, ell: int = 30, T_cp: int = 2000, horizon: int = 4096,
                             cfg: DetectorConfig | None = None, trials: int = 100, seed: int = 0,
                             oracle_sigma: bool = True) -> DetectionSummary:
    """Monte-Carlo detection rate for a mean shift at T_cp.

    The range is R = 1 + shift so that shifted averages stay in [0, R].  An
    alarm before T_cp counts as a false alarm, not a detection.
    """
    if shift < 0:
        raise DomainError("shift must be nonnegative")
    if horizon > T_cp and T_cp < 1:
        raise DomainError("T_cp must be positive")
    R = 1.0 + shift
    if cfg is None:
        grid = BlockGrid.default(horizon)
        if oracle_sigma:
            cfg = oracle_config(uniform_average_sigma(ell), R=R, grid=grid)
        else:
            cfg = DetectorConfig(R=R, grid=grid)
    rng = np.random.default_rng(seed)
    cache = UnitScheduleCache(cfg.bound_cfg)
    det = fa = 0
    delays = []
    for _ in range(trials):
        y = uniform_average_stream(rng, horizon, ell, shift, T_cp)
        d = Detector(cfg, cache)
        alarm = d.run(y)
        if alarm is None:
            continue
        t_alarm = alarm[1]
        if t_alarm <= T_cp:
            fa += 1
        else:
            det += 1
            delays.append(t_alarm - T_cp)
    return DetectionSummary(shift, trials, det, fa, delays)


def detection_curve_csv(summaries: Sequence[DetectionSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["shift", "detection_rate", "mean_delay"])
    for s in summaries:
        w.writerow([s.shift, s.detection_rate, s.mean_delay])
    return buf.getvalue()
