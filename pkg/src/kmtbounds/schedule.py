"""Coupling threshold schedules for the bridge W_k and the partial sums S_k."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .special import DomainError, norm_ppf
from .wasserstein import (
    BoundedModel,
    BoundSearchConfig,
    marginal_bound,
    omega_conditional,
)


class BudgetInfeasible(RuntimeError):
    pass


class ScheduleKind(str, enum.Enum):
    BRIDGE = "bridge"
    SUM = "sum"


@dataclass(frozen=True)
class BetaSequence:
    nu0: float
    betas: tuple[float, ...]


def beta_sequence(nu0: float, L: int, weights: Sequence[float] | None = None) -> BetaSequence:
    """beta_0 = 0, beta_l = 2 beta_{l-1} - beta_{l-1}^2 + C_l nu0 (C_l = 1 by default)."""
    if not 0.0 <= nu0 <= 1.0:
        raise DomainError("nu0 must lie in [0, 1]")
    if L < 0:
        raise DomainError("L must be nonnegative")
    betas = [0.0]
    for l in range(1, L + 1):
        b = betas[-1]
        c = 1.0 if weights is None else weights[l - 1]
        betas.append(2 * b - b * b + c * nu0)
    return BetaSequence(nu0, tuple(betas))


def _beta_L(nu0: float, L: int, weights) -> float:
    b = 0.0
    for l in range(1, L + 1):
        c = 1.0 if weights is None else weights[l - 1]
        b = 2 * b - b * b + c * nu0
        if b > 1.0:
            return b
    return b


def find_nu0_star(alpha: float, L: int, weights: Sequence[float] | None = None) -> float:
    """Largest nu0 with beta_L(nu0) <= alpha, by bisection to float resolution."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if L == 0:
        return alpha
    lo, hi = 0.0, 1.0
    if weights is not None:
        hi = 1.0 / min(weights)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _beta_L(mid, L, weights) <= alpha:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class VariantConfig:
    """Level weights C_l (budget C_l nu0 at level l) and the zeta fallback switch."""

    beta: float | None = None
    weights: tuple[float, ...] | None = None
    zeta_enabled: bool = True

    def level_weights(self, L: int) -> tuple[float, ...]:
        if self.weights is not None:
            if len(self.weights) < L:
                raise DomainError("need one weight per level")
            w = tuple(float(x) for x in self.weights[:L])
        elif self.beta is not None:
            if not self.beta > 0:
                raise DomainError("beta must be positive")
            w = tuple(self.beta**l for l in range(1, L + 1))
        else:
            w = tuple(1.0 for _ in range(L))
        if any(x <= 0 for x in w):
            raise DomainError("level weights must be positive")
        return w


def zeta_fallback(half_n: int, model: BoundedModel, budget: float) -> float:
    """Threshold with P(|W_{n/2} - Z~_{n/2}| >= zeta) <= budget, n = 2 half_n.

    |W_{n/2}| <= half_n R_s surely and Z~_{n/2} ~ N(0, sigma^2 n/4), so the
    two-sided Gaussian quantile covers the remainder.
    """
    if not 0.0 < budget < 1.0:
        raise DomainError("budget must lie in (0, 1)")
    n = 2 * half_n
    z = max(0.0, float(norm_ppf(1 - budget / 2)))
    return half_n * model.R_s + model.sigma * math.sqrt(n) / 2 * z


@dataclass
class ThresholdSchedule:
    n: int
    L: int
    alpha: float
    kind: ScheduleKind
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ScheduleKind(self.kind)
        self.values = np.asarray(self.values, dtype=float)

    def __getitem__(self, k: int) -> float:
        """1-based access, matching the index k of Delta_k."""
        if not 1 <= k <= self.n:
            raise IndexError(k)
        return float(self.values[k - 1])

    @property
    def max_value(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "value"])
        for k, v in enumerate(self.values, start=1):
            w.writerow([k, repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "L": self.L,
            "alpha": self.alpha,
            "kind": self.kind.value,
            "meta": self.meta,
            "values": [float(v) for v in self.values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdSchedule":
        return cls(int(d["n"]), int(d["L"]), float(d["alpha"]), ScheduleKind(d["kind"]),
                   np.asarray(d["values"], dtype=float), dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, s: str) -> "ThresholdSchedule":
        return cls.from_dict(json.loads(s))


def ceil_log2(n: int) -> int:
    if n < 1:
        raise DomainError("n must be >= 1")
    return (int(n) - 1).bit_length()


def combine_levels(mids: Sequence[float]) -> np.ndarray:
    """Unroll the level recursion; returns delta^L_k for k = 1..2^L.

    Each level is built from a snapshot of the previous one, with the block
    endpoint pinned to 0.
    """
    delta = np.zeros(1)  # level 0: delta^0_1 = 0
    for M, mid in enumerate(mids, start=1):
        h = 2 ** (M - 1)
        old = delta
        k = np.arange(1, h + 1)
        left = old + k / h * mid
        # mirror: delta^M_k = delta^{M-1}_{2^M - k} + (2^M - k)/h * mid for h < k < 2^M
        kk = np.arange(h + 1, 2 * h)
        right = old[(2 * h - kk) - 1] + (2 * h - kk) / h * mid
        delta = np.concatenate([left, right, [0.0]])
    return delta


class _LevelTable:
    """Memoized omega_p(2^M) over levels and p, reused across budgets."""

    def __init__(self, model: BoundedModel, cfg: BoundSearchConfig):
        self.model = model
        self.cfg = cfg
        self.p = np.asarray(cfg.p_grid, dtype=float)
        self._rows: dict[int, np.ndarray] = {}
        self._s: dict[int, np.ndarray] = {}

    def omega_row(self, M: int) -> np.ndarray:
        if M not in self._rows:
            n = 2**M
            self._rows[M] = np.asarray(
                [omega_conditional(n, n // 2, int(p), self.model, self.cfg).value for p in self.p])
        return self._rows[M]

    def s_row(self, n: int) -> np.ndarray:
        if n not in self._s:
            self._s[n] = np.asarray([marginal_bound(n, int(p), self.model, self.cfg) for p in self.p])
        return self._s[n]

    def best(self, row: np.ndarray, budget: float) -> tuple[float, int]:
        vals = row * np.exp(-np.log(budget) / self.p)
        i = int(np.argmin(vals))
        return float(vals[i]), int(self.p[i])


def _default_cfg(alpha: float, L: int) -> BoundSearchConfig:
    floor = max(find_nu0_star(alpha, L) * 1e-2, 1e-300)
    return BoundSearchConfig.for_alpha(floor)


def _bridge_mids(table: _LevelTable, L: int, nu0: float, variant: VariantConfig | None):
    weights = variant.level_weights(L) if variant else tuple(1.0 for _ in range(L))
    mids, ps, sources = [], [], []
    for M in range(1, L + 1):
        budget = weights[M - 1] * nu0
        if budget >= 1.0:
            # a budget of 1 or more carries no information; zero threshold is
            # not justified, so fall back to the deterministic zeta bound
            budget = 1.0 - 1e-12
        v, p = table.best(table.omega_row(M), budget)
        src = "omega"
        if variant is not None and variant.zeta_enabled:
            z = zeta_fallback(2 ** (M - 1), table.model, budget)
            if z < v:
                v, src = z, "zeta"
        mids.append(v)
        ps.append(p)
        sources.append(src)
    return mids, ps, sources


def build_bridge_schedule(n: int, model: BoundedModel, alpha: float, cfg: BoundSearchConfig | None = None,
                          variant: VariantConfig | None = None, _table: _LevelTable | None = None) -> ThresholdSchedule:
    """Delta_k(alpha), k = 1..n, for the bridge W_k."""
    L = ceil_log2(n)
    weights = variant.level_weights(L) if variant else None
    nu0 = find_nu0_star(alpha, L, weights)
    if L > 0 and not nu0 > 0:
        raise BudgetInfeasible("budget infeasible: nu0* underflowed to 0")
    cfg = cfg or _default_cfg(alpha, L)
    table = _table or _LevelTable(model, cfg)
    mids, ps, sources = _bridge_mids(table, L, nu0, variant)
    values = combine_levels(mids)[:n]
    meta = {
        "nu0_star": nu0,
        "alpha0_star": None,
        "alpha1_star": None,
        "delta_star": None,
        "per_level_midpoints": mids,
        "per_level_p": ps,
        "per_level_source": sources,
        "R": model.R,
        "sigma": model.sigma,
    }
    return ThresholdSchedule(n, L, alpha, ScheduleKind.BRIDGE, values, meta)


@dataclass(frozen=True)
class SplitConfig:
    grid_size: int = 64
    min_fraction: float = 1e-3
    max_fraction: float = 0.999
    refine_iters: int = 30
    fixed_alpha0: float | None = None


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def build_sum_schedule(n: int, model: BoundedModel, alpha: float, cfg: BoundSearchConfig | None = None,
                       split_cfg: SplitConfig | None = None, variant: VariantConfig | None = None) -> ThresholdSchedule:
    """D_k(alpha) = Delta_k(alpha0*) + (k/n) delta*(alpha - alpha0*)."""
    if not _is_pow2(n):
        raise DomainError("the sum schedule needs n to be a power of two")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    split_cfg = split_cfg or SplitConfig()
    L = ceil_log2(n)
    weights = variant.level_weights(L) if variant else None
    cfg = cfg or _default_cfg(alpha * split_cfg.min_fraction, L)
    table = _LevelTable(model, cfg)
    s_row = table.s_row(n)
    kfrac = np.arange(1, n + 1) / n

    def evaluate(a0: float):
        nu0 = find_nu0_star(a0, L, weights)
        if L > 0 and not nu0 > 0:
            return math.inf, None
        mids, ps, sources = _bridge_mids(table, L, nu0, variant)
        delta = combine_levels(mids)
        dstar, pstar = table.best(s_row, alpha - a0)
        vals = delta + kfrac * dstar
        return float(vals.max()), (vals, nu0, mids, ps, sources, dstar, pstar)

    if split_cfg.fixed_alpha0 is not None:
        a0s = [split_cfg.fixed_alpha0]
    else:
        a0s = list(alpha * np.geomspace(split_cfg.min_fraction, split_cfg.max_fraction, split_cfg.grid_size))
    best = (math.inf, None, None)
    results = []
    for a0 in a0s:
        obj, payload = evaluate(a0)
        results.append((a0, obj))
        # ties go to the larger alpha0
        if obj <= best[0]:
            best = (obj, a0, payload)
    if split_cfg.fixed_alpha0 is None and split_cfg.refine_iters > 0 and len(a0s) >= 3:
        i = a0s.index(best[1])
        lo = math.log(a0s[max(i - 1, 0)])
        hi = math.log(a0s[min(i + 1, len(a0s) - 1)])
        g = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        x1, x2 = b - g * (b - a), a + g * (b - a)
        f1, f2 = evaluate(math.exp(x1)), evaluate(math.exp(x2))
        for it in range(split_cfg.refine_iters):
            for x, fx in ((x1, f1), (x2, f2)):
                if fx[0] < best[0]:
                    best = (fx[0], math.exp(x), fx[1])
            if f1[0] <= f2[0]:
                b, x2, f2 = x2, x1, f1
                x1 = b - g * (b - a)
                f1 = evaluate(math.exp(x1))
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + g * (b - a)
                f2 = evaluate(math.exp(x2))
        for x, fx in ((x1, f1), (x2, f2)):
            if fx[0] < best[0]:
                best = (fx[0], math.exp(x), fx[1])
    obj, a0, payload = best
    if payload is None:
        raise BudgetInfeasible("budget infeasible for every split")
    vals, nu0, mids, ps, sources, dstar, pstar = payload
    # the endpoint identity D_n = delta* holds exactly: Delta_n = 0
    vals = vals.copy()
    vals[-1] = dstar
    meta = {
        "nu0_star": nu0,
        "alpha0_star": a0,
        "alpha1_star": alpha - a0,
        "delta_star": dstar,
        "delta_star_p": pstar,
        "per_level_midpoints": mids,
        "per_level_p": ps,
        "per_level_source": sources,
        "R": model.R,
        "sigma": model.sigma,
    }
    return ThresholdSchedule(n, L, alpha, ScheduleKind.SUM, vals, meta)


def build_schedule(kind: ScheduleKind | str, n: int, model: BoundedModel, alpha: float, cfg=None, **kw) -> ThresholdSchedule:
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.BRIDGE:
        return build_bridge_schedule(n, model, alpha, cfg, **kw)
    return build_sum_schedule(n, model, alpha, cfg, **kw)


def delta_star(n: int, model: BoundedModel, alpha1: float, cfg: BoundSearchConfig | None = None) -> tuple[float, int]:
    """min over p of s_p(n) / alpha1^{1/p}, with the minimizing p."""
    if not 0 < alpha1 < 1:
        raise DomainError("alpha1 must lie in (0, 1)")
    cfg = cfg or BoundSearchConfig.for_alpha(alpha1)
    table = _LevelTable(model, cfg)
    return table.best(table.s_row(n), alpha1)
