"""Computable Wasserstein-p upper bounds for bounded i.i.d. sums.

Two families are provided:

* ``omega_conditional`` bounds the L_p norm of the conditional distance
  between the bridge W_k = S_k - (k/n) S_n, given the unordered sample, and
  N(0, sigma_{n,k}^2).
* ``omega_tilde`` / ``marginal_bound`` bound W_p(S_n, N(0, n sigma^2)).

Both are infima over a smoothing parameter kappa and a truncation order K.
Any single (kappa, K) gives a valid bound, so the searches below only ever
make the result smaller and never affect validity.

All integrals in the formulas reduce, after the substitution y = c (1 + x),
to four primitives over x in [0, X]:

    F(a)  = int x^a (1+x)^{-3/2} dx
    E1    = int expm1(mu x) x^{-1/2} (1+x)^{-3/2} dx
    E2    = int expm1(mu x) (1+x)^{-3/2} dx

which are evaluated with composite Gauss-Legendre in r = sqrt(x), where every
integrand is smooth.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .special import (
    DomainError,
    HermiteNormMode,
    binomial_pnorm,
    gaussian_abs_pnorm,
    hermite_pnorm,
)

STIRLING = math.exp(19 / 300) * math.pi**0.25
# exp overflows past this; such (kappa, p) pairs give no finite bound
_EXP_CAP = 700.0


@dataclass(frozen=True)
class BoundedModel:
    """Y in [0, R] almost surely with standard deviation sigma."""

    R: float
    sigma: float

    def __post_init__(self):
        if not (self.R > 0 and self.sigma > 0):
            raise DomainError("R and sigma must be positive")
        if self.sigma > self.R / 2 * (1 + 1e-12):
            raise DomainError(f"sigma={self.sigma} exceeds R/2={self.R / 2} (Popoviciu)")

    @property
    def R_s(self) -> float:
        disc = max(self.R**2 - 4 * self.sigma**2, 0.0)
        return 0.5 * (self.R + math.sqrt(disc))

    @property
    def tilde_R(self) -> float:
        return self.R / self.sigma

    @property
    def tilde_R_s(self) -> float:
        return self.R_s / self.sigma

    @classmethod
    def unit(cls, tilde_R: float) -> "BoundedModel":
        return cls(R=float(tilde_R), sigma=1.0)


def default_p_max(alpha_floor: float) -> int:
    return min(96, max(2, math.ceil(6 + 3 * math.log(1 / alpha_floor))))


@dataclass(frozen=True)
class BoundSearchConfig:
    p_grid: tuple[int, ...] = tuple(range(2, 33))
    kappa_grid_size: int = 24
    K_grid: tuple[int, ...] = tuple(range(1, 9))
    hermite_mode: HermiteNormMode = HermiteNormMode.NUMERIC
    refine: bool = True

    def __post_init__(self):
        if not self.p_grid:
            raise DomainError("p_grid must be nonempty")
        if any(p < 2 or int(p) != p for p in self.p_grid):
            raise DomainError("p_grid entries must be integers >= 2")
        if not self.K_grid or any(K < 1 for K in self.K_grid):
            raise DomainError("K_grid entries must be >= 1")
        if self.kappa_grid_size < 1:
            raise DomainError("kappa_grid_size must be positive")
        object.__setattr__(self, "p_grid", tuple(sorted(set(int(p) for p in self.p_grid))))
        object.__setattr__(self, "K_grid", tuple(sorted(set(int(K) for K in self.K_grid))))
        object.__setattr__(self, "hermite_mode", HermiteNormMode(self.hermite_mode))

    @classmethod
    def for_alpha(cls, alpha_floor: float, **kw) -> "BoundSearchConfig":
        return cls(p_grid=tuple(range(2, default_p_max(alpha_floor) + 1)), **kw)


class Branch(str, enum.Enum):
    TRIVIAL = "trivial"
    OMEGA_FULL = "omega_full"


@dataclass(frozen=True)
class ConditionalBoundResult:
    value: float
    p: int
    kappa_star: float
    K_star: int
    branch: Branch


def sigma_nk(n: int, k: int, model: BoundedModel) -> float:
    if not 1 <= k <= n - 1:
        raise DomainError(f"k must lie in [1, n-1], got k={k}, n={n}")
    return model.sigma * math.sqrt(k * (n - k) / n)


def a_p(p: float) -> float:
    return 2 ** (1 / p) * math.sqrt(p / 2 + 1) * math.exp(0.5 + 1 / p)


def a_star(n: int, p: float) -> float:
    return (p / 2 + 1) * n ** (1 / p - 0.5)


def c_p(p: float) -> float:
    return 2 * math.sqrt(2) * (p / 4 + 1) ** (1 / p) * (1 + p / math.log(p / 2))


# ---------------------------------------------------------------------------
# C_odd / C_even: coefficients of sigma_{n,k}^{-l} R^l in the l-th moment
# terms.  The forms below follow the martingale-difference derivation term by
# term; see the decisions ledger for where they differ from the printed ones.


def _lp_pair(w1: float, a: float, w2: float, b: float, p: float) -> float:
    """(w1 a^p + w2 b^p)^{1/p} without overflow."""
    m = max(a, b)
    if m == 0:
        return 0.0
    return m * (w1 * (a / m) ** p + w2 * (b / m) ** p) ** (1 / p)


def _odd_tail_factor(k: int, p: float, R: float, s: float) -> float:
    """Bound on ||D_m||_p / (k R^l) for m > k, odd l."""
    v = (R**2 + 3 * s**2) ** (1 / p)
    direct = s ** (2 / p) * R ** (-4 / p) * (2 ** (1 / p) * R ** (2 / p) + v)
    rosenthal = s ** (2 / p) * R ** (-4 / p) * v + min(math.sqrt(p - 1), a_p(p) + a_star(k, p)) / math.sqrt(k)
    return min(direct, rosenthal)


def c_odd_parts(n: int, k: int, p: float, model: BoundedModel) -> dict[str, float]:
    if not 1 <= k <= n - 1:
        raise DomainError("k must lie in [1, n-1]")
    if p < 2:
        raise DomainError("p must be >= 2")
    R, s = model.R, model.sigma
    v = (R**2 + 3 * s**2) ** (1 / p)
    head = (n - k) * R ** (-4 / p) * s ** (2 / p) * v  # ||D_m|| / R^l, m <= k
    tail = k * _odd_tail_factor(k, p, R, s)            # ||D_m|| / R^l, m > k
    parts = {"C_odd_1": math.sqrt(p - 1) * math.sqrt(k * head**2 + (n - k) * tail**2) / n}
    if p >= 4:
        quad_var = math.sqrt(
            k * (n - k) * ((n - k) * s**2 * (R**2 + 3 * s**2) + k * (R**2 * s**2 + R ** (4 - 4 / p) * s ** (4 / p)))
        ) / R**2
        pth = _lp_pair(k, head, n - k, tail, p)
        parts["C_odd_2"] = c_p(p) * (quad_var + pth) / n
    return parts


def c_odd(n: int, k: int, p: float, model: BoundedModel) -> float:
    return min(c_odd_parts(n, k, p, model).values())


def c_even_parts(n: int, k: int, p: float, model: BoundedModel) -> dict[str, float]:
    if not 1 <= k <= n - 1:
        raise DomainError("k must lie in [1, n-1]")
    if p < 2:
        raise DomainError("p must be >= 2")
    R, s = model.R, model.sigma
    v = (R**2 + 3 * s**2) ** (1 / p)
    mean_term = 2 * k * (n - k) * s**2 / R**2 / n
    head = (n - k) * R ** (-4 / p) * s ** (2 / p) * v
    tail_min = min(0.25 ** (1 / p) * R ** (2 / p), 2 ** (1 / p) * s ** (2 / p) + R ** (-2 / p) * s ** (2 / p) * v)
    tail = k * R ** (-2 / p) * tail_min
    parts = {"C_even_1": math.sqrt(p - 1) * math.sqrt(k * head**2 + (n - k) * tail**2) / n + mean_term}
    if p >= 4:
        quad_var = math.sqrt(
            k * (n - k) * ((n - k) * (s**2 * (R**2 + 3 * s**2) + R**4) + k * (R**2 * s**2 + R ** (4 - 4 / p) * s ** (4 / p)))
        ) / R**2
        pth = _lp_pair(k, head, n - k, tail, p)
        parts["C_even_2"] = c_p(p) * (quad_var + pth) / n + mean_term
    # the pairing argument needs the smaller side first; the double sum is
    # symmetric in the two sides for even l
    kk = min(k, n - k)
    parts["C_even_3"] = (kk * binomial_pnorm(kk, min(1.0, 2 * s**2 / R**2), p)
                         + (n - kk) * kk * 2 ** (1 / p) * R ** (-2 / p) * s ** (2 / p)) / n
    return parts


def c_even(n: int, k: int, p: float, model: BoundedModel) -> float:
    return min(c_even_parts(n, k, p, model).values())


# ---------------------------------------------------------------------------
# integral primitives

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


def _r_nodes(r_max: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
    edges = [0.0]
    e = min(1.0, r_max)
    while True:
        edges.append(e)
        if e >= r_max:
            break
        e = min(2 * e, r_max)
    fine = [0.0]
    for a, b in zip(edges[:-1], edges[1:]):
        pieces = max(1, math.ceil(mu * (b * b - a * a) / 8.0)) if mu > 0 else 1
        if pieces == 1:
            fine.append(b)
        else:
            # uniform in r^2 so exp(mu r^2) changes by at most e^8 per panel
            fine.extend(np.sqrt(a * a + (b * b - a * a) * np.arange(1, pieces + 1) / pieces).tolist())
    fine = np.asarray(fine)
    lo, hi = fine[:-1, None], fine[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * _GL16_X[None, :]).ravel()
    weights = (half * _GL16_W[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class LiftIntegrals:
    A: np.ndarray  # A[m] = F(m - 1/2), index 0 unused
    B: np.ndarray  # B[m] = F(m)
    E1: float
    E2: float


def lift_integrals(X: float, mu: float, m_max: int) -> LiftIntegrals:
    """F(m-1/2), F(m) for m = 1..m_max and E1, E2 on [0, X] with rate mu."""
    A = np.zeros(m_max + 1)
    B = np.zeros(m_max + 1)
    if X <= 0:
        return LiftIntegrals(A, B, 0.0, 0.0)
    if mu * X > _EXP_CAP:
        return LiftIntegrals(A, B, math.inf, math.inf)
    r, w = _r_nodes(math.sqrt(X), mu)
    r2 = r * r
    base = 2.0 * w * (1.0 + r2) ** -1.5
    pw = np.ones_like(r)
    for m in range(1, m_max + 1):
        pw = pw * r2
        A[m] = float(np.dot(base, pw))
        B[m] = float(np.dot(base, pw * r))
    em = np.expm1(mu * r2)
    return LiftIntegrals(A, B, float(np.dot(base, em)), float(np.dot(base, em * r)))


# ---------------------------------------------------------------------------
# marginal bound  omega_tilde_p^R(sigma, n)


def _d_np(n: int, p: float, model: BoundedModel) -> float:
    Rts2 = model.tilde_R_s**2
    x = Rts2 - 1.0
    z = gaussian_abs_pnorm(p)
    if x <= 0:
        return 0.0
    # ((x^p + x) / Rts2)^{1/p} with x^p factored out so large ranges do not overflow
    centred = max(x ** (1 - 1 / p), x * ((1 + x ** (1 - p)) / Rts2) ** (1 / p))
    cands = [
        math.sqrt(p - 1) * centred,
        centred * a_star(n, p) + math.sqrt(x) * a_p(p),
        z * Rts2 ** (1 - 2 / p) * x ** (1 / p),
    ]
    if p >= 4:
        q = min(1.0, 2 * x / Rts2**2)
        cands.append(z * 2 ** (-1 / p) * model.tilde_R**2 / math.sqrt(n) * math.sqrt(binomial_pnorm(n, q, p / 2)))
    return min(cands) / (2 * math.sqrt(n))


def _c_np(n: int, p: float, model: BoundedModel) -> float:
    Rt = model.tilde_R
    z = gaussian_abs_pnorm(p)
    val = 2 ** (1 / p) * Rt ** (1 - 2 / p)
    if p >= 4:
        val = min(val, Rt / math.sqrt(n) * math.sqrt(binomial_pnorm(n, min(1.0, 2 / Rt**2), p / 2)))
    return z * val


def _b_pn(n: int, p: float, model: BoundedModel) -> float:
    Rt = model.tilde_R
    return Rt**2 / n * binomial_pnorm(n, min(1.0, 2 / Rt**2), p)


@dataclass(frozen=True)
class _TildeConsts:
    n: int
    p: int
    Rt: float
    z: float
    D: float
    C: float
    B: float
    H: tuple[float, ...]


def _tilde_value(c: _TildeConsts, kappa: float, K_grid: tuple[int, ...]) -> tuple[float, int]:
    """sigma^{-1} omega_tilde at one kappa, minimized over K."""
    n, p, Rt = c.n, c.p, c.Rt
    S = Rt**2 / (n * kappa)
    if not 0 < S <= 1:
        return math.inf, 0
    M = math.sqrt(max(0.0, 1 - S))
    if p != 2 and M == 0:
        return math.inf, 0
    X = (1 - S) / S
    mu = (p - 1) * Rt**2 / (2 * n)
    m_max = max(K_grid)
    li = lift_integrals(X, mu, m_max)
    if not math.isfinite(li.E1):
        return math.inf, 0
    sqn = math.sqrt(n)
    pre = sqn / (M if p != 2 else 1.0)
    base = c.z * math.acos(min(1.0, M)) + c.z * c.D * M * M
    best, bestK = math.inf, 0
    sp1 = math.sqrt(p - 1)
    for K in K_grid:
        st = STIRLING * K**0.25
        b_sum = 0.0
        c_sum = 0.0
        for j in range(1, K):
            lg = math.lgamma(j + 1)
            b_lead = c.H[2 * j + 1] / math.exp(math.lgamma(2 * j + 3))
            b_st = 2.0**-j * st * sp1 ** (2 * j + 1) / (2 * (K + 1) * math.sqrt(2 * K + 1) * math.exp(lg))
            I1 = n ** (0.5 - j) * li.B[j]
            b_sum += Rt ** (2 * j) / sqn * max(0.0, b_lead - b_st) * I1
            c_lead = c.H[2 * j] / math.exp(math.lgamma(2 * j + 2))
            c_st = st * 2.0**-j * (p - 1) ** j / ((2 * K + 1) * math.exp(lg))
            I3 = n ** (1 - j) * li.A[j]
            c_sum += Rt ** (2 * j) / n * max(0.0, c_lead - c_st) * I3
        b_tail = 0.5 * st * sp1 / ((K + 1) * math.sqrt(2 * K + 1)) / sqn * (sqn * li.E2)
        c_tail = st / ((2 * K + 1) * n) * (n * li.E1)
        val = pre * (base + 0.5 * c.B * (b_sum + b_tail) + 0.5 * c.C * (c_sum + c_tail))
        if val < best:
            best, bestK = val, K
    return best, bestK


def _search(f, kappa0: float, size: int, refine: bool) -> tuple[float, float, int]:
    """Minimize f(kappa) -> (value, K) over kappa0 * 2^j plus a golden refinement."""
    best = (math.inf, kappa0, 0)
    vals = []
    for j in range(size):
        kap = kappa0 * 2.0**j
        v, K = f(kap)
        vals.append(v)
        if v < best[0]:
            best = (v, kap, K)
    if refine and math.isfinite(best[0]) and size >= 2:
        jstar = int(round(math.log2(best[1] / kappa0)))
        lo = math.log(kappa0 * 2.0 ** max(jstar - 1, 0))
        hi = math.log(kappa0 * 2.0 ** min(jstar + 1, size - 1))
        g = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        x1, x2 = b - g * (b - a), a + g * (b - a)
        f1, f2 = f(math.exp(x1)), f(math.exp(x2))
        for _ in range(18):
            for x, fx in ((x1, f1), (x2, f2)):
                if fx[0] < best[0]:
                    best = (fx[0], math.exp(x), fx[1])
            if f1[0] <= f2[0]:
                b, x2, f2 = x2, x1, f1
                x1 = b - g * (b - a)
                f1 = f(math.exp(x1))
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + g * (b - a)
                f2 = f(math.exp(x2))
        for x, fx in ((x1, f1), (x2, f2)):
            if fx[0] < best[0]:
                best = (fx[0], math.exp(x), fx[1])
    return best


@lru_cache(maxsize=65536)
def _omega_tilde_cached(n: int, p: int, model: BoundedModel, cfg: BoundSearchConfig) -> tuple[float, float, int]:
    m_max = max(cfg.K_grid)
    H = tuple(hermite_pnorm(l, p, cfg.hermite_mode) for l in range(2 * m_max + 2))
    consts = _TildeConsts(n, p, model.tilde_R, gaussian_abs_pnorm(p), _d_np(n, p, model),
                          _c_np(n, p, model), _b_pn(n, p, model), H)
    kappa0 = model.tilde_R**2 / n
    v, kap, K = _search(lambda kk: _tilde_value(consts, kk, cfg.K_grid), kappa0, cfg.kappa_grid_size, cfg.refine)
    return model.sigma * v, kap, K


def omega_tilde(n: int, p: int, model: BoundedModel, cfg: BoundSearchConfig | None = None) -> float:
    """omega_tilde_p^R(sigma, n); may be +inf if no grid point is finite."""
    cfg = cfg or BoundSearchConfig()
    if n < 1:
        raise DomainError("n must be >= 1")
    if p < 2:
        raise DomainError("p must be >= 2")
    return _omega_tilde_cached(int(n), int(p), model, cfg)[0]


def marginal_bound(n: int, p: int, model: BoundedModel, cfg: BoundSearchConfig | None = None) -> float:
    """s_p^R(n, sigma): bound on W_p(S_n, N(0, n sigma^2))."""
    trivial = math.sqrt(p - 1) * math.sqrt(n) * (model.R + model.sigma)
    return min(trivial, omega_tilde(n, p, model, cfg))


def s_cond(n: int, k: int, model: BoundedModel, cfg: BoundSearchConfig | None, p: int) -> float:
    """Bound on W_p(W_k, N(0, sigma_{n,k}^2)) used inside omega_conditional."""
    if not 1 <= k <= n - 1:
        raise DomainError("k must lie in [1, n-1]")
    trivial = math.sqrt(p - 1) * math.sqrt(n) * (model.R + model.sigma)
    if 2 * k == n:
        other = 0.5 * omega_tilde(n, p, model, cfg)
    else:
        other = max(omega_tilde(k, p, model, cfg), omega_tilde(n - k, p, model, cfg))
    return min(trivial, other)


# ---------------------------------------------------------------------------
# conditional bound omega_p^R(n, k, sigma)


def trivial_conditional(n: int, k: int, p: int, model: BoundedModel) -> float:
    return math.sqrt(p - 1) * sigma_nk(n, k, model) * (1 + math.sqrt(2) * model.R / model.sigma)


@dataclass(frozen=True)
class _CondConsts:
    n: int
    k: int
    p: int
    R: float
    sigma: float
    snk: float
    S_cond: float
    z: float
    a2: float
    c_odd: float
    c_even: float
    S_tilde: float
    H: tuple[float, ...]


def _a2_coef(n: int, k: int, p: int, model: BoundedModel) -> float:
    Rs = model.tilde_R_s
    x = Rs**2 - 1
    first = 0.5 * min(math.sqrt(p - 1) * x ** (1 - 1 / p), a_p(p) * math.sqrt(x) + a_star(n, p) * x ** (1 - 1 / p))
    second = min(math.sqrt(p - 1) * Rs ** (1 - 2 / p), a_p(p) + Rs ** (1 - 2 / p) * a_star(k, p)) ** 2 / math.sqrt(n)
    return gaussian_abs_pnorm(p) * math.sqrt(n) / math.sqrt(k * (n - k)) * (first + second)


def _cond_value(c: _CondConsts, kappa: float, K_grid: tuple[int, ...]) -> tuple[float, int]:
    n, k, p, R, s = c.n, c.k, c.p, c.R, c.sigma
    S = R**2 / (kappa * c.snk**2)
    if not 0 < S <= 1:
        return math.inf, 0
    M = math.sqrt(max(0.0, 1 - S))
    X = (1 - S) / S
    cc = 1.0 / (n - k)
    mu = (p - 1) * c.S_tilde * cc / 2
    li = lift_integrals(X, mu, max(K_grid))
    if not math.isfinite(li.E1):
        return math.inf, 0
    head = c.S_cond * (1 - M) + c.snk * c.z * math.acos(min(1.0, M)) + c.snk * c.a2 * (1 - math.sqrt(S))
    even_pre = R * n / (2 * s**2 * k * (n - k) ** 1.5)
    sp1 = math.sqrt(p - 1)
    best, bestK = math.inf, 0
    for K in K_grid:
        st = STIRLING * (K + 1) ** 0.25
        odd_sum = 0.0
        even_sum = 0.0
        for m in range(1, K + 1):
            lfm = math.lgamma(m + 1)
            # S_tilde^m c^(m-1) / m!  and  S_tilde^m c^(m-1/2) / m!  in log space
            lo = m * math.log(c.S_tilde) + (m - 1) * math.log(cc) - lfm
            le = m * math.log(c.S_tilde) + (m - 0.5) * math.log(cc) - lfm
            odd_lead = c.H[2 * m] * math.exp(lfm - math.lgamma(2 * m + 2))
            odd_st = st * (p - 1) ** m / (2.0**m * (2 * K + 3))
            odd_sum += math.exp(lo) * R / c.snk * max(0.0, odd_lead - odd_st) * li.A[m]
            even_lead = c.H[2 * m + 1] * math.exp(lfm - math.lgamma(2 * m + 3))
            even_st = st * (p - 1) ** (m + 0.5) / (2.0**m * (2 * K + 4) * math.sqrt(2 * K + 3))
            even_sum += math.exp(le) * max(0.0, even_lead - even_st) * li.B[m]
        odd_tail = st * R / c.snk / (2 * (2 * K + 3) * (n - k)) * li.E1 / cc
        odd_block = c.c_odd * (odd_sum / (2 * (n - k)) + odd_tail)
        even_tail = st * sp1 / (2 * (2 * K + 4) * math.sqrt(2 * K + 3)) * li.E2 / math.sqrt(cc)
        even_block = c.c_even * R * even_pre * (even_sum + even_tail)
        val = head + c.snk * (odd_block + even_block)
        if val < best:
            best, bestK = val, K
    return best, bestK


@lru_cache(maxsize=65536)
def _omega_conditional_cached(n: int, k: int, p: int, model: BoundedModel, cfg: BoundSearchConfig) -> ConditionalBoundResult:
    snk = sigma_nk(n, k, model)
    trivial = trivial_conditional(n, k, p, model)
    m_max = max(cfg.K_grid)
    H = tuple(hermite_pnorm(l, p, cfg.hermite_mode) for l in range(2 * m_max + 2))
    consts = _CondConsts(
        n=n, k=k, p=p, R=model.R, sigma=model.sigma, snk=snk,
        S_cond=s_cond(n, k, model, cfg, p), z=gaussian_abs_pnorm(p),
        a2=_a2_coef(n, k, p, model), c_odd=c_odd(n, k, p, model), c_even=c_even(n, k, p, model),
        S_tilde=model.R**2 * n / (k * model.sigma**2), H=H,
    )
    kappa0 = model.R**2 / snk**2
    v, kap, K = _search(lambda kk: _cond_value(consts, kk, cfg.K_grid), kappa0, cfg.kappa_grid_size, cfg.refine)
    if math.isfinite(v) and v < trivial:
        return ConditionalBoundResult(v, p, kap, K, Branch.OMEGA_FULL)
    return ConditionalBoundResult(trivial, p, kap, K, Branch.TRIVIAL)


def omega_conditional(n: int, k: int, p: int, model: BoundedModel, cfg: BoundSearchConfig | None = None) -> ConditionalBoundResult:
    """omega_p^R(n, k, sigma)."""
    cfg = cfg or BoundSearchConfig()
    if p < 2 or int(p) != p:
        raise DomainError("p must be an integer >= 2")
    return _omega_conditional_cached(int(n), int(k), int(p), model, cfg)


def omega_midpoint(n: int, model: BoundedModel, cfg: BoundSearchConfig | None = None) -> dict[int, float]:
    cfg = cfg or BoundSearchConfig()
    if n < 2 or n % 2:
        raise DomainError("omega_midpoint needs an even n >= 2")
    return {p: omega_conditional(n, n // 2, p, model, cfg).value for p in cfg.p_grid}
