"""Continuous multinomial-logit choice model primitives.

Products live on [0, 1].  A customer offered an assortment ``S`` buys a
product in ``A`` (a subset of ``S``) with probability
``int_A v / (1 + int_S v)`` and walks away otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import integrate as _spi

from .errors import NonFiniteError

# gaps narrower than this are closed when canonicalizing interval unions
MERGE_TOL = 1e-12
DEFAULT_TABLE_CELLS = 4096
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _as_float_array(x):
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# Profit curves
# --------------------------------------------------------------------------


class ProfitCurve:
    """Strictly increasing marginal profit ``w: [0,1] -> [0,1]``.

    Parameters
    ----------
    func : callable
        Vectorized evaluation of ``w``.
    k_w : float
        Positive lower bound on ``w'``.
    inverse : callable, optional
        Exact inverse of ``w`` on ``[w(0), w(1)]``.  When omitted the
        inverse is computed by bisection.
    """

    def __init__(self, func: Callable, k_w: float, inverse: Callable | None = None, name: str = "custom"):
        if not k_w > 0:
            raise ValueError("k_w must be positive")
        self._func = func
        self._inverse = inverse
        self.k_w = float(k_w)
        self.name = name
        self.w0 = float(func(np.array([0.0]))[0])
        self.w1 = float(func(np.array([1.0]))[0])

    def __call__(self, x):
        out = self._func(_as_float_array(x))
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, rho):
        """Generalized inverse ``min{x in [0,1] : w(x) >= rho}``.

        Values below ``w(0)`` map to 0; values above ``w(1)`` (empty upper
        level set) map to 1.
        """
        r = _as_float_array(rho)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        low = r <= self.w0
        high = r > self.w1
        mid = ~(low | high)
        out[low] = 0.0
        out[high] = 1.0
        if mid.any():
            if self._inverse is not None:
                out[mid] = np.clip(self._inverse(r[mid]), 0.0, 1.0)
            else:
                out[mid] = self._bisect_inverse(r[mid])
        return float(out[0]) if scalar else out

    def _bisect_inverse(self, r):
        a = np.zeros_like(r)
        b = np.ones_like(r)
        for _ in range(60):
            m = 0.5 * (a + b)
            ge = self._func(m) >= r
            b = np.where(ge, m, b)
            a = np.where(ge, a, m)
        return b

    # builtin curves ------------------------------------------------------

    @classmethod
    def identity(cls) -> "ProfitCurve":
        return cls(_identity, 1.0, _identity, name="identity")

    @classmethod
    def affine(cls, lo: float, hi: float) -> "ProfitCurve":
        """``w(x) = lo + (hi - lo) x`` with ``0 <= lo < hi <= 1``."""
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("need 0 <= lo < hi <= 1")
        f = _Affine(lo, hi)
        return cls(f, hi - lo, f.inverse, name=f"affine({lo},{hi})")

    @classmethod
    def hyperbolic(cls, s: float, delta: float) -> "ProfitCurve":
        """``w(x) = (1-s)(1-delta)/(1-delta x) + s``."""
        f = _Hyperbolic(s, delta)
        return cls(f, (1 - s) * (1 - delta) * delta, f.inverse, name=f"hyperbolic({s},{delta})")


def _identity(x):
    return x


class _Affine:
    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi

    def __call__(self, x):
        return self.lo + (self.hi - self.lo) * x

    def inverse(self, r):
        return (r - self.lo) / (self.hi - self.lo)


class _Hyperbolic:
    def __init__(self, s, delta):
        self.s, self.delta = s, delta

    def __call__(self, x):
        return (1 - self.s) * (1 - self.delta) / (1 - self.delta * x) + self.s

    def inverse(self, r):
        return (1 - (1 - self.s) * (1 - self.delta) / (r - self.s)) / self.delta


# --------------------------------------------------------------------------
# Preference functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PreferenceFunction:
    """Bounded nonnegative preference weight ``v`` on [0, 1].

    ``knots`` is set for piecewise-linear functions (estimates, grid CSVs);
    numerical tables then align their cells with the kinks.
    """

    func: Callable
    v_lo: float
    v_hi: float
    knots: np.ndarray | None = None
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 <= self.v_lo <= self.v_hi and np.isfinite(self.v_hi)):
            raise ValueError(f"bad bounds ({self.v_lo}, {self.v_hi})")

    def __call__(self, x):
        out = self.func(_as_float_array(x))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, tol: float = 1e-10) -> float:
        return integrate(self, Assortment.full(), tol)

    @classmethod
    def constant(cls, value: float) -> "PreferenceFunction":
        return cls(_Constant(value), value, value, name=f"constant({value})")

    @classmethod
    def from_callable(cls, func: Callable, name: str = "custom", scan: int = 10001) -> "PreferenceFunction":
        """Wrap ``func``, declaring bounds from a grid scan."""
        y = np.asarray(func(np.linspace(0.0, 1.0, scan)), dtype=float)
        return cls(func, float(y.min()), float(y.max()), name=name)

    @classmethod
    def from_grid(cls, x, y, name: str = "grid") -> "PreferenceFunction":
        """Piecewise-linear interpolant through ``(x, y)`` covering [0, 1]."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("grid must be two equal-length 1-D arrays")
        if np.any(np.diff(x) <= 0) or x[0] > 0 or x[-1] < 1:
            raise ValueError("grid knots must be strictly increasing and cover [0, 1]")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("grid values must be finite and nonnegative")
        keep = (x >= 0) & (x <= 1)
        xs, ys = x[keep], y[keep]
        if xs[0] > 0:
            xs = np.r_[0.0, xs]
            ys = np.r_[np.interp(0.0, x, y), ys]
        if xs[-1] < 1:
            xs = np.r_[xs, 1.0]
            ys = np.r_[ys, np.interp(1.0, x, y)]
        return cls(_Linear(xs, ys), float(ys.min()), float(ys.max()), knots=xs, name=name)


class _Constant:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        return np.full(np.shape(x), self.value)


class _Linear:
    def __init__(self, xs, ys):
        self.xs, self.ys = xs, ys

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)


# --------------------------------------------------------------------------
# Assortments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Assortment:
    """Finite union of disjoint closed subintervals of [0, 1].

    Construction canonicalizes: intervals are clipped to [0, 1], sorted,
    touching or overlapping pieces merged, and empty pieces dropped.
    """

    intervals: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", _canonical(self.intervals))

    @classmethod
    def empty(cls) -> "Assortment":
        return cls(())

    @classmethod
    def full(cls) -> "Assortment":
        return cls(((0.0, 1.0),))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Assortment":
        return cls(((lo, hi),))

    @classmethod
    def from_arrays(cls, lo, hi) -> "Assortment":
        return cls(tuple(zip(np.asarray(lo, float).tolist(), np.asarray(hi, float).tolist())))

    @property
    def lows(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals], dtype=float)

    @property
    def highs(self) -> np.ndarray:
        return np.array([b for _, b in self.intervals], dtype=float)

    @property
    def volume(self) -> float:
        return math.fsum(b - a for a, b in self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x):
        x = _as_float_array(x)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x >= a) & (x <= b)
        return bool(out) if out.ndim == 0 else out

    def intersect(self, other: "Assortment") -> "Assortment":
        out = []
        i = j = 0
        A, B = self.intervals, other.intervals
        while i < len(A) and j < len(B):
            lo = max(A[i][0], B[j][0])
            hi = min(A[i][1], B[j][1])
            if hi > lo:
                out.append((lo, hi))
            if A[i][1] < B[j][1]:
                i += 1
            else:
                j += 1
        return Assortment(tuple(out))

    def union(self, other: "Assortment") -> "Assortment":
        return Assortment(self.intervals + other.intervals)

    def __repr__(self):
        body = " U ".join(f"[{a:.6g}, {b:.6g}]" for a, b in self.intervals) or "{}"
        return f"Assortment({body})"


def _canonical(intervals) -> tuple:
    pairs = [(max(0.0, float(a)), min(1.0, float(b))) for a, b in intervals]
    pairs = sorted(p for p in pairs if p[1] > p[0])
    merged: list[list[float]] = []
    for a, b in pairs:
        if merged and a <= merged[-1][1] + MERGE_TOL:
            if b > merged[-1][1]:
                merged[-1][1] = b
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


def volume(S: Assortment) -> float:
    return S.volume


# --------------------------------------------------------------------------
# Purchase outcomes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Product:
    x: float


class _NoPurchaseType:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "NoPurchase"

    def __reduce__(self):
        return (_NoPurchaseType, ())


NoPurchase = _NoPurchaseType()
PurchaseOutcome = Union[Product, _NoPurchaseType]


def outcome_from_float(x: float) -> PurchaseOutcome:
    """Decode the NaN-for-no-purchase float convention used in logs."""
    return NoPurchase if math.isnan(x) else Product(float(x))


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


def integrate(f: Callable, S: Assortment, tol: float = 1e-10) -> float:
    """Adaptive quadrature of ``f`` over each interval of ``S``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if S.is_empty():
        return 0.0

    def g(x):
        y = float(np.asarray(f(np.array([x]))).reshape(-1)[0])
        if not math.isfinite(y):
            raise NonFiniteError(f"integrand is {y} at x={x}")
        return y

    per = tol / len(S)
    total = []
    for a, b in S:
        val, err = _spi.quad(g, a, b, epsabs=per, epsrel=0.0, limit=500)
        total.append(val)
    return math.fsum(total)


def _composite_gl(f: Callable, edges: np.ndarray) -> float:
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    xs = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    ys = np.asarray(f(xs.ravel()), dtype=float).reshape(xs.shape)
    if not np.all(np.isfinite(ys)):
        raise NonFiniteError("integrand is not finite")
    return float(np.sum((ys @ _GL_WEIGHTS) * half))


def l1_distance(v1: PreferenceFunction, v2: PreferenceFunction, cells: int = 8192) -> float:
    """``int_0^1 |v1 - v2|`` by composite Gauss-Legendre aligned with any kinks."""
    edges = np.linspace(0.0, 1.0, cells + 1)
    for v in (v1, v2):
        if getattr(v, "knots", None) is not None:
            edges = np.union1d(edges, v.knots)
    return _composite_gl(lambda x: np.abs(v1(x) - v2(x)), edges)


# --------------------------------------------------------------------------
# Cumulative tables
# --------------------------------------------------------------------------


class CumulativeTable:
    """Antiderivatives of ``v`` and ``v w`` on a knot grid.

    Knot values are exact up to 8-point Gauss-Legendre error per cell;
    between knots a cubic Hermite interpolant using the integrand as
    derivative is used, which is exact for piecewise-linear ``v``.
    """

    def __init__(self, v: PreferenceFunction, w: ProfitCurve, knots: np.ndarray):
        knots = np.asarray(knots, dtype=float)
        self.knots = knots
        self.dx = np.diff(knots)
        a, b = knots[:-1], knots[1:]
        half = 0.5 * self.dx
        mid = 0.5 * (a + b)
        xs = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        vv = np.asarray(v(xs), dtype=float)
        ww = np.asarray(w(xs), dtype=float)
        if not (np.all(np.isfinite(vv)) and np.all(np.isfinite(ww))):
            raise NonFiniteError("preference or profit function is not finite")
        vv = vv.reshape(-1, _GL_NODES.size)
        vw = (vv * ww.reshape(vv.shape))
        self.dF = (vv @ _GL_WEIGHTS) * half
        self.dG = (vw @ _GL_WEIGHTS) * half
        self.F_knots = np.r_[0.0, np.cumsum(self.dF)]
        self.G_knots = np.r_[0.0, np.cumsum(self.dG)]
        self.v_knots = np.asarray(v(knots), dtype=float)
        self.w_knots = np.asarray(w(knots), dtype=float)
        self.vw_knots = self.v_knots * self.w_knots
        self.total_mass = float(self.F_knots[-1])
        self.total_weighted = float(self.G_knots[-1])
        self._ncell = knots.size - 1
        self._bisect_iters = max(1, int(math.ceil(math.log2(self.dx.max() / 1e-10))) + 1)

    def _cell(self, x):
        return np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, self._ncell - 1)

    def _hermite(self, x, values, slopes):
        x = _as_float_array(x)
        k = self._cell(x)
        d = self.dx[k]
        t = (x - self.knots[k]) / d
        t2 = t * t
        t3 = t2 * t
        return ((2 * t3 - 3 * t2 + 1) * values[k] + (t3 - 2 * t2 + t) * d * slopes[k]
                + (-2 * t3 + 3 * t2) * values[k + 1] + (t3 - t2) * d * slopes[k + 1])

    def F(self, x):
        """``int_0^x v``."""
        return self._hermite(x, self.F_knots, self.v_knots)

    def G(self, x):
        """``int_0^x v w``."""
        return self._hermite(x, self.G_knots, self.vw_knots)

    def mass(self, S: Assortment) -> float:
        if S.is_empty():
            return 0.0
        return float(np.sum(self.F(S.highs) - self.F(S.lows)))

    def weighted(self, S: Assortment) -> float:
        if S.is_empty():
            return 0.0
        return float(np.sum(self.G(S.highs) - self.G(S.lows)))

    def inverse_F(self, target):
        """Solve ``F(x) = target`` by bisection inside the bracketing cell."""
        q = np.atleast_1d(_as_float_array(target))
        k = np.clip(np.searchsorted(self.F_knots, q, side="right") - 1, 0, self._ncell - 1)
        lo = self.knots[k].copy()
        hi = self.knots[k + 1].copy()
        for _ in range(self._bisect_iters):
            m = 0.5 * (lo + hi)
            below = self.F(m) < q
            lo = np.where(below, m, lo)
            hi = np.where(below, hi, m)
        return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Instances and choice probabilities
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Instance:
    """Model primitives: preference ``v``, profit ``w`` and capacity ``c``."""

    v: PreferenceFunction
    w: ProfitCurve
    c: float = 1.0
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        # c = 0 is accepted as the degenerate empty-offer case
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"capacity must lie in [0, 1], got {self.c}")

    def table(self, cells: int = DEFAULT_TABLE_CELLS) -> CumulativeTable:
        """Cumulative table on the preference knots, or on ``cells`` uniform cells."""
        key = "knots" if self.v.knots is not None else cells
        tab = self._tables.get(key)
        if tab is None:
            knots = self.v.knots if self.v.knots is not None else np.linspace(0.0, 1.0, cells + 1)
            tab = CumulativeTable(self.v, self.w, knots)
            self._tables[key] = tab
        return tab

    def with_preference(self, v: PreferenceFunction) -> "Instance":
        return Instance(v, self.w, self.c)

    def with_capacity(self, c: float) -> "Instance":
        return Instance(self.v, self.w, c)

    @cached_property
    def total_preference(self) -> float:
        return self.table().total_mass


def no_purchase_prob(inst: Instance, S: Assortment) -> float:
    return 1.0 / (1.0 + inst.table().mass(S))


def purchase_prob_in(inst: Instance, S: Assortment, A: Assortment) -> float:
    tab = inst.table()
    return tab.mass(A.intersect(S)) / (1.0 + tab.mass(S))


def expected_revenue(inst: Instance, S: Assortment) -> float:
    """``r(S, v) = int_S v w / (1 + int_S v)``."""
    tab = inst.table()
    return tab.weighted(S) / (1.0 + tab.mass(S))


def sample_purchases(inst: Instance, S: Assortment, u) -> np.ndarray:
    """Map uniforms ``u`` to purchases; NaN encodes a no-purchase.

    ``u * (1 + m)`` with ``m = int_S v`` lands below ``m`` with the purchase
    probability; in that case it is read as a mass coordinate along ``S``
    and inverted through the cumulative table.
    """
    u = np.atleast_1d(_as_float_array(u))
    out = np.full(u.shape, np.nan)
    if S.is_empty():
        return out
    tab = inst.table()
    lows, highs = S.lows, S.highs
    F_lo = tab.F(lows)
    masses = tab.F(highs) - F_lo
    cum = np.cumsum(masses)
    m = cum[-1]
    q = u * (1.0 + m)
    buy = q < m
    if buy.any():
        qb = q[buy]
        j = np.minimum(np.searchsorted(cum, qb, side="right"), len(cum) - 1)
        before = np.where(j > 0, cum[j - 1], 0.0)
        x = tab.inverse_F(F_lo[j] + (qb - before))
        out[buy] = np.clip(x, lows[j], highs[j])
    return out


def sample_purchase(inst: Instance, S: Assortment, rng: np.random.Generator) -> PurchaseOutcome:
    """Draw one customer's choice from ``S`` by inverse-CDF sampling."""
    return outcome_from_float(float(sample_purchases(inst, S, rng.random())[0]))
