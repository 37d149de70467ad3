"""Full-information optimal assortments.

The optimal revenue is the fixed point of ``rho -> I(S_rho, rho)`` where
``I(S, rho) = int_S v (w - rho)`` and ``S_rho`` maximizes ``I(., rho)``
over feasible sets.  Without a binding capacity ``S_rho`` is the upper
level set ``{w >= rho}``; otherwise it is filled from the highest level
sets of ``h(x) = v(x)(w(x) - rho)``, ties broken towards the left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import CapacityNotBindingError
from .model import Assortment, CumulativeTable, Instance


@dataclass(frozen=True)
class SolverConfig:
    outer_iters: int = 60
    inner_iters: int = 60
    grid_points: int = 4096
    root_tol: float = 1e-12

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be positive")
        if self.grid_points < 64:
            raise ValueError("grid_points must be at least 64")
        if not self.root_tol > 0:
            raise ValueError("root_tol must be positive")


@dataclass(frozen=True)
class SolveResult:
    rho_star: float
    assortment: Assortment
    trace: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class LevelSetResult:
    level: float
    plus_set: Assortment
    equal_set: Assortment
    fill: float


def upper_level_set(inst: Instance, rho: float) -> Assortment:
    """``W_rho = {x : w(x) >= rho} = [w^{-1}(rho), 1]``."""
    w = inst.w
    if rho <= w.w0:
        return Assortment.full()
    if rho > w.w1:
        return Assortment.empty()
    return Assortment.interval(w.inverse(rho), 1.0)


def inner_value(inst: Instance, S: Assortment, rho: float) -> float:
    """``I(S, rho) = int_S v(x)(w(x) - rho) dx``."""
    tab = inst.table()
    return tab.weighted(S) - rho * tab.mass(S)


# --------------------------------------------------------------------------
# Level-set geometry on the table grid
# --------------------------------------------------------------------------


class _Grid:
    """Per-instance arrays shared by every ``rho`` of one solve."""

    def __init__(self, inst: Instance, cfg: SolverConfig):
        self.inst = inst
        self.cfg = cfg
        self.tab: CumulativeTable = inst.table(cfg.grid_points)
        self.x = self.tab.knots
        self.dx = self.tab.dx
        self.v = self.tab.v_knots
        self.vw = self.tab.vw_knots
        self.v_hi = max(inst.v.v_hi, float(self.v.max()))

    def h(self, rho):
        return self.vw - rho * self.v

    def tolerance(self, hk):
        return self.cfg.root_tol * max(1.0, float(np.abs(hk).max()))


class _Level:
    """Piecewise-linear model of ``h`` at fixed ``rho``.

    Cells whose endpoint values differ by less than the tolerance are
    treated as flat, which is how plateaus such as ``v0 (w - s)`` are
    recognized.
    """

    def __init__(self, grid: _Grid, rho: float):
        self.grid = grid
        self.rho = rho
        hk = grid.h(rho)
        self.hk = hk
        h0, h1 = hk[:-1], hk[1:]
        self.h0, self.h1 = h0, h1
        self.lo = np.minimum(h0, h1)
        self.hi = np.maximum(h0, h1)
        self.tol = grid.tolerance(hk)
        span = self.hi - self.lo
        self.flat = span <= self.tol
        self.mid = 0.5 * (h0 + h1)
        self.inv_span = np.where(self.flat, 0.0, 1.0 / np.where(self.flat, 1.0, span))

    def volume(self, ell: float) -> float:
        """``vol{h >= ell}`` under the linear model."""
        frac = np.clip((self.hi - ell) * self.inv_span, 0.0, 1.0)
        frac = np.where(self.flat, (self.mid >= ell).astype(float), frac)
        return float(np.dot(frac, self.grid.dx))

    def pieces(self, ell: float):
        """Cellwise ``{h > ell}`` segments and the flat ``{h = ell}`` cells.

        Returns ``(plo, phi, flat_mask)``; cells without a strict part have
        ``plo == phi``.
        """
        x0 = self.grid.x[:-1]
        x1 = self.grid.x[1:]
        tol = self.tol
        eq = self.flat & (np.abs(self.mid - ell) <= tol)
        above_flat = self.flat & (self.mid > ell + tol)
        h0, h1 = self.h0, self.h1
        both = (h0 > ell) & (h1 > ell) & ~self.flat
        cross = ~self.flat & ((h0 > ell) != (h1 > ell))
        plo = x0.copy()
        phi = x0.copy()
        full = both | above_flat
        phi[full] = x1[full]
        if cross.any():
            d = h1[cross] - h0[cross]
            r = x0[cross] + (ell - h0[cross]) / d * (x1[cross] - x0[cross])
            r = np.clip(r, x0[cross], x1[cross])
            rising = h1[cross] > h0[cross]
            plo[cross] = np.where(rising, r, x0[cross])
            phi[cross] = np.where(rising, x1[cross], r)
        return plo, phi, eq


def _runs(lo: np.ndarray, hi: np.ndarray) -> Assortment:
    keep = hi > lo
    return Assortment.from_arrays(lo[keep], hi[keep]) if keep.any() else Assortment.empty()


def _leftmost_fill(x0, x1, eq_mask, deficit):
    """Leftmost part of the flat cells with total length ``deficit``."""
    if deficit <= 0 or not eq_mask.any():
        return Assortment.empty(), 0.0
    a = x0[eq_mask]
    b = x1[eq_mask]
    widths = b - a
    cum = np.cumsum(widths)
    k = int(np.searchsorted(cum, deficit, side="left"))
    if k >= a.size:
        return Assortment.from_arrays(a, b), float(b[-1])
    before = cum[k - 1] if k > 0 else 0.0
    end = a[k] + (deficit - before)
    return Assortment.from_arrays(np.r_[a[:k], a[k]], np.r_[b[:k], end]), float(end)


def _ib_level(level: _Level, c: float, cfg: SolverConfig) -> float:
    """Inner bisection on the level ``ell`` for ``vol{h >= ell} = c``."""
    grid = level.grid
    a = 0.0
    b = grid.v_hi * (grid.inst.w.w1 - level.rho) + 1.0
    piv = a + (b - a) / 2
    for _ in range(cfg.inner_iters):
        piv = a + (b - a) / 2
        if level.volume(piv) > c:
            a = piv
        else:
            b = piv
        if b - a <= 4 * np.finfo(float).eps * max(b, 1.0):
            break
    return piv


def _model_set(level: _Level, ell: float, c: float):
    """Volume-``c`` set from the linear model, its pieces and its fill point."""
    grid = level.grid
    plo, phi, eq = level.pieces(ell)
    deficit = c - float(np.sum(phi - plo))
    fill, x_piv = _leftmost_fill(grid.x[:-1], grid.x[1:], eq, deficit)
    return plo, phi, eq, fill, x_piv


def _set_integral(tab: CumulativeTable, lo: np.ndarray, hi: np.ndarray, rho: float) -> float:
    keep = hi > lo
    if not keep.any():
        return 0.0
    lo, hi = lo[keep], hi[keep]
    return float(np.sum(tab.G(hi) - tab.G(lo)) - rho * np.sum(tab.F(hi) - tab.F(lo)))


def _model_inner_max(grid: _Grid, rho: float, c: float) -> float:
    """``max_S I(S, rho)`` using the linear level-set model (fast path)."""
    W = upper_level_set(grid.inst, rho)
    if W.volume <= c:
        return inner_value(grid.inst, W, rho)
    level = _Level(grid, rho)
    ell = _ib_level(level, c, grid.cfg)
    plo, phi, eq, fill, _ = _model_set(level, ell, c)
    val = _set_integral(grid.tab, plo, phi, rho)
    if not fill.is_empty():
        val += _set_integral(grid.tab, fill.lows, fill.highs, rho)
    return val


# --------------------------------------------------------------------------
# Refinement against the true h
# --------------------------------------------------------------------------


def _true_h(inst: Instance, x, rho):
    return inst.v(x) * (inst.w(x) - rho)


def _refined_plus(grid: _Grid, level: _Level, ell: float):
    """``{h > ell}`` with crossing brackets bisected on the true ``h``."""
    plo, phi, eq = level.pieces(ell)
    x0 = grid.x[:-1]
    x1 = grid.x[1:]
    cross = ~level.flat & ((level.h0 > ell) != (level.h1 > ell))
    if cross.any():
        a = x0[cross].copy()
        b = x1[cross].copy()
        rising = level.h1[cross] > level.h0[cross]
        for _ in range(80):
            if np.all(b - a <= grid.cfg.root_tol):
                break
            m = 0.5 * (a + b)
            above = _true_h(grid.inst, m, level.rho) > ell
            # rising: root lies left of m when m is already above ell
            go_left = above == rising
            b = np.where(go_left, m, b)
            a = np.where(go_left, a, m)
        r = 0.5 * (a + b)
        plo[cross] = np.where(rising, r, x0[cross])
        phi[cross] = np.where(rising, x1[cross], r)
    return plo, phi, eq


def _level_geometry(grid: _Grid, rho: float, c: float, refine: bool = True):
    level = _Level(grid, rho)
    ell = _ib_level(level, c, grid.cfg)
    if not refine:
        plo, phi, eq = level.pieces(ell)
        return ell, level, plo, phi, eq
    plo, phi, eq = _refined_plus(grid, level, ell)
    vol = float(np.sum(phi - plo))
    has_flat = bool(eq.any())
    # with no plateau the refined set must itself carry volume c
    if not has_flat and abs(vol - c) > 1e-12:
        def excess(e):
            lo_, hi_, _ = _refined_plus(grid, level, e)
            return float(np.sum(hi_ - lo_)) - c

        step = max(level.tol, 1e-9 * max(1.0, abs(ell)))
        lo_e, hi_e = ell, ell
        f_lo = f_hi = excess(ell)
        for _ in range(30):
            if f_lo >= 0 >= f_hi:
                break
            if f_lo < 0:
                lo_e = max(0.0, lo_e - step)
                f_lo = excess(lo_e)
            if f_hi > 0:
                hi_e = hi_e + step
                f_hi = excess(hi_e)
            step *= 4
        ell_ref = ell
        if f_lo >= 0 >= f_hi and hi_e > lo_e:
            ell_ref = optimize.brentq(excess, lo_e, hi_e, xtol=1e-15, rtol=1e-15, maxiter=100)
        rlo, rhi, req = _refined_plus(grid, level, ell_ref)
        # nearly flat h makes the refinement ill-conditioned; keep the model
        # set when it is closer to the required volume
        mlo, mhi, meq = level.pieces(ell)
        if abs(float(np.sum(rhi - rlo)) - c) <= abs(float(np.sum(mhi - mlo)) - c) + 1e-12:
            ell, plo, phi, eq = ell_ref, rlo, rhi, req
        else:
            plo, phi, eq = mlo, mhi, meq
    if not eq.any():
        plo, phi = _trim_excess(level, ell, plo, phi, c)
    return ell, level, plo, phi, eq


def _trim_excess(level: _Level, ell: float, plo, phi, c: float):
    """Shave volume above ``c`` off the pieces closest to the level.

    When ``h`` is almost constant the level cannot be resolved finely
    enough in floating point to hit volume ``c``; the crossing pieces are
    where ``h`` is nearest ``ell``, so trimming them costs the least.
    """
    excess = float(np.sum(phi - plo)) - c
    if excess <= 0:
        return plo, phi
    plo, phi = plo.copy(), phi.copy()
    cross = np.flatnonzero(~level.flat & ((level.h0 > ell) != (level.h1 > ell)) & (phi > plo))
    order = list(cross) + [k for k in np.flatnonzero(phi > plo) if k not in set(cross)]
    for k in order:
        if excess <= 0:
            break
        cut = min(excess, phi[k] - plo[k])
        if level.h1[k] > level.h0[k]:
            plo[k] += cut
        else:
            phi[k] -= cut
        excess -= cut
    return plo, phi


def inner_bisection_level(inst: Instance, rho: float, cfg: SolverConfig = SolverConfig()) -> LevelSetResult:
    """Level ``ell_rho`` and the level sets ``L+``, ``L=`` with the leftmost fill point."""
    W = upper_level_set(inst, rho)
    if W.volume <= inst.c:
        raise CapacityNotBindingError(f"vol(W_rho) = {W.volume} <= c = {inst.c}")
    grid = _Grid(inst, cfg)
    ell, level, plo, phi, eq = _level_geometry(grid, rho, inst.c)
    plus = _runs(plo, phi)
    equal = _runs(grid.x[:-1][eq], grid.x[1:][eq])
    deficit = inst.c - plus.volume
    _, x_piv = _leftmost_fill(grid.x[:-1], grid.x[1:], eq, deficit)
    return LevelSetResult(ell, plus, equal, x_piv)


def _inner_max_set(grid: _Grid, rho: float, c: float) -> Assortment:
    W = upper_level_set(grid.inst, rho)
    if W.volume <= c:
        return W
    ell, level, plo, phi, eq = _level_geometry(grid, rho, c)
    plus = _runs(plo, phi)
    fill, _ = _leftmost_fill(grid.x[:-1], grid.x[1:], eq, c - plus.volume)
    return plus.union(fill)


def capacitated_inner_max(inst: Instance, rho: float, cfg: SolverConfig = SolverConfig()) -> Assortment:
    """A maximizer of ``I(., rho)`` over sets of volume at most ``c``."""
    if inst.c <= 0:
        return Assortment.empty()
    return _inner_max_set(_Grid(inst, cfg), rho, inst.c)


# --------------------------------------------------------------------------
# Fixed-point solvers
# --------------------------------------------------------------------------


def solve_capacitated(inst: Instance, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Outer bisection on ``rho`` against the sign of ``I(S_rho, rho) - rho``."""
    if inst.c <= 0:
        return SolveResult(0.0, Assortment.empty(), [])
    grid = _Grid(inst, cfg)
    a, b = 0.0, 1.0
    trace = []
    for _ in range(cfg.outer_iters):
        piv = a + (b - a) / 2
        val = _model_inner_max(grid, piv, inst.c)
        trace.append((piv, val))
        if val > piv:
            a = piv
        else:
            b = piv
        if b - a <= 2 * np.finfo(float).eps:
            break
    rho = a + (b - a) / 2
    S = _inner_max_set(grid, rho, inst.c)
    return SolveResult(rho, S, trace)


def solve_uncapacitated(inst: Instance, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Bisection for the fixed point of ``rho -> I([w^{-1}(rho), 1], rho)``."""
    tab = inst.table(cfg.grid_points)
    F1, G1 = tab.total_mass, tab.total_weighted
    w = inst.w

    def g(rho):
        y = w.inverse(rho)
        return (G1 - float(tab.G(y))) - rho * (F1 - float(tab.F(y)))

    a, b = 0.0, 1.0
    trace = []
    for _ in range(cfg.outer_iters):
        piv = a + (b - a) / 2
        val = g(piv)
        trace.append((piv, val))
        if val > piv:
            a = piv
        else:
            b = piv
        if b - a <= 2 * np.finfo(float).eps:
            break
    rho = a + (b - a) / 2
    return SolveResult(rho, upper_level_set(inst, rho), trace)


def solve(inst: Instance, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Dispatch on capacity."""
    if inst.c >= 1.0:
        return solve_uncapacitated(inst, cfg)
    return solve_capacitated(inst, cfg)


def inner_max_curve(inst: Instance, rhos, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """``rho -> I(S_rho, rho)`` evaluated on ``rhos`` (fast level-set model)."""
    grid = _Grid(inst, cfg)
    if inst.c <= 0:
        return np.zeros(len(rhos))
    return np.array([_model_inner_max(grid, float(r), inst.c) for r in rhos])


def best_single_interval(inst: Instance, grid: int = 1001):
    """Exhaustive search over intervals ``[a, b]`` on a uniform grid with ``b - a <= c``."""
    if grid < 2:
        raise ValueError("grid must be at least 2")
    if inst.c <= 0:
        return Assortment.empty(), 0.0
    tab = inst.table()
    xs = np.linspace(0.0, 1.0, grid)
    F = tab.F(xs)
    G = tab.G(xs)
    best_val, best = 0.0, (0, 0)
    step = 1.0 / (grid - 1)
    max_span = int(math.floor(inst.c / step + 1e-9))
    for i in range(grid - 1):
        j_hi = min(grid - 1, i + max_span)
        if j_hi <= i:
            continue
        js = np.arange(i + 1, j_hi + 1)
        r = (G[js] - G[i]) / (1.0 + F[js] - F[i])
        k = int(np.argmax(r))
        if r[k] > best_val:
            best_val, best = float(r[k]), (i, int(js[k]))
    if best == (0, 0):
        return Assortment.empty(), 0.0
    S = Assortment.interval(xs[best[0]], xs[best[1]])
    return S, best_val
