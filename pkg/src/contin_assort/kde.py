"""Boundary-corrected Legendre kernel estimation of the preference function.

Each test assortment ``[a, b]`` is offered ``M`` times.  Purchases inside
it give a kernel density estimate of ``v / int_{[a,b]} v``; the count of
no-purchases rescales that density into an estimate of ``v`` on ``[a, b]``.
Near the endpoints the kernel is remapped onto the available support so
that its low-order moments still vanish.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyExplorationError
from .model import PreferenceFunction

DEFAULT_KNOTS = 2048


@dataclass(frozen=True)
class TestPlan:
    """Overlapping length-``c`` test assortments covering [0, 1]."""

    __test__ = False  # keep pytest from collecting this class

    c: float

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError("test plans need 0 < c < 1")

    @property
    def count(self) -> int:
        return int(math.ceil(1.0 / self.c - 1e-12))

    @property
    def assortments(self) -> list[tuple[float, float]]:
        n = self.count
        out = []
        for i in range(1, n + 1):
            a = (i - 1) / (n - 1) * (1.0 - self.c)
            out.append((a, a + self.c))
        return out

    def overlap(self, x) -> np.ndarray:
        """Number of test assortments containing each ``x``."""
        x = np.asarray(x, dtype=float)
        k = np.zeros(x.shape, dtype=int)
        for a, b in self.assortments:
            k += (x >= a) & (x <= b)
        return k


@dataclass
class ExplorationLog:
    """Purchases and no-purchase counts collected per test assortment."""

    purchases: list = field(default_factory=list)
    no_purchases: list = field(default_factory=list)
    offers: int = 0

    def add(self, purchases, no_purchases: int):
        self.purchases.append(np.asarray(purchases, dtype=float))
        self.no_purchases.append(int(no_purchases))


@dataclass(frozen=True)
class KernelSpec:
    h: float
    order: int
    a: float
    b: float

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("kernel order must be nonnegative")
        if not 0.0 < self.h <= (self.b - self.a) / 2 + 1e-12:
            raise ValueError("bandwidth must lie in (0, (b - a)/2]")


@dataclass(frozen=True, eq=False)
class EstimatedPreference:
    knots: np.ndarray
    values: np.ndarray
    alphas: tuple = ()
    densities: tuple = ()
    pieces: tuple = ()

    def to_preference(self) -> PreferenceFunction:
        return PreferenceFunction.from_grid(self.knots, self.values, name="estimate")

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("x,v_hat\n")
            for x, y in zip(self.knots, self.values):
                fh.write(f"{x:.10g},{y:.12g}\n")


def legendre_phis(order: int, x) -> np.ndarray:
    """Orthonormal Legendre functions ``phi_0..phi_order`` stacked on axis 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty((order + 1,) + x.shape)
    p_prev = np.ones_like(x)
    out[0] = p_prev
    if order >= 1:
        p = x.copy()
        out[1] = p
        for n in range(1, order):
            p_next = ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
            p_prev, p = p, p_next
            out[n + 1] = p
    scale = np.sqrt((2 * np.arange(order + 1) + 1) / 2.0)
    return out * scale.reshape((-1,) + (1,) * x.ndim)


def legendre_phi(j: int, x):
    """``phi_j(x) = sqrt((2j+1)/2) P_j(x)`` via the three-term recurrence."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    out = legendre_phis(j, x)[j]
    return float(out) if np.ndim(out) == 0 else out


def shift_coefficients(x, a: float, b: float, h: float):
    """Boundary shift ``(gamma, zeta)`` and shifted support ``(lo, hi)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    left = x - a
    right = b - x
    gamma = np.ones_like(x)
    zeta = np.zeros_like(x)
    near_a = left < h
    near_b = (right < h) & ~near_a
    gamma = np.where(near_a, 2 * h / (h + left), gamma)
    zeta = np.where(near_a, -(h - left) / (h + left), zeta)
    gamma = np.where(near_b, 2 * h / (h + right), gamma)
    zeta = np.where(near_b, (h - right) / (h + right), zeta)
    lo = -np.minimum(1.0, left / h)
    hi = np.minimum(1.0, right / h)
    if x.ndim == 0:
        return float(gamma), float(zeta), (float(lo), float(hi))
    return gamma, zeta, (lo, hi)


def kernel_eval(spec: KernelSpec, x, u):
    """Legendre boundary kernel ``K_x(u)``; zero outside the shifted support."""
    x_arr, u_arr = np.broadcast_arrays(np.asarray(x, float), np.asarray(u, float))
    gamma, zeta, (lo, hi) = shift_coefficients(x_arr, spec.a, spec.b, spec.h)
    t = gamma * u_arr + zeta
    inside = (u_arr >= lo) & (u_arr <= hi)
    phi_z = legendre_phis(spec.order, zeta)
    phi_t = legendre_phis(spec.order, np.clip(t, -1.0, 1.0))
    k = gamma * np.sum(phi_z * phi_t, axis=0)
    out = np.where(inside, k, 0.0)
    return float(out) if out.ndim == 0 else out


def bandwidth_and_order(c: float, n: int):
    """Bandwidth ``min(c/2, 1/e)`` and the sample-size dependent kernel order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    h = min(c / 2.0, 1.0 / math.e)
    beta = 0.5 * math.log(-2.0 * n * math.log(h)) - 0.5
    return h, max(0, int(math.floor(beta))), beta


def _kernel_sums(spec: KernelSpec, xs: np.ndarray, data: np.ndarray, block: int = 256) -> np.ndarray:
    """``sum_X K_x((X - x)/h)`` for every ``x`` in ``xs``."""
    out = np.zeros(xs.shape)
    if data.size == 0 or xs.size == 0:
        return out
    data = np.sort(data)
    for start in range(0, xs.size, block):
        xb = xs[start:start + block]
        lo = np.searchsorted(data, xb.min() - spec.h, side="left")
        hi = np.searchsorted(data, xb.max() + spec.h, side="right")
        d = data[lo:hi]
        if d.size == 0:
            continue
        u = (d[None, :] - xb[:, None]) / spec.h
        out[start:start + block] = np.sum(kernel_eval(spec, xb[:, None], u), axis=1)
    return out


def estimate_piece(log: ExplorationLog, i: int, spec: KernelSpec, grid: np.ndarray):
    """Scale ``alpha_i``, density ``f_i`` and their product ``v_i`` on ``grid``.

    ``v_i`` is zero off the test assortment.  With no purchases the
    density is reported as zero as well.
    """
    if log.offers < 1:
        raise EmptyExplorationError("test assortment offered zero times")
    data = np.asarray(log.purchases[i], dtype=float)
    n_buy = data.size
    n_none = log.no_purchases[i]
    grid = np.asarray(grid, dtype=float)
    inside = (grid >= spec.a) & (grid <= spec.b)
    sums = np.zeros(grid.shape)
    sums[inside] = _kernel_sums(spec, grid[inside], data)
    alpha = n_buy / (n_none + 1)
    f = sums / (n_buy * spec.h) if n_buy else np.zeros(grid.shape)
    v = sums / ((n_none + 1) * spec.h)
    return alpha, f, v


def combine_vhat(pieces, plan: TestPlan, grid: np.ndarray, alphas=(), densities=()) -> EstimatedPreference:
    """Average the piece estimates over overlapping test assortments, clip at 0."""
    grid = np.asarray(grid, dtype=float)
    if len(pieces) != plan.count:
        raise ValueError(f"expected {plan.count} pieces, got {len(pieces)}")
    k = plan.overlap(grid)
    total = np.sum(np.asarray(pieces, dtype=float), axis=0)
    values = np.maximum(total / np.maximum(k, 1), 0.0)
    return EstimatedPreference(grid, values, tuple(alphas), tuple(densities), tuple(pieces))


def estimate_preference(log: ExplorationLog, plan: TestPlan, knots: int = DEFAULT_KNOTS) -> EstimatedPreference:
    """Full estimator: per-piece bandwidth/order selection, then averaging."""
    grid = np.linspace(0.0, 1.0, knots)
    pieces, alphas, dens = [], [], []
    for i, (a, b) in enumerate(plan.assortments):
        n = len(log.purchases[i])
        h, order, _ = bandwidth_and_order(plan.c, max(n, 1))
        spec = KernelSpec(h, order, a, b)
        alpha, f, v = estimate_piece(log, i, spec, grid)
        pieces.append(v)
        alphas.append(alpha)
        dens.append(f)
    if any(len(p) == 1 for p in log.purchases):
        warnings.warn("a test assortment saw a single purchase; estimate is crude", stacklevel=2)
    return combine_vhat(pieces, plan, grid, alphas, dens)
