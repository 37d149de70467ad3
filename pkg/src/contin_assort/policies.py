"""Learning policies and discrete baselines.

Every policy consumes one uniform per customer, drawn up front as a block
of ``T`` values from the replication's own generator.  A customer facing
assortment ``S`` with ``m = int_S v`` buys iff ``u (1 + m) < m``; the same
scaled uniform then picks the product by inverse CDF.  Regret is the
expected shortfall ``rho* - r(S_t, v)`` per period.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonTooShortError
from .kde import ExplorationLog, TestPlan, estimate_preference
from .model import Assortment, Instance, expected_revenue, integrate, sample_purchases
from .solver import SolverConfig, solve, solve_capacitated

LARGE_INDEX = 1e6  # optimistic value for bins never offered


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------


@dataclass
class SalesLog:
    """Offered assortments and purchases per period (NaN = no purchase)."""

    offers: list = field(default_factory=list)
    purchases: np.ndarray = field(default_factory=lambda: np.empty(0))
    epoch_lengths: list | None = None

    def to_rows(self, regret=None):
        rows = []
        for t, (S, x) in enumerate(zip(self.offers, self.purchases), start=1):
            ivs = ";".join(f"{a:.10g}:{b:.10g}" for a, b in S)
            out = "none" if np.isnan(x) else f"{x:.10g}"
            r = "" if regret is None else f"{regret[t - 1]:.12g}"
            rows.append((t, ivs, out, r))
        return rows

    def to_csv(self, path, regret=None):
        with open(path, "w") as fh:
            fh.write("t,assortment,outcome,regret\n")
            for row in self.to_rows(regret):
                fh.write(",".join(str(v) for v in row) + "\n")


@dataclass
class RegretTrace:
    """Instantaneous expected regret of a single run."""

    instantaneous: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.instantaneous)

    @property
    def total(self) -> float:
        return float(np.sum(self.instantaneous))

    def __len__(self):
        return len(self.instantaneous)


def _regret(rho_star, revenue):
    # tiny negative values are quadrature noise around the optimum
    return np.maximum(rho_star - np.asarray(revenue, dtype=float), 0.0)


# --------------------------------------------------------------------------
# SAP
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SapConfig:
    alpha: float = 1.0
    beta: float = 0.0
    rho1: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0.0 <= self.rho1 <= 1.0:
            raise ValueError("rho1 must lie in [0, 1]")

    def step_size(self, t):
        return self.alpha / (t + self.beta)

    def check(self, inst: Instance):
        """Warn when ``alpha`` is below the value the convergence proof needs."""
        if self.alpha < inst.v.v_hi + 1:
            warnings.warn(
                f"alpha={self.alpha} is below v_hi + 1 = {inst.v.v_hi + 1:.4g}",
                stacklevel=3,
            )


def sap_step(rho: float, t: int, cfg: SapConfig, outcome, w, S: Assortment | None = None) -> float:
    """One stochastic-approximation update, clamped to [0, 1]."""
    if t < 1:
        raise ValueError("t starts at 1")
    x = getattr(outcome, "x", None)
    if x is None or (S is not None and not bool(S.contains(x))):
        reward = 0.0
    else:
        reward = float(w(x))
    rho_next = rho + cfg.step_size(t) * (reward - rho)
    return min(1.0, max(0.0, rho_next))


def sap_batch(inst: Instance, cfg: SapConfig, u: np.ndarray, rho_star: float, keep_path: bool = False):
    """Run SAP on every row of ``u`` (shape ``(R, T)``) simultaneously.

    Returns the instantaneous regret matrix and, if requested, the
    thresholds offered and purchases made.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    R, T = u.shape
    tab = inst.table()
    w = inst.w
    F1, G1 = tab.total_mass, tab.total_weighted
    rho = np.full(R, cfg.rho1)
    regret = np.empty((R, T))
    lows = np.empty((R, T)) if keep_path else None
    buys = np.full((R, T), np.nan) if keep_path else None
    for t in range(1, T + 1):
        a = np.atleast_1d(w.inverse(rho))
        Fa = tab.F(a)
        m = F1 - Fa
        regret[:, t - 1] = _regret(rho_star, (G1 - tab.G(a)) / (1.0 + m))
        q = u[:, t - 1] * (1.0 + m)
        buy = q < m
        reward = np.zeros(R)
        if buy.any():
            x = np.clip(tab.inverse_F(Fa[buy] + q[buy]), a[buy], 1.0)
            reward[buy] = w(x)
            if keep_path:
                buys[buy, t - 1] = x
        if keep_path:
            lows[:, t - 1] = a
        rho = np.clip(rho + cfg.step_size(t) * (reward - rho), 0.0, 1.0)
    return regret, lows, buys


def run_sap(inst: Instance, cfg: SapConfig, T: int, rng: np.random.Generator, rho_star: float | None = None):
    """SAP for the uncapacitated problem; returns ``(SalesLog, RegretTrace)``."""
    if inst.c < 1.0:
        raise ValueError("SAP is defined for the uncapacitated problem (c = 1)")
    if T < 1:
        raise ValueError("horizon must be positive")
    cfg.check(inst)
    if rho_star is None:
        rho_star = solve(inst).rho_star
    u = rng.random(T)
    regret, lows, buys = sap_batch(inst, cfg, u[None, :], rho_star, keep_path=True)
    offers = [Assortment.interval(a, 1.0) for a in lows[0]]
    return SalesLog(offers, buys[0]), RegretTrace(regret[0])


# --------------------------------------------------------------------------
# KDEP
# --------------------------------------------------------------------------


def _two_thirds_power(T: int) -> float:
    t23 = T ** (2.0 / 3.0)
    r = round(t23)
    # exact cubes such as 1000 would otherwise floor one below
    return float(r) if abs(t23 - r) < 1e-9 * max(1.0, t23) else t23


@dataclass(frozen=True)
class KdepConfig:
    horizon: int
    plan: TestPlan
    explore: int | None = None
    knots: int = 2048

    def explore_length(self) -> int:
        """Repetitions ``M`` of each test assortment."""
        N, T = self.plan.count, self.horizon
        if T < N:
            raise HorizonTooShortError(f"horizon {T} shorter than the {N} test assortments")
        if self.explore is not None:
            M = int(self.explore)
            if M < 1:
                raise ValueError("explore length must be at least 1")
        else:
            M = max(1, int(math.floor(_two_thirds_power(T) / N)))
        if N * M > T:
            warnings.warn(f"exploration length reduced from {M} to {T // N}", stacklevel=2)
            M = T // N
        return M


def run_kdep(inst: Instance, cfg: KdepConfig, rng: np.random.Generator, rho_star: float | None = None,
             record: bool = True, solver_cfg: SolverConfig = SolverConfig()):
    """Explore every test assortment ``M`` times, estimate ``v``, then exploit.

    Returns ``(SalesLog, RegretTrace, EstimatedPreference)``.  With
    ``record=False`` the exploitation customers are not simulated, which
    leaves the regret untouched.
    """
    if inst.c >= 1.0:
        raise ValueError("KDEP needs a binding capacity c < 1")
    if abs(cfg.plan.c - inst.c) > 1e-12:
        raise ValueError("test plan capacity does not match the instance")
    T = cfg.horizon
    M = cfg.explore_length()
    if rho_star is None:
        rho_star = solve(inst, solver_cfg).rho_star
    u = rng.random(T)
    log = ExplorationLog(offers=M)
    regret = np.empty(T)
    purchases = np.full(T, np.nan)
    offers = []
    for i, (a, b) in enumerate(cfg.plan.assortments):
        S = Assortment.interval(a, b)
        sl = slice(i * M, (i + 1) * M)
        x = sample_purchases(inst, S, u[sl])
        purchases[sl] = x
        bought = x[~np.isnan(x)]
        log.add(bought, M - bought.size)
        regret[sl] = _regret(rho_star, expected_revenue(inst, S))
        if record:
            offers.extend([S] * M)
    est = estimate_preference(log, cfg.plan, cfg.knots)
    n_exp = cfg.plan.count * M
    S_hat = Assortment.empty()
    if n_exp < T:
        S_hat = solve_capacitated(inst.with_preference(est.to_preference()), solver_cfg).assortment
        regret[n_exp:] = _regret(rho_star, expected_revenue(inst, S_hat))
        if record:
            purchases[n_exp:] = sample_purchases(inst, S_hat, u[n_exp:])
            offers.extend([S_hat] * (T - n_exp))
    log_out = SalesLog(offers, purchases if record else purchases[:n_exp])
    return log_out, RegretTrace(regret), est


# --------------------------------------------------------------------------
# Discrete baselines
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteBins:
    """Equal-width bins of [0, 1] treated as discrete MNL products."""

    edges: np.ndarray
    v: np.ndarray
    w: np.ndarray
    vw: np.ndarray  # int_{B_i} v w, used for continuous revenue
    K: int

    @property
    def N(self) -> int:
        return len(self.v)

    def assortment(self, products) -> Assortment:
        idx = np.sort(np.asarray(list(products), dtype=int))
        return Assortment.from_arrays(self.edges[idx], self.edges[idx + 1])

    def revenue(self, products, v=None) -> float:
        """Discrete MNL revenue ``sum v_i w_i / (1 + sum v_i)``."""
        v = self.v if v is None else v
        idx = np.asarray(list(products), dtype=int)
        if idx.size == 0:
            return 0.0
        return float(np.sum(v[idx] * self.w[idx]) / (1.0 + np.sum(v[idx])))

    def continuous_revenue(self, products) -> float:
        idx = np.asarray(list(products), dtype=int)
        if idx.size == 0:
            return 0.0
        return float(np.sum(self.vw[idx]) / (1.0 + np.sum(self.v[idx])))


def discretize(inst: Instance, N: int, K: int | None = None) -> DiscreteBins:
    """Bin preferences ``int_{B_i} v`` and bin profits ``N int_{B_i} w``."""
    if N < 1:
        raise ValueError("need at least one bin")
    if K is None:
        K = N if inst.c >= 1.0 else max(1, int(math.floor(inst.c * N + 1e-9)))
    if not 1 <= K <= N:
        raise ValueError("capacity K must lie in [1, N]")
    edges = np.linspace(0.0, 1.0, N + 1)
    tab = inst.table()
    F = tab.F(edges)
    G = tab.G(edges)
    v = np.diff(F)
    vw = np.diff(G)
    w = np.empty(N)
    for i in range(N):
        w[i] = N * integrate(inst.w, Assortment.interval(edges[i], edges[i + 1]))
    return DiscreteBins(edges, v, w, vw, int(K))


def _top_k(score: np.ndarray, K: int) -> np.ndarray:
    pos = np.flatnonzero(score > 0)
    if pos.size > K:
        order = np.argsort(-score[pos], kind="stable")
        pos = np.sort(pos[order[:K]])
    return pos


def discrete_static_opt(bins: DiscreteBins, K: int | None = None, v=None, iters: int = 100):
    """Capacitated discrete MNL optimum by bisection on the revenue level.

    At level ``rho`` the best set of at most ``K`` products maximizes
    ``sum v_i (w_i - rho)``: take the top ``K`` positive scores.  The
    optimum is the level where that maximum equals ``rho``.
    """
    K = bins.K if K is None else K
    v = bins.v if v is None else np.asarray(v, dtype=float)
    w = bins.w
    lo, hi = 0.0, max(float(np.max(w)), 0.0)
    for _ in range(iters):
        # scores are linear in rho, so equal selections at both ends
        # pin down the selection at the fixed point as well
        if np.array_equal(_top_k(v * (w - lo), K), _top_k(v * (w - hi), K)):
            break
        mid = 0.5 * (lo + hi)
        sel = _top_k(v * (w - mid), K)
        if np.sum(v[sel] * (w[sel] - mid)) > mid:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    best, best_val = np.empty(0, dtype=int), 0.0
    for rho in (lo, hi):
        sel = _top_k(v * (w - rho), K)
        val = bins.revenue(sel, v)
        if val > best_val:
            best, best_val = sel, val
    return best, best_val


@dataclass
class EpochState:
    """Epoch bookkeeping for the discrete bandits."""

    offered: np.ndarray  # epochs in which each product was offered
    bought: np.ndarray  # purchases of each product over those epochs
    current: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    epochs: int = 0

    @classmethod
    def fresh(cls, N: int) -> "EpochState":
        return cls(np.zeros(N, dtype=int), np.zeros(N, dtype=int))

    @property
    def mean(self) -> np.ndarray:
        return np.where(self.offered > 0, self.bought / np.maximum(self.offered, 1), 0.0)


@dataclass(frozen=True)
class BanditConfig:
    variant: str = "UCB"
    c1: float = 1.0
    c2: float = 1.0
    log_mode: str = "horizon"  # or "epoch": log(sqrt(N) l + 1) at epoch l

    def __post_init__(self):
        if self.variant.upper() not in ("UCB", "TS"):
            raise ValueError(f"unknown bandit variant {self.variant!r}")
        if self.log_mode not in ("horizon", "epoch"):
            raise ValueError(f"unknown log mode {self.log_mode!r}")


def _index_values(state: EpochState, cfg: BanditConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    vbar = state.mean
    n = state.offered
    if cfg.variant.upper() == "UCB":
        if cfg.log_mode == "horizon":
            logT = math.log(max(T, 2))
        else:
            logT = math.log(math.sqrt(len(n)) * (state.epochs + 1) + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            idx = vbar + cfg.c1 * np.sqrt(vbar * logT / n) + cfg.c2 * logT / n
        return np.where(n > 0, idx, LARGE_INDEX)
    mean = (state.bought + 1.0) / (n + 1.0)
    var = mean * (mean + 1.0) / (n + 1.0)
    return rng.gamma(mean * mean / var, var / mean)


def run_discrete_bandit(variant, bins: DiscreteBins, K: int, T: int, inst: Instance, rng: np.random.Generator,
                        rho_star: float | None = None, cfg: BanditConfig | None = None, record: bool = True):
    """Epoch-based MNL-UCB or MNL-TS on the binned products.

    An epoch offers one assortment until the first no-purchase.  Customer
    choices follow the bin-level MNL probabilities, which coincide with
    the continuous model offering the union of the bins.
    """
    if T < 1:
        raise ValueError("horizon must be positive")
    cfg = cfg or BanditConfig(variant)
    if rho_star is None:
        rho_star = solve(inst).rho_star
    u = rng.random(T)
    state = EpochState.fresh(bins.N)
    regret = np.empty(T)
    picks = np.full(T, -1)
    offers = []
    epoch_lengths = []
    t = 0
    while t < T:
        vals = _index_values(state, cfg, T, rng)
        S, _ = discrete_static_opt(bins, K, v=vals)
        state.current = S
        cum = np.cumsum(bins.v[S]) if S.size else np.zeros(0)
        m = cum[-1] if S.size else 0.0
        r_S = _regret(rho_star, bins.continuous_revenue(S))
        start = t
        while t < T:
            window = u[t:min(T, t + 256)]
            q = window * (1.0 + m)
            stop = np.flatnonzero(q >= m)
            end = stop[0] + 1 if stop.size else window.size
            bought = q[:end][q[:end] < m]
            picks[t:t + bought.size] = S[np.searchsorted(cum, bought, side="right")] if S.size else []
            t += end
            if stop.size:
                break
        regret[start:t] = r_S
        if record:
            offers.extend([S] * (t - start))
        epoch_lengths.append(t - start)
        if t < T:  # the final epoch may be cut short by the horizon
            state.offered[S] += 1
            np.add.at(state.bought, picks[start:t][picks[start:t] >= 0], 1)
            state.epochs += 1
    purchases = np.full(T, np.nan)
    made = picks >= 0
    # record the bin midpoint as the purchased product label
    purchases[made] = 0.5 * (bins.edges[picks[made]] + bins.edges[picks[made] + 1])
    log = SalesLog([bins.assortment(S) for S in offers], purchases, epoch_lengths)
    return log, RegretTrace(regret)
