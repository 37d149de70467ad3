import itertools
import math
import warnings

import numpy as np
import pytest

from contin_assort import (Assortment, BanditConfig, HorizonTooShortError, KdepConfig, NoPurchase, Product,
                           ProfitCurve, SapConfig, TestPlan, discrete_static_opt, discretize, expected_revenue,
                           l1_distance, run_discrete_bandit, run_kdep, run_sap, sap_step, solve)
from contin_assort.policies import DiscreteBins, EpochState, sap_batch

from conftest import flat_instance

ROOT = 2 - math.sqrt(3)
W = ProfitCurve.identity()


# --------------------------------------------------------------------------
# SAP
# --------------------------------------------------------------------------


def test_sap_step_examples():
    assert sap_step(0.0, 1, SapConfig(), NoPurchase, W) == 0.0
    assert sap_step(0.0, 1, SapConfig(alpha=2.0), Product(0.6), W) == 1.0
    # a_t = 0.1 at t = 10 with alpha = 1
    assert sap_step(0.5, 10, SapConfig(), Product(0.5), W) == pytest.approx(0.5)


def test_sap_step_ignores_products_outside_offer():
    S = Assortment.interval(0.5, 1)
    assert sap_step(0.2, 1, SapConfig(), Product(0.3), W, S) == 0.0


def test_sap_step_sizes_decrease():
    cfg = SapConfig(alpha=2.0, beta=3.0)
    steps = [cfg.step_size(t) for t in range(1, 50)]
    assert all(a > b for a, b in zip(steps, steps[1:]))


def test_sap_config_validation():
    with pytest.raises(ValueError):
        SapConfig(alpha=0)
    with pytest.raises(ValueError):
        SapConfig(rho1=1.5)


def test_sap_warns_on_small_alpha(bimodal, rng):
    with pytest.warns(UserWarning, match="alpha"):
        run_sap(bimodal, SapConfig(alpha=1.0), 5, rng)


def test_sap_single_period(bimodal, rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        log, trace = run_sap(bimodal, SapConfig(), 1, rng)
    rho = solve(bimodal).rho_star
    assert len(trace) == 1
    assert trace.instantaneous[0] == pytest.approx(rho - expected_revenue(bimodal, Assortment.full()))
    assert trace.instantaneous[0] >= 0


def test_sap_matches_manual_updates(bimodal):
    """The batched recursion equals stepping through ``sap_step`` by hand."""
    rng = np.random.default_rng(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        log, _ = run_sap(bimodal, SapConfig(), 200, rng)
    rho = 0.0
    for t, (S, x) in enumerate(zip(log.offers, log.purchases), start=1):
        assert S.lows[0] == pytest.approx(rho, abs=1e-12)
        outcome = NoPurchase if np.isnan(x) else Product(x)
        rho = sap_step(rho, t, SapConfig(), outcome, W, S)


def test_sap_trace_properties(bimodal):
    rho = solve(bimodal).rho_star
    u = np.random.default_rng(0).random((5, 2000))
    regret, lows, buys = sap_batch(bimodal, SapConfig(), u, rho, keep_path=True)
    assert np.all(regret >= 0)
    assert np.all((lows >= 0) & (lows <= 1))
    bought = ~np.isnan(buys)
    assert np.all(buys[bought] >= lows[bought])


def test_sap_converges_on_flat_preference():
    inst = flat_instance()
    rho = solve(inst).rho_star
    u = np.stack([np.random.default_rng(s).random(10_000) for s in range(100)])
    _, lows, _ = sap_batch(inst, SapConfig(), u, rho, keep_path=True)
    # the threshold offered at time T is rho_T under the identity profit curve
    assert np.mean(np.abs(lows[:, -1] - ROOT) < 0.05) >= 0.95


def test_sap_requires_uncapacitated(bimodal_half, rng):
    with pytest.raises(ValueError):
        run_sap(bimodal_half, SapConfig(), 10, rng)


# --------------------------------------------------------------------------
# KDEP
# --------------------------------------------------------------------------


def test_kdep_exploration_length():
    plan = TestPlan(0.5)
    assert KdepConfig(10_000, plan).explore_length() == 232
    assert KdepConfig(1000, plan).explore_length() == 50
    with pytest.raises(HorizonTooShortError):
        KdepConfig(1, plan).explore_length()
    with pytest.warns(UserWarning):
        assert KdepConfig(5, plan, explore=10).explore_length() == 2


def test_kdep_structure(bimodal_half, rng):
    cfg = KdepConfig(3000, TestPlan(0.5))
    M = cfg.explore_length()
    log, trace, est = run_kdep(bimodal_half, cfg, rng)
    assert len(trace) == 3000 and len(log.offers) == 3000
    for i, (a, b) in enumerate(TestPlan(0.5).assortments):
        block = log.offers[i * M:(i + 1) * M]
        assert all(S.intervals == ((a, b),) for S in block)
    tail = log.offers[2 * M:]
    assert all(S is tail[0] for S in tail)
    assert tail[0].volume <= 0.5 + 1e-8
    assert np.all(trace.instantaneous >= 0)
    assert np.all(np.diff(trace.cumulative) >= 0)


def test_kdep_without_exploitation(bimodal_half, rng):
    cfg = KdepConfig(100, TestPlan(0.5), explore=50)
    _, trace, _ = run_kdep(bimodal_half, cfg, rng)
    rho = solve(bimodal_half).rho_star
    expected = sum(50 * (rho - expected_revenue(bimodal_half, Assortment.interval(a, b)))
                   for a, b in TestPlan(0.5).assortments)
    assert trace.total == pytest.approx(expected, rel=1e-12)


def test_kdep_horizon_too_short(bimodal_half, rng):
    with pytest.raises(HorizonTooShortError):
        run_kdep(bimodal_half, KdepConfig(1, TestPlan(0.5)), rng)


def test_kdep_exploitation_regret_bound(bimodal_half):
    rho = solve(bimodal_half).rho_star
    for seed in range(10):
        cfg = KdepConfig(2000, TestPlan(0.5))
        n_exp = 2 * cfg.explore_length()
        _, trace, est = run_kdep(bimodal_half, cfg, np.random.default_rng(seed), rho, record=False)
        bound = 2 * l1_distance(bimodal_half.v, est.to_preference())
        assert trace.instantaneous[n_exp] <= bound + 1e-6


# --------------------------------------------------------------------------
# Discrete baselines
# --------------------------------------------------------------------------


def test_discretize_examples(bimodal):
    b = discretize(flat_instance(), 2)
    assert np.allclose(b.v, [0.5, 0.5]) and np.allclose(b.w, [0.25, 0.75])
    b = discretize(bimodal, 1)
    assert b.v[0] == pytest.approx(bimodal.table().total_mass)
    assert b.w[0] == pytest.approx(0.5)
    b = discretize(bimodal, 10)
    assert b.v.sum() == pytest.approx(0.814359471471581, abs=1e-9)
    assert discretize(bimodal.with_capacity(0.5), 10).K == 5


def _brute_force(bins, K):
    best = 0.0
    for k in range(1, K + 1):
        for S in itertools.combinations(range(bins.N), k):
            best = max(best, bins.revenue(S))
    return best


def test_static_opt_single_product():
    b = DiscreteBins(np.array([0.0, 1.0]), np.array([0.8]), np.array([0.6]), np.array([0.48]), 1)
    S, val = discrete_static_opt(b)
    assert list(S) == [0] and val == pytest.approx(0.8 * 0.6 / 1.8)


def test_static_opt_two_bins():
    b = discretize(flat_instance(), 2)
    S, val = discrete_static_opt(b, 2)
    assert val == pytest.approx(_brute_force(b, 2), abs=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_static_opt_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 11))
    K = int(rng.integers(1, N + 1))
    v = rng.uniform(0.05, 2.0, N)
    w = np.sort(rng.uniform(0, 1, N))
    b = DiscreteBins(np.linspace(0, 1, N + 1), v, w, v * w, K)
    S, val = discrete_static_opt(b)
    assert len(S) <= K
    assert val == pytest.approx(_brute_force(b, K), abs=1e-10)


def test_bandit_single_period(bimodal, rng):
    bins = discretize(bimodal, 10)
    for variant in ("UCB", "TS"):
        log, trace = run_discrete_bandit(variant, bins, 10, 1, bimodal, rng)
        rho = solve(bimodal).rho_star
        S = log.offers[0]
        assert trace.instantaneous[0] == pytest.approx(rho - expected_revenue(bimodal, S), abs=1e-9)
        assert trace.instantaneous[0] >= 0


def test_bandit_epochs(bimodal, rng):
    bins = discretize(bimodal, 10)
    log, trace = run_discrete_bandit("TS", bins, 10, 3000, bimodal, rng)
    assert sum(log.epoch_lengths) == 3000
    ends = np.cumsum(log.epoch_lengths)
    # every completed epoch closes with its only no-purchase
    for start, end in zip(np.r_[0, ends[:-1]][:-1], ends[:-1]):
        assert np.isnan(log.purchases[end - 1])
        assert not np.any(np.isnan(log.purchases[start:end - 1]))
    assert np.all(np.diff(trace.cumulative) >= 0)


def test_epoch_estimates_are_unbiased(bimodal):
    """Purchases of bin i per epoch average to v_i for a fixed assortment."""
    bins = discretize(bimodal, 10)
    S = np.array([1, 3, 4, 8])
    rng = np.random.default_rng(7)
    state = EpochState.fresh(bins.N)
    cum = np.cumsum(bins.v[S])
    m = cum[-1]
    for _ in range(10_000):
        while True:
            q = rng.random() * (1 + m)
            if q >= m:
                break
            state.bought[S[np.searchsorted(cum, q, side="right")]] += 1
        state.offered[S] += 1
    assert np.allclose(state.mean[S], bins.v[S], rtol=0.05)


def test_bandit_variants_validate():
    with pytest.raises(ValueError):
        BanditConfig("EXP3")


@pytest.mark.slow
def test_ucb_regret_order_of_magnitude(bimodal):
    """Epoch-based UCB with the published confidence constants lands within [100, 600]."""
    bins = discretize(bimodal, 10)
    rho = solve(bimodal).rho_star
    cfg = BanditConfig("UCB", 48.0, 48.0, "epoch")
    totals = [run_discrete_bandit("UCB", bins, 10, 10_000, bimodal, np.random.default_rng(s), rho, cfg,
                                  record=False)[1].total for s in range(30)]
    assert 100 <= np.mean(totals) <= 600
