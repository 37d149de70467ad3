import math

import numpy as np
import pytest
from scipy.integrate import quad

from contin_assort import (Assortment, EmptyExplorationError, ExplorationLog, KernelSpec, PreferenceFunction,
                           TestPlan, bandwidth_and_order, combine_vhat, estimate_piece, estimate_preference,
                           kernel_eval, l1_distance, legendre_phi, sample_purchases, shift_coefficients)

from conftest import flat_instance


def test_legendre_values():
    assert legendre_phi(0, 0.3) == pytest.approx(1 / math.sqrt(2))
    assert legendre_phi(1, 1.0) == pytest.approx(math.sqrt(1.5))
    # P_2(x) = (3x^2 - 1)/2
    assert legendre_phi(2, 0.5) == pytest.approx(math.sqrt(2.5) * (3 * 0.25 - 1) / 2)


def test_legendre_orthonormality():
    worst = 0.0
    for j in range(13):
        for k in range(j, 13):
            val = quad(lambda t: legendre_phi(j, t) * legendre_phi(k, t), -1, 1, epsabs=1e-13)[0]
            worst = max(worst, abs(val - (j == k)))
    assert worst < 1e-8


def test_shift_coefficients_branches():
    a, b, h = 0.0, 0.5, 0.1
    assert shift_coefficients(0.25, a, b, h) == (1.0, 0.0, (-1.0, 1.0))
    g, z, (lo, hi) = shift_coefficients(a, a, b, h)
    assert (g, z, lo, hi) == (2.0, -1.0, 0.0, 1.0)
    g, z, (lo, hi) = shift_coefficients(b, a, b, h)
    assert (g, z, lo, hi) == (2.0, 1.0, -1.0, 0.0)


def test_shifted_support_maps_onto_unit_interval():
    a, b, h = 0.2, 0.7, 0.2
    for x in np.linspace(a, b, 17):
        g, z, (lo, hi) = shift_coefficients(x, a, b, h)
        assert g * lo + z == pytest.approx(-1.0)
        assert g * hi + z == pytest.approx(1.0)


def test_uniform_kernel():
    spec = KernelSpec(0.1, 0, 0.0, 0.5)
    assert kernel_eval(spec, 0.25, 0.3) == pytest.approx(0.5)
    assert kernel_eval(spec, 0.25, 1.5) == 0.0


@pytest.mark.parametrize("order", range(5))
def test_kernel_moments(order):
    a, b, h = 0.0, 0.5, 0.25
    spec = KernelSpec(h, order, a, b)
    for x in np.linspace(a, b, 9):
        _, _, (lo, hi) = shift_coefficients(x, a, b, h)
        for j in range(order + 1):
            m = quad(lambda u: u**j * kernel_eval(spec, x, u), lo, hi, epsabs=1e-13, limit=200)[0]
            assert m == pytest.approx(float(j == 0), abs=1e-7)


def test_bandwidth_and_order():
    h, ell, beta = bandwidth_and_order(0.5, 4)
    assert h == 0.25 and beta > 0.5 and ell == 0
    h, _, _ = bandwidth_and_order(0.9, 1000)
    assert h == pytest.approx(1 / math.e)
    _, _, b1 = bandwidth_and_order(0.5, 500)
    _, _, b2 = bandwidth_and_order(0.5, 1000)
    assert b2 - b1 == pytest.approx(0.5 * math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        bandwidth_and_order(0.5, 0)


def test_test_plan():
    plan = TestPlan(0.3)
    assert plan.count == 4
    S = plan.assortments
    assert S[0][0] == 0.0 and S[-1][1] == pytest.approx(1.0)
    assert all(b - a == pytest.approx(0.3, abs=1e-12) for a, b in S)
    assert plan.overlap(np.linspace(0, 1, 2048)).min() >= 1
    # c in (0.5, 1): two assortments [0, c] and [1 - c, 1]
    assert TestPlan(0.7).assortments == [(0.0, 0.7), (pytest.approx(0.3), pytest.approx(1.0))]


def _log(purchases, none, M):
    log = ExplorationLog(offers=M)
    log.add(purchases, none)
    return log


def test_estimate_piece_without_purchases():
    spec = KernelSpec(0.25, 2, 0.0, 0.5)
    alpha, f, v = estimate_piece(_log([], 10, 10), 0, spec, np.linspace(0, 1, 101))
    assert alpha == 0.0 and np.all(v == 0) and np.all(f == 0)


def test_estimate_piece_single_purchase():
    spec = KernelSpec(0.1, 0, 0.0, 0.5)
    grid = np.linspace(0, 1, 1001)
    _, _, v = estimate_piece(_log([0.25], 9, 10), 0, spec, grid)
    near = np.abs(grid - 0.25) <= 0.1 - 1e-12
    assert np.allclose(v[near], 1 / (10 * 2 * 0.1))
    assert np.all(v[np.abs(grid - 0.25) > 0.1 + 1e-12] == 0)


def test_estimate_piece_decomposition_and_support(rng):
    spec = KernelSpec(0.125, 3, 0.25, 0.5)
    data = 0.25 + 0.25 * rng.random(40)
    grid = np.linspace(0, 1, 2048)
    alpha, f, v = estimate_piece(_log(data, 60, 100), 0, spec, grid)
    assert np.max(np.abs(v - alpha * f)) < 1e-12
    outside = (grid < 0.25) | (grid > 0.5)
    assert np.all(v[outside] == 0)


def test_estimate_piece_requires_offers():
    with pytest.raises(EmptyExplorationError):
        estimate_piece(_log([], 0, 0), 0, KernelSpec(0.1, 0, 0, 0.5), np.linspace(0, 1, 11))


def test_combine_vhat():
    plan = TestPlan(0.6)
    grid = np.linspace(0, 1, 101)
    zero = combine_vhat([np.zeros(101), np.zeros(101)], plan, grid)
    assert np.all(zero.values == 0)
    q = 0.7
    pieces = [np.where((grid >= a) & (grid <= b), q, 0.0) for a, b in plan.assortments]
    est = combine_vhat(pieces, plan, grid)
    assert np.allclose(est.values, q)
    neg = combine_vhat([-np.ones(101), np.zeros(101)], plan, grid)
    assert neg.values.min() == 0.0


def _explore(inst, plan, M, rng):
    log = ExplorationLog(offers=M)
    for a, b in plan.assortments:
        x = sample_purchases(inst, Assortment.interval(a, b), rng.random(M))
        bought = x[~np.isnan(x)]
        log.add(bought, M - bought.size)
    return log


def test_piece_consistency_on_flat_preference():
    """Mean L1 error of a single piece shrinks as the sample grows."""
    inst = flat_instance()
    grid = np.linspace(0, 1, 2048)
    truth = np.where(grid <= 0.5, 1.0, 0.0)
    errs = []
    for M in (100, 1000, 10_000):
        e = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = sample_purchases(inst, Assortment.interval(0, 0.5), rng.random(M))
            bought = x[~np.isnan(x)]
            h, order, _ = bandwidth_and_order(0.5, bought.size)
            _, _, v = estimate_piece(_log(bought, M - bought.size, M), 0, KernelSpec(h, order, 0.0, 0.5), grid)
            e.append(np.trapezoid(np.abs(v - truth), grid))
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]


def test_bimodal_estimate_accuracy(bimodal_half):
    plan = TestPlan(0.5)
    dists = []
    for seed in range(20):
        est = estimate_preference(_explore(bimodal_half, plan, 10_000, np.random.default_rng(seed)), plan)
        dists.append(l1_distance(bimodal_half.v, est.to_preference()))
    assert np.mean(np.array(dists) <= 0.15) >= 0.9


def test_bimodal_estimate_consistency(bimodal_half):
    plan = TestPlan(0.5)
    means = []
    for M in (100, 1000, 10_000):
        d = [l1_distance(bimodal_half.v, estimate_preference(
            _explore(bimodal_half, plan, M, np.random.default_rng(seed)), plan).to_preference())
            for seed in range(10)]
        means.append(np.mean(d))
    assert means[0] >= means[1] >= means[2]


def test_estimated_preference_roundtrip(tmp_path, bimodal_half):
    plan = TestPlan(0.5)
    est = estimate_preference(_explore(bimodal_half, plan, 500, np.random.default_rng(1)), plan)
    assert np.all(np.isfinite(est.values)) and est.values.min() >= 0
    path = tmp_path / "vhat.csv"
    est.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], est.values, rtol=1e-11)
    v = est.to_preference()
    assert isinstance(v, PreferenceFunction) and v.knots is not None
