import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sandflip.lattice import make_config
from sandflip.models import FlipRateSpec, Interval, ModelSpec, Ring
from sandflip.oracle import (
    Distribution,
    OracleError,
    decode,
    domination_prefilter,
    encode,
    enumerate_chain,
    expectation,
    series_semigroup,
    series_window,
    state_heights,
    stationary_distribution,
    stochastic_domination_check,
    transient_distribution,
)


def ind0(h):
    return float(h[0] == 1)


@pytest.mark.parametrize(
    "top,spec",
    [
        (Ring(3), ModelSpec.sf(1.0)),
        (Ring(8), ModelSpec.sf(0.5, FlipRateSpec.glauber(0.25))),
        (Interval(7), ModelSpec.sf(0.7, FlipRateSpec.biased(0.3))),
        (Ring(9), ModelSpec.sa(0.3, 0.7)),
    ],
)
def test_rate_matrix_structure(top, spec):
    chain = enumerate_chain(top, spec)
    Q = chain.Q.toarray()
    off = Q - np.diag(np.diag(Q))
    assert off.min() >= 0
    assert np.abs(Q.sum(axis=1)).max() < 1e-14
    assert chain.Lambda >= -np.diag(Q).max()


def test_encoding_roundtrip():
    c = make_config(Ring(6), [1, 2, 2, 1, 1, 2])
    assert decode(encode(c), Ring(6)) == c
    assert state_heights(3).shape == (8, 3)


def test_pure_flip_chain_is_uniform():
    pi = stationary_distribution(enumerate_chain(Ring(3), ModelSpec.sf(0.0)))
    assert np.allclose(pi.weights, 1 / 8, atol=1e-12)


def test_transient_basics():
    chain = enumerate_chain(Ring(8), ModelSpec.sf(0.5))
    init = Distribution.all_ones(8)
    assert np.array_equal(transient_distribution(chain, init, 0.0).weights, init.weights)
    for t in (0.01, 0.5, 3.0, 20.0):
        w = transient_distribution(chain, init, t).weights
        assert w.min() > -1e-15 and abs(w.sum() - 1) < 1e-12


def test_transient_marginal_close_to_bulk_formula():
    chain = enumerate_chain(Ring(8), ModelSpec.sf(0.5))
    p = transient_distribution(chain, Distribution.all_ones(8), 1.0).prob_inactive([0])
    bulk = 0.25 + 0.75 * math.exp(-2)
    # finite ring: a lone inactive site cannot be removed by the avalanche part alone
    assert abs(p - bulk) < 0.05


def test_sa_balanced_density_conserved_from_symmetric_start():
    chain = enumerate_chain(Ring(8), ModelSpec.sa(0.5, 0.5))
    init = Distribution.product(8, 0.5)
    for t in (0.5, 1.0, 4.0):
        assert transient_distribution(chain, init, t).density_of_ones() == pytest.approx(0.5, abs=1e-10)


def test_stationary_residual_and_non_product_witness():
    chain = enumerate_chain(Ring(12), ModelSpec.sf(0.4))
    pi = stationary_distribution(chain)
    assert np.abs(chain.Q.T @ pi.weights).max() < 1e-10
    p0 = pi.prob_inactive([0])
    assert abs(p0 - 0.3) < 0.05
    assert abs(pi.prob_inactive([0, 1]) - p0 * pi.prob_inactive([1])) > 1e-3


def test_sa_stationary_density_grows_with_size():
    dens = [stationary_distribution(enumerate_chain(Ring(n), ModelSpec.sa(0.3, 0.7))).density_of_ones()
            for n in (8, 10, 12)]
    assert dens[0] < dens[1] < dens[2] < 1


def test_size_limit():
    with pytest.raises(OracleError):
        enumerate_chain(Ring(13), ModelSpec.sf(0.5))


def test_expectation_examples():
    assert expectation(Distribution.all_twos(5), lambda h: np.mean(h == 1)) == 0.0
    assert expectation(Distribution.uniform(5), lambda h: h[0]) == pytest.approx(1.5)
    assert expectation(Distribution.product(6, 0.3), lambda h: float(h[0] == 1 and h[1] == 1)) == pytest.approx(0.09)


# -- domination --------------------------------------------------------------


def test_domination_dirac_examples():
    n = 5
    lo, hi = Distribution.all_ones(n), Distribution.all_twos(n)
    assert stochastic_domination_check(lo, lo)
    assert stochastic_domination_check(lo, hi)
    assert not stochastic_domination_check(hi, lo)


def test_domination_antisymmetric_on_distinct_diracs():
    n = 4
    for a in range(16):
        for b in range(16):
            if a != b:
                da, db = Distribution.dirac(a, n), Distribution.dirac(b, n)
                assert not (stochastic_domination_check(da, db) and stochastic_domination_check(db, da))


def test_monotonicity_witness_n8():
    chain = enumerate_chain(Ring(8), ModelSpec.sf(0.5))
    for t in (0.1, 1.0, 10.0):
        lo = transient_distribution(chain, Distribution.all_ones(8), t)
        hi = transient_distribution(chain, Distribution.all_twos(8), t)
        assert stochastic_domination_check(lo, hi)


@given(st.integers(0, 2**32 - 1))
def test_prefilter_rejection_implies_no_domination(seed):
    r = np.random.default_rng(seed)
    n = 4
    a = Distribution(r.dirichlet(np.full(16, 0.3)), n)
    b = Distribution(r.dirichlet(np.full(16, 0.3)), n)
    if domination_prefilter(a, b) == "refuted":
        assert not stochastic_domination_check(a, b)
    if stochastic_domination_check(a, b):
        assert domination_prefilter(a, b) == "not refuted"


def test_flow_size_limit():
    with pytest.raises(OracleError):
        stochastic_domination_check(Distribution.uniform(9), Distribution.uniform(9))


# -- series ------------------------------------------------------------------

CFG10 = [1, 2, 1, 2, 2, 1, 2, 1, 2, 1]


def test_series_at_time_zero():
    c = make_config(Ring(10), CFG10)
    est, bound = series_semigroup(c, ind0, ModelSpec.sf(0.5), 0.0, 4)
    assert est == 1.0 and bound == 0.0


def test_series_first_order_uses_generator():
    top = Ring(8)
    spec = ModelSpec.sf(0.5)
    c = make_config(top, [1, 2, 1, 1, 2, 1, 2, 2])
    chain = enumerate_chain(top, spec)
    f = np.array([ind0(h) for h in state_heights(8)])
    Lf = (chain.Q @ f)[encode(c)]
    t = 0.005
    est, _ = series_semigroup(c, ind0, spec, t, 1)
    assert est == pytest.approx(f[encode(c)] + t * Lf, abs=1e-13)


def test_series_matches_uniformization_n10():
    top = Ring(10)
    spec = ModelSpec.sf(0.5)
    c = make_config(top, CFG10)
    est, bound = series_semigroup(c, ind0, spec, 0.02, 6)
    exact = transient_distribution(enumerate_chain(top, spec), Distribution.dirac(c), 0.02).prob_inactive([0])
    assert abs(est - exact) < 1e-8
    assert abs(est - exact) <= bound


@given(st.lists(st.sampled_from([1, 2]), min_size=7, max_size=7), st.floats(0.05, 0.95), st.sampled_from([2, 4]))
def test_series_error_within_bound(h, frac, n_max):
    top = Ring(7)
    spec = ModelSpec.sa(0.4, 0.6)
    c = make_config(top, h)
    k = np.count_nonzero(c.heights == 1)
    if not 2 <= k <= 5:
        with pytest.raises(OracleError):
            series_window(c, spec)
        return
    t = frac * series_window(c, spec)
    est, bound = series_semigroup(c, ind0, spec, t, n_max)
    exact = transient_distribution(enumerate_chain(top, spec), Distribution.dirac(c), t).prob_inactive([0])
    assert abs(est - exact) <= bound + 1e-12


def test_series_refuses_outside_window():
    c = make_config(Ring(10), CFG10)
    with pytest.raises(OracleError):
        series_semigroup(c, ind0, ModelSpec.sf(0.5), 1.0, 6)
