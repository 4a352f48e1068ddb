import math

import numpy as np
import pytest
from scipy import stats

from sandflip.dynamics import (
    ALL_ONES,
    ALL_TWOS,
    InitialDistribution,
    SimState,
    freezing_time,
    lone_one_vanish_time,
    replica_rng,
    run_replicas,
    run_until,
    sample_initial,
    step,
)
from sandflip.lattice import constant_config, make_config, random_config
from sandflip.models import FlipRateSpec, Interval, ModelSpec, Ring
from sandflip.oracle import Distribution, enumerate_chain, transient_distribution


def test_initial_distributions(rng):
    assert np.all(sample_initial(InitialDistribution.product(0.0), Ring(50), rng).heights == 2)
    assert np.all(sample_initial(InitialDistribution(ALL_ONES), Ring(50), rng).heights == 1)
    assert np.all(sample_initial(InitialDistribution(ALL_TWOS), Ring(50), rng).heights == 2)
    c = sample_initial(InitialDistribution.single_one(0), Interval(9), rng)
    assert c.heights.tolist() == [1] + [2] * 8
    with pytest.raises(ValueError):
        InitialDistribution.product(1.5)


def test_total_event_rate_and_exponential_waiting_times():
    state = SimState(random_config(Ring(4), np.random.default_rng(0)), replica_rng(1, 0))
    spec = ModelSpec.sf(1.0)
    dts = np.array([step(state, spec)[2] for _ in range(20000)])
    assert dts.mean() == pytest.approx(1 / 8, rel=0.03)
    assert stats.kstest(dts, "expon", args=(0, 1 / 8)).pvalue > 1e-3


def test_same_seed_same_events():
    def trace(seed):
        state = SimState(random_config(Ring(30), np.random.default_rng(3)), replica_rng(seed, 0))
        spec = ModelSpec.sf(0.7, FlipRateSpec.glauber(0.2))
        return [(ev, dt) for _, ev, dt in (step(state, spec) for _ in range(500))]

    assert trace(11) == trace(11)
    assert trace(11) != trace(12)


def test_sampling_does_not_perturb_trajectory():
    spec = ModelSpec.sf(0.5)
    cfg = random_config(Ring(500), np.random.default_rng(4))
    a = SimState(cfg.copy(), replica_rng(9, 0))
    b = SimState(cfg.copy(), replica_rng(9, 0))
    run_until(a, spec, 3.0)
    run_until(b, spec, 3.0, [(np.linspace(0, 3, 37), lambda s: s.density)])
    assert a.cfg == b.cfg and a.t == b.t
    assert np.array_equal(a.counters, b.counters)


def test_time_and_counters_monotone_heights_valid():
    spec = ModelSpec.sa(0.4, 0.6)
    state = SimState(random_config(Ring(200), np.random.default_rng(5)), replica_rng(2, 0))
    last_t, last_c = state.t, state.counters.copy()

    def audit(s):
        s.cfg.audit()
        return s.t

    times = np.linspace(0.1, 2.0, 20)
    (ts,) = run_until(state, spec, 2.0, [(times, audit)])
    assert np.all(np.diff(ts) >= 0) and ts[0] >= last_t
    assert np.all(state.counters >= last_c)


def test_run_until_at_current_time_samples_nothing_beyond():
    state = SimState(random_config(Ring(20), np.random.default_rng(6)), replica_rng(0, 0))
    (vals,) = run_until(state, ModelSpec.sf(0.5), 0.0, [([0.0, 1.0], lambda s: s.density)])
    assert not math.isnan(vals[0]) and math.isnan(vals[1])
    assert state.t == 0.0
    with pytest.raises(ValueError):
        run_until(state, ModelSpec.sf(0.5), -1.0)


def test_pure_flips_relax_to_half():
    state = SimState(constant_config(Ring(20000), 2), replica_rng(3, 0))
    (vals,) = run_until(state, ModelSpec.sf(0.0), 5.0, [([5.0], lambda s: s.density)])
    assert vals[0] == pytest.approx(0.5, abs=0.015)


@pytest.mark.parametrize("spec,p_add", [(ModelSpec.sf(0.6), 0.6 / 1.6), (ModelSpec.sa(0.3, 0.7), 0.3)])
def test_event_kind_frequencies(spec, p_add):
    state = SimState(random_config(Ring(2000), np.random.default_rng(7)), replica_rng(4, 0))
    run_until(state, spec, 1e6 / (2000 * spec.per_site_rate))
    c = state.counters
    total = c.sum()
    sigma = math.sqrt(p_add * (1 - p_add) / total)
    assert abs(c[0] / total - p_add) < 4 * sigma


def test_glauber_thinning_matches_rates():
    """Acceptance frequency of flip proposals per local pattern equals c/M (chi-square)."""
    flip_spec = FlipRateSpec.glauber(0.25)
    spec = ModelSpec.sf(0.0, flip_spec)
    n = 64
    state = SimState(random_config(Ring(n), np.random.default_rng(8)), replica_rng(5, 0))
    prop = np.zeros(8)
    acc = np.zeros(8)
    rate = np.zeros(8)
    for _ in range(200_000):
        h = state.cfg.heights
        before = h.copy()
        _, ev, _ = step(state, spec)
        x = ev.site
        k = 4 * (before[x - 1] - 1) + 2 * (before[x] - 1) + (before[(x + 1) % n] - 1)
        prop[k] += 1
        acc[k] += ev.kind == "flip-accepted"
        if rate[k] == 0:
            rate[k] = flip_spec.rate(make_config(Ring(n), before), x)
    assert prop.sum() == 200_000 and np.all(prop > 1000)
    p = rate / flip_spec.M
    assert np.all((p >= flip_spec.m / flip_spec.M - 1e-12) & (p <= 1 + 1e-12))
    sure = np.isclose(p, 1.0)
    assert np.array_equal(acc[sure], prop[sure])
    q = p[~sure]
    chi2 = np.sum((acc[~sure] - prop[~sure] * q) ** 2 / (prop[~sure] * q * (1 - q)))
    assert stats.chi2.sf(chi2, df=q.size) > 1e-3


@pytest.mark.parametrize("family", [FlipRateSpec.glauber(0.3), FlipRateSpec.glauber(-0.4), FlipRateSpec.biased(0.6)])
def test_flip_rates_within_bounds(family, rng):
    for _ in range(200):
        c = random_config(Ring(12), rng)
        for x in range(12):
            assert family.m - 1e-12 <= family.rate(c, x) <= family.M + 1e-12


def test_freezing_time_matches_ode_at_alpha_two():
    state = SimState(constant_config(Ring(100_000), 1), replica_rng(6, 0))
    t = freezing_time(state, ModelSpec.sf(2.0), 1e-3, 5.0)
    assert t == pytest.approx(0.5 * math.log(3.0 / (1.0 + 2e-3)), abs=0.02)


def test_freezing_times_out_without_additions():
    state = SimState(random_config(Ring(5000), np.random.default_rng(9)), replica_rng(7, 0))
    assert freezing_time(state, ModelSpec.sf(0.0), 1e-3, 2.0) is None
    assert state.t == 2.0


def test_sa_absorption_near_inverse_drift():
    state = SimState(constant_config(Ring(50_000), 2), replica_rng(8, 0))
    t = freezing_time(state, ModelSpec.sa(0.3, 0.7), 1e-3, 10.0, target="twos")
    assert t == pytest.approx(2.5, abs=0.05)


def _median_vanish(n, alpha, reps, seed):
    return np.median([lone_one_vanish_time(Interval(n), alpha, 10, replica_rng(seed, r)) for r in range(reps)])


def test_lone_one_scaling_with_size_and_rate():
    m3 = _median_vanish(1000, 1.0, 400, 1)
    m4 = _median_vanish(10_000, 1.0, 400, 2)
    m_double = _median_vanish(1000, 2.0, 400, 3)
    assert 10 / 1.3 <= m3 / m4 <= 10 * 1.3
    assert 2 / 1.3 <= m3 / m_double <= 2 * 1.3


def test_lone_one_requires_interval():
    with pytest.raises(ValueError):
        lone_one_vanish_time(Ring(100), 1.0, 5, replica_rng(0, 0))


def _double(r, rng):
    return r * 2 + float(rng.random())


def test_replica_streams_independent_of_worker_count():
    a = run_replicas(_double, 42, 6, workers=1)
    b = run_replicas(_double, 42, 6, workers=2)
    assert a == b
    assert run_replicas(_double, 42, 3) == a[:3]


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_single_site_marginals_match_exact_chain(alpha):
    n, reps = 8, 100_000
    spec = ModelSpec.sf(alpha)
    times = np.array([0.5, 1.0, 2.0])
    r0 = np.random.default_rng(12)
    init = r0.integers(1, 3, n).astype(np.int8)
    cfg = make_config(Ring(n), init)
    counts = np.zeros((3, n))
    for r in range(reps):
        state = SimState(cfg.copy(), replica_rng(77, r))
        (hs,) = run_until(state, spec, 2.0, [(times, lambda s: s.cfg.heights == 1)])
        counts += hs
    freq = counts / reps
    chain = enumerate_chain(Ring(n), spec)
    for k, t in enumerate(times):
        d = transient_distribution(chain, Distribution.dirac(cfg), t)
        for x in range(n):
            p = d.prob_inactive([x])
            sigma = math.sqrt(max(p * (1 - p), 1e-12) / reps)
            assert abs(freq[k, x] - p) < 3.5 * sigma, (t, x, freq[k, x], p)
