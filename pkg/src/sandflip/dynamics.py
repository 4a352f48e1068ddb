"""Continuous-time kinetic Monte Carlo for the SF and SA processes.

Every site carries Poisson clocks: additions at rate ``alpha``, and either
flip proposals at rate ``M`` (accepted with probability ``c(x, eta) / M``)
or anti-additions at rate ``beta``.  The superposition is simulated exactly:
one exponential waiting time at the total rate, then a uniform site and an
event kind.  Identity events (rejected flips, additions on an all-active
ring) still advance the clock.
"""

from collections import namedtuple
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels as K
from .lattice import constant_config, make_config
from .models import SA, SF, FlipRateSpec, ModelSpec, Topology  # noqa: F401  (re-exported)

Event = namedtuple("Event", ["kind", "site"])

EVENT_NAMES = ("addition", "anti-addition", "flip-accepted", "flip-rejected")

PRODUCT = "product"
ALL_ONES = "all_ones"
ALL_TWOS = "all_twos"
SINGLE_ONE = "single_one"


@dataclass(frozen=True)
class InitialDistribution:
    kind: str = PRODUCT
    rho: float = 0.5
    y: int = 0

    def __post_init__(self):
        if self.kind not in (PRODUCT, ALL_ONES, ALL_TWOS, SINGLE_ONE):
            raise ValueError(f"unknown initial distribution {self.kind!r}")
        if self.kind == PRODUCT and not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    @classmethod
    def product(cls, rho):
        return cls(PRODUCT, rho=float(rho))

    @classmethod
    def single_one(cls, y):
        return cls(SINGLE_ONE, y=int(y))


def sample_initial(dist, topology, rng):
    n = topology.n
    if dist.kind == PRODUCT:
        h = np.where(rng.random(n) < dist.rho, 1, 2).astype(np.int8)
        return make_config(topology, h)
    if dist.kind == ALL_ONES:
        return constant_config(topology, 1)
    if dist.kind == ALL_TWOS:
        return constant_config(topology, 2)
    h = np.full(n, 2, dtype=np.int8)
    h[topology.check_site(dist.y)] = 1
    return make_config(topology, h)


def replica_rng(master_seed, replica):
    """Independent stream for one replica; adding replicas never perturbs existing ones."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.PCG64(ss))


def replica_seed(master_seed, replica):
    """A 64-bit integer fingerprint of the replica stream, for manifests."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


_MIN_BATCH = 64
_MAX_BATCH = 1 << 16


class SimState:
    """A configuration evolving in time, with its own random stream and event counters."""

    def __init__(self, cfg, rng, t=0.0):
        self.cfg = cfg
        self.rng = rng
        self._tst = np.array([float(t), np.nan])
        self._ist = np.array([0, 0, cfg.n_inactive, -1, -1], dtype=np.int64)
        self._rnd = np.empty((0, 3))
        self._batch = _MIN_BATCH
        self.counters = np.zeros(4, dtype=np.int64)

    @classmethod
    def from_distribution(cls, dist, topology, rng):
        return cls(sample_initial(dist, topology, rng), rng)

    @property
    def t(self):
        return float(self._tst[0])

    @property
    def n_inactive(self):
        return int(self._ist[2])

    @property
    def density(self):
        return self._ist[2] / self.cfg.n

    @property
    def counts(self):
        return dict(zip(EVENT_NAMES, self.counters.tolist()))

    def _refill(self):
        self._rnd = self.rng.random((self._batch, 3))
        self._batch = min(2 * self._batch, _MAX_BATCH)
        self._ist[1] = 0

    def _advance(self, spec, t_stop, stop_kind=K.STOP_NONE, stop_a=0, stop_b=0, max_events=0):
        h, ones, twos, off, cnt = self.cfg._kernel_args()
        params = spec.kernel_params()
        ring = self.cfg.topology.is_ring
        while True:
            code = K.advance(
                h, ones, twos, off, cnt, ring, params, self._tst, self._ist,
                self.counters, self._rnd, float(t_stop), stop_kind, stop_a, stop_b, max_events,
            )
            if code != K.NEED_RANDOM:
                return code
            self._refill()


def step(state, spec):
    """Apply exactly one clock ring.  Returns ``(state, event, dt)``; ``state`` is updated in place."""
    t0 = state.t
    state._advance(spec, math.inf, max_events=1)
    ev = Event(EVENT_NAMES[state._ist[3]], int(state._ist[4]))
    return state, ev, state.t - t0


def run_until(state, spec, t_end, hooks=()):
    """Evolve to ``t_end`` evaluating observables at requested times.

    ``hooks`` is a sequence of ``(sample_times, observable)`` where
    ``observable(state)`` returns a number or an array.  Values are those of
    the state left by the last event before each sample time; times beyond
    ``t_end`` or before the current time are NaN.  Returns one array per
    hook, stacked along the first axis.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    schedule = []
    raw = []
    for k, (times, fn) in enumerate(hooks):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        raw.append([None] * times.shape[0])
        for j, s in enumerate(times):
            if state.t <= s <= t_end:
                schedule.append((float(s), k, j))
    schedule.sort()
    for s, k, j in schedule:
        if s > state.t:
            state._advance(spec, s)
        raw[k][j] = np.asarray(hooks[k][1](state))
    if t_end > state.t:
        state._advance(spec, t_end)
    return [_stack(vals) for vals in raw]


def _stack(vals):
    shape = next((v.shape for v in vals if v is not None), ())
    out = np.full((len(vals),) + shape, np.nan)
    for j, v in enumerate(vals):
        if v is not None:
            out[j] = v
    return out


def freezing_time(state, spec, epsilon, t_max, target="ones"):
    """First time the density of ones (``target="ones"``) or twos drops below ``epsilon``.

    Returns ``None`` on timeout (the state is then at ``t_max``).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    n = state.cfg.n
    if target == "ones":
        kind, thresh = K.STOP_ONES_BELOW, int(math.ceil(epsilon * n))
        hit = state.n_inactive < thresh
    elif target == "twos":
        kind, thresh = K.STOP_ONES_ABOVE, int(math.floor((1.0 - epsilon) * n))
        hit = state.n_inactive > thresh
    else:
        raise ValueError("target must be 'ones' or 'twos'")
    if hit:
        return state.t
    code = state._advance(spec, t_max, kind, thresh)
    return state.t if code == K.STOPPED else None


def lone_one_vanish_time(topology, alpha, window, rng, flip=None, t_max=math.inf):
    """Time until no inactive site is left within ``window`` of the centre.

    Starts from a single inactive site at the centre of an all-active
    interval: the finite-volume version of the lone one that the avalanche
    part removes instantly in infinite volume.
    """
    if topology.is_ring:
        raise ValueError("the lone-one experiment runs on an interval")
    spec = ModelSpec.sf(alpha, flip)
    c = topology.n // 2
    a, b = max(0, c - window), min(topology.n - 1, c + window)
    state = SimState.from_distribution(InitialDistribution.single_one(c), topology, rng)
    code = state._advance(spec, t_max, K.STOP_WINDOW_EMPTY, a, b)
    return state.t if code == K.STOPPED else None


def run_replicas(fn, master_seed, n_replicas, workers=1):
    """Call ``fn(replica, rng)`` for every replica; results ordered by replica id."""
    ids = range(int(n_replicas))
    if workers <= 1:
        return [fn(r, replica_rng(master_seed, r)) for r in ids]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, r, replica_rng(master_seed, r)) for r in ids]
        return [f.result() for f in futs]


def density_of_ones_state(state):
    return state.density
