"""Configurations and the exact one-dimensional operators.

Heights are 1 ("inactive") or 2 ("active").  The addition operator uses the
closed form: an inactive site simply becomes active; at an active site ``x``
the nearest inactive sites ``x-`` and ``x+`` become active and the mirror
site ``x- + x+ - x`` becomes inactive.  The anti-addition operator is the
same rule with the roles of the two heights exchanged.  The toppling
relaxation in :func:`stabilize_by_toppling` is an independent oracle for
both.
"""

from dataclasses import dataclass
import numpy as np

from . import _kernels as K
from ._bitset import OrderedBitSet
from .models import SF, Topology

LEFT = "left"
RIGHT = "right"


class LatticeError(ValueError):
    """Invalid configuration or a query that is undefined for it."""


class WrapUnsafeError(LatticeError):
    """The ring is too sparse for the infinite-line generator identity."""


class ToppleDivergence(RuntimeError):
    """The toppling oracle exceeded its iteration cap (a rule bug, not bad input)."""


class Configuration:
    """Heights in {1, 2} on a finite topology plus ordered indices of both heights.

    Operations return new configurations; the ``*_inplace`` methods exist for
    single-replica simulation loops.
    """

    __slots__ = ("topology", "heights", "_ones", "_twos")

    def __init__(self, topology, heights, _ones=None, _twos=None):
        self.topology = topology
        self.heights = heights
        if _ones is None:
            _ones = OrderedBitSet.from_mask(heights == 1)
            _twos = OrderedBitSet.from_mask(heights == 2)
        self._ones = _ones
        self._twos = _twos

    @property
    def n(self):
        return self.topology.n

    @property
    def inactive_index(self):
        """Ordered set of sites with height 1."""
        return self._ones

    @property
    def active_index(self):
        return self._twos

    @property
    def n_inactive(self):
        return len(self._ones)

    def copy(self):
        return Configuration(self.topology, self.heights.copy(), self._ones.copy(), self._twos.copy())

    def audit(self):
        """Raise if the indices disagree with the heights."""
        h = self.heights
        if not np.all((h == 1) | (h == 2)):
            raise LatticeError("heights outside {1, 2}")
        if not np.array_equal(self._ones.to_array(), np.flatnonzero(h == 1)):
            raise LatticeError("inactive index out of sync with heights")
        if not np.array_equal(self._twos.to_array(), np.flatnonzero(h == 2)):
            raise LatticeError("active index out of sync with heights")

    def _kernel_args(self):
        return self.heights, self._ones.bits, self._twos.bits, self._ones.off, self._ones.cnt

    def add_inplace(self, x):
        x = self.topology.check_site(x)
        return K.avalanche(*self._kernel_args(), self.topology.is_ring, x, 1)

    def anti_add_inplace(self, x):
        x = self.topology.check_site(x)
        return -K.avalanche(*self._kernel_args(), self.topology.is_ring, x, 2)

    def flip_inplace(self, x):
        x = self.topology.check_site(x)
        return K.flip_site(*self._kernel_args(), x)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.heights, other.heights)

    def __hash__(self):
        return hash((self.topology, self.heights.tobytes()))

    def __repr__(self):
        h = self.heights
        body = "".join(map(str, h.tolist())) if h.size <= 64 else f"{h.size} sites"
        return f"Configuration({self.topology}, {body})"


@dataclass
class UnstableConfiguration:
    """Nonnegative grain counts on an interval; exists only inside the toppling oracle."""

    topology: Topology
    heights: np.ndarray

    @classmethod
    def from_config(cls, cfg, x=None, delta=0):
        h = cfg.heights.astype(np.int64)
        if x is not None:
            h[cfg.topology.check_site(x)] += delta
        return cls(cfg.topology, h)


def make_config(topology, heights):
    h = np.asarray(heights)
    if h.ndim != 1 or h.shape[0] != topology.n:
        raise LatticeError(f"expected {topology.n} heights, got shape {h.shape}")
    if not np.all((h == 1) | (h == 2)):
        bad = h[(h != 1) & (h != 2)]
        raise LatticeError(f"height out of range: {bad[0]!r}")
    return Configuration(topology, h.astype(np.int8))


def constant_config(topology, value):
    return make_config(topology, np.full(topology.n, value, dtype=np.int8))


def flip(cfg, x):
    out = cfg.copy()
    out.flip_inplace(x)
    return out


def add(cfg, x):
    out = cfg.copy()
    out.add_inplace(x)
    return out


def anti_add(cfg, x):
    out = cfg.copy()
    out.anti_add_inplace(x)
    return out


def global_flip(cfg):
    h = (3 - cfg.heights).astype(np.int8)
    return Configuration(cfg.topology, h, cfg._twos.copy(), cfg._ones.copy())


def nearest_inactive(cfg, x, direction):
    """Nearest inactive site strictly left/right of ``x``.

    On a ring the scan wraps and ``None`` means there is no inactive site.  On
    an interval the virtual boundary position (``-1`` or ``n``) is returned
    when no interior site qualifies.
    """
    x = cfg.topology.check_site(x)
    ring = cfg.topology.is_ring
    o = cfg._ones
    if direction == RIGHT:
        r = K.nearest_right(o.bits, o.off, o.cnt, ring, x)
    elif direction == LEFT:
        r = K.nearest_left(o.bits, o.off, o.cnt, ring, x)
    else:
        raise ValueError(f"direction must be {LEFT!r} or {RIGHT!r}")
    if ring and r < 0:
        return None
    return int(r)


def k_plus(cfg, i):
    """``inf{j >= 0 : eta(i + j) = 1}``; the interval boundary counts as inactive."""
    n = cfg.n
    i = i % n if cfg.topology.is_ring else cfg.topology.check_site(i)
    if cfg.heights[i] == 1:
        return 0
    r = nearest_inactive(cfg, i, RIGHT)
    if r is None:
        return None
    return (r - i) % n if cfg.topology.is_ring else r - i


def k_minus(cfg, i):
    """``inf{j > 0 : eta(i - j) = 1}``; on a ring a lone inactive site finds itself at distance n."""
    n = cfg.n
    ring = cfg.topology.is_ring
    i = i % n if ring else cfg.topology.check_site(i)
    o = cfg._ones
    if ring:
        if len(o) == 0:
            return None
        r = K.nearest_left(o.bits, o.off, o.cnt, True, i)
        d = (i - r) % n
        return n if d == 0 else d
    return i - int(K.nearest_left(o.bits, o.off, o.cnt, False, i))


def stabilize_by_toppling(u, mode="forward", order="queue"):
    """Relax an unstable interval configuration by (reversed) topplings.

    forward: a site with >= 3 grains loses 2 and each neighbour gains 1;
    grains pushed past the ends are lost.  reverse: a site with 0 grains
    gains 2 and each neighbour loses 1; the ends act as a source.  ``order``
    selects which unstable site topples next ("queue", "stack", "left",
    "right"); the result does not depend on it.
    """
    if u.topology.is_ring:
        raise LatticeError("the toppling oracle runs on interval topologies")
    h = np.array(u.heights, dtype=np.int64)
    n = h.shape[0]
    if mode == "forward":
        unstable, sign = (lambda v: v >= 3), 1
    elif mode == "reverse":
        unstable, sign = (lambda v: v <= 0), -1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "forward" and np.any(h < 1) or mode == "reverse" and np.any(h > 2):
        raise LatticeError("input has heights the chosen mode cannot relax")
    cap = n * n + 4 * n
    pending = [x for x in range(n) if unstable(h[x])]
    steps = 0
    while pending:
        if order == "stack" or order == "right":
            x = pending.pop() if order == "stack" else pending.pop(pending.index(max(pending)))
        elif order == "left":
            x = pending.pop(pending.index(min(pending)))
        else:
            x = pending.pop(0)
        if not unstable(h[x]):
            continue
        steps += 1
        if steps > cap:
            raise ToppleDivergence(f"more than {cap} topplings on {n} sites")
        h[x] -= 2 * sign
        for y in (x - 1, x + 1):
            if 0 <= y < n:
                h[y] += sign
                if unstable(h[y]):
                    pending.append(y)
        if unstable(h[x]):
            pending.append(x)
    return make_config(u.topology, h)


def _wrap_safe(cfg, low):
    """At least 2 sites of each height, and the gaps of ``low``-sites around site 0 shorter than n/2."""
    n = cfg.n
    h = cfg.heights
    if np.count_nonzero(h == 1) < 2 or np.count_nonzero(h == 2) < 2:
        return False
    bits = cfg._ones if low == 1 else cfg._twos
    r = K.nearest_right(bits.bits, bits.off, bits.cnt, True, 0)
    l = K.nearest_left(bits.bits, bits.off, bits.cnt, True, 0)
    dr = r % n or n
    dl = (-l) % n or n
    if h[0] == low:
        return dr < n / 2 and dl < n / 2
    return dr + dl < n / 2


def pointwise_generator_height0(cfg, spec):
    """``L f(eta)`` for ``f(eta) = eta(0)``, summed explicitly over every site of the ring."""
    if not cfg.topology.is_ring:
        raise LatticeError("the pointwise generator is evaluated on rings")
    lows = (1,) if spec.variant == SF else (1, 2)
    if not all(_wrap_safe(cfg, low) for low in lows):
        raise WrapUnsafeError("configuration too sparse around site 0 for a ring-safe generator")
    o = cfg._ones
    return float(
        K.generator_height_sum(
            cfg.heights, True, spec.kernel_params(), 0, o.off, o.cnt, o.bits.shape[0]
        )
    )


def rene_closed_form(cfg, alpha):
    """Closed form of ``L eta(0)`` for the pure SF process."""
    eta0 = int(cfg.heights[0])
    ind = 1 if eta0 == 1 else 0
    kp = k_plus(cfg, 1)
    km = k_minus(cfg, 0)
    body = alpha * (kp + km + 1) if ind else 0.0
    return body + 3 - alpha - 2 * eta0


def decency_statistic(cfg, window=None):
    """Average gap between consecutive inactive sites within ``window`` of site 0.

    On a ring with ``window`` None (or at least n/2) this is n / #inactive.
    """
    n = cfg.n
    pos = cfg.inactive_index.to_array()
    if pos.size < 2:
        raise LatticeError("decency statistic needs at least 2 inactive sites")
    if cfg.topology.is_ring and (window is None or 2 * window + 1 >= n):
        return n / pos.size
    if window is None:
        window = n
    rel = pos.copy()
    if cfg.topology.is_ring:
        rel = np.where(rel > n // 2, rel - n, rel)
        rel.sort()
    inside = rel[(rel >= -window) & (rel <= window)]
    if inside.size < 2:
        raise LatticeError("fewer than 2 inactive sites inside the window")
    return float(np.mean(np.diff(inside)))


def ring_add_by_unrolling(cfg, x, mode="forward"):
    """Toppling oracle for a ring addition (or anti-addition): lift to two periods, relax, fold back.

    Valid when the ring has at least one site of the height being sought; the
    lift places ``x`` at the centre of ``2n + 1`` periodic copies so that the
    avalanche never reaches the dissipative ends.
    """
    from .models import Interval

    n = cfg.n
    low = 1 if mode == "forward" else 2
    if not np.any(cfg.heights == low):
        raise LatticeError("unrolling oracle needs at least one site of the sought height")
    lift_sites = np.arange(x - n, x + n + 1)
    lifted = cfg.heights[lift_sites % n].astype(np.int64)
    centre = n
    lifted[centre] += 1 if mode == "forward" else -1
    res = stabilize_by_toppling(UnstableConfiguration(Interval(2 * n + 1), lifted), mode=mode)
    before = cfg.heights[lift_sites % n]
    out = cfg.heights.copy()
    changed = {}
    for k in np.flatnonzero(res.heights != before):
        site = int(lift_sites[k] % n)
        v = int(res.heights[k])
        if changed.get(site, v) != v:
            raise LatticeError("inconsistent fold-back of unrolled avalanche")
        changed[site] = v
    for site, v in changed.items():
        out[site] = v
    return make_config(cfg.topology, out)


def random_config(topology, rng, rho=0.5):
    return make_config(topology, np.where(rng.random(topology.n) < rho, 1, 2).astype(np.int8))


__all__ = [
    "Configuration",
    "UnstableConfiguration",
    "LatticeError",
    "WrapUnsafeError",
    "ToppleDivergence",
    "LEFT",
    "RIGHT",
    "make_config",
    "constant_config",
    "random_config",
    "flip",
    "add",
    "anti_add",
    "global_flip",
    "nearest_inactive",
    "k_plus",
    "k_minus",
    "stabilize_by_toppling",
    "pointwise_generator_height0",
    "rene_closed_form",
    "decency_statistic",
    "ring_add_by_unrolling",
]
