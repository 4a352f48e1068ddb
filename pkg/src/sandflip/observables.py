"""Estimators and closed-form predictions for densities, gaps and block events.

The density of inactive sites obeys a linear ODE ``d rho / dt = A - B rho``
for every flip family, because each addition removes exactly one inactive
site (on a ring with at least two of them):

    pure      A = 1 - alpha            B = 2
    glauber   A = alpha_c - alpha      B = 2 alpha_c,  alpha_c = 1 - 2 gamma
    biased    A = 1 - kappa - alpha    B = 2,          alpha_c = 1 - kappa
"""

from collections import Counter
from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy import stats

from . import _kernels as K
from .lattice import LatticeError, add, anti_add, flip, global_flip, make_config
from .models import BIASED, GLAUBER, FlipRateSpec, ModelSpec, Ring

LS = "LS"
LF = "LF"
SA_BLOCK = "SA"


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    half_width: float
    n_samples: int
    method: str

    def covers(self, value):
        return abs(self.mean - value) <= self.half_width

    def __str__(self):
        return f"{self.mean:.5f} ± {self.half_width:.5f} ({self.method}, n={self.n_samples})"


# -- configuration observables ---------------------------------------------


def density_of_ones(cfg):
    return cfg.n_inactive / cfg.n


def block_indicator(cfg, n, offset=0):
    """1 iff the ``n`` sites starting at index ``offset`` are all inactive."""
    if n < 1:
        raise ValueError("block length must be at least 1")
    N = cfg.n
    sites = np.arange(offset, offset + n)
    if cfg.topology.is_ring:
        if n > N:
            raise LatticeError("block longer than the ring")
        sites %= N
    elif sites[0] < 0 or sites[-1] >= N:
        raise LatticeError("block exceeds the interval")
    return int(np.all(cfg.heights[sites] == 1))


def gap_statistics(cfg):
    """Counter of distances between cyclically consecutive inactive sites on a ring."""
    if not cfg.topology.is_ring:
        raise LatticeError("gap statistics are defined on rings")
    pos = cfg.inactive_index.to_array()
    if pos.size < 2:
        raise LatticeError("gap statistics need at least 2 inactive sites")
    gaps = np.diff(np.append(pos, pos[0] + cfg.n))
    return Counter(gaps.tolist())


def dual_gap_statistics(cfg):
    """Gap statistics of the active sites (the intervals of the flipped configuration)."""
    return gap_statistics(global_flip(cfg))


@njit(cache=True)
def _k_minus_sum(h, ones, off, cnt):
    n = h.shape[0]
    total = 0
    for x in range(n):
        if h[x] == 1:
            l = K.nearest_left(ones, off, cnt, True, x)
            d = (x - l) % n
            total += n if d == 0 else d
    return total


def renewal_identity_residual(cfg):
    """``(1/N) sum_x [eta(x)=1] k^-(x, eta) - 1``; exactly zero on every ring with an inactive site."""
    if not cfg.topology.is_ring:
        raise LatticeError("the renewal identity is checked on rings")
    if cfg.n_inactive == 0:
        raise LatticeError("renewal identity needs at least one inactive site")
    o = cfg.inactive_index
    total = _k_minus_sum(cfg.heights, o.bits, o.off, o.cnt)
    return total / cfg.n - 1.0


def two_point_correlation(cfg, max_lag):
    """Empirical ``P(1 at x, 1 at x+r) - rho^2`` for ``r = 1..max_lag`` (descriptive only)."""
    ind = (cfg.heights == 1).astype(float)
    rho = ind.mean()
    return np.array([np.mean(ind * np.roll(ind, -r)) - rho**2 for r in range(1, max_lag + 1)])


# -- closed-form theory ----------------------------------------------------


def critical_alpha(flip_spec=None):
    f = flip_spec or FlipRateSpec()
    if f.family == GLAUBER:
        return 1.0 - 2.0 * f.gamma
    if f.family == BIASED:
        return 1.0 - f.kappa
    return 1.0


def _ode_coeffs(alpha, flip_spec):
    f = flip_spec or FlipRateSpec()
    if f.family == GLAUBER:
        ac = critical_alpha(f)
        return ac - alpha, 2.0 * ac
    if f.family == BIASED:
        return 1.0 - f.kappa - alpha, 2.0
    return 1.0 - alpha, 2.0


def ode_fixed_point(alpha, flip_spec=None):
    """Fixed point of the density ODE (negative above criticality)."""
    A, B = _ode_coeffs(alpha, flip_spec)
    if B <= 0:
        return -math.inf if alpha > 0 else 0.5
    return A / B


def predicted_density(t, rho0, alpha, flip_spec=None):
    """Density of inactive sites at time ``t``, clipped to [0, 1]."""
    if t < 0 or not 0 <= rho0 <= 1:
        raise ValueError("need t >= 0 and rho0 in [0, 1]")
    A, B = _ode_coeffs(alpha, flip_spec)
    if B <= 0:
        val = rho0 + A * t
    else:
        r = A / B
        val = r + (rho0 - r) * math.exp(-B * t)
    return min(1.0, max(0.0, val))


def density_hitting_time(level, rho0, alpha, flip_spec=None):
    """First time the density ODE started at ``rho0`` reaches ``level`` (or +inf)."""
    A, B = _ode_coeffs(alpha, flip_spec)
    if rho0 <= level:
        return 0.0
    if B <= 0:
        return (level - rho0) / A if A < 0 else math.inf
    r = A / B
    if r >= level:
        return math.inf
    return math.log((rho0 - r) / (level - r)) / B


def freeze_time(rho0, alpha, flip_spec=None):
    """Time at which the density ODE reaches 0 from ``rho0``; +inf when it never does."""
    return density_hitting_time(0.0, rho0, alpha, flip_spec)


def predicted_stationary_density(alpha, flip_spec=None):
    """Stationary density of inactive sites; 0 at and above the critical rate.

    Glauber gives ``(1 - alpha/alpha_c)/2``; the biased family gives
    ``(alpha_c - alpha)/2``; both reduce to ``(1 - alpha)/2`` for pure flips.
    """
    if critical_alpha(flip_spec) <= 0 and alpha > 0:
        return 0.0
    return max(0.0, ode_fixed_point(alpha, flip_spec))


def density_lower_bound(alpha, flip_spec=None):
    """``(m - alpha) / 2M``: no translation invariant stationary law has fewer inactive sites."""
    f = flip_spec or FlipRateSpec()
    return (f.m - alpha) / (2.0 * f.M)


def predicted_generator_block(rho, n, which):
    """Closed forms of ``int L H_n d lambda_rho`` for ``n >= 2``."""
    if n < 2:
        raise ValueError("block formulas hold for n >= 2 only")
    if which == LS:
        return -n * rho**n - 2 * rho ** (n - 1) * (1 - rho)
    if which == LF:
        return -n * rho**n + n * rho ** (n - 1) * (1 - rho)
    if which == SA_BLOCK:
        return rho ** (n - 1) * (1 - rho) * (n - 2)
    raise ValueError(f"unknown generator part {which!r}")


def product_consistency_rho(n, alpha):
    """The density a product law would need to be stationary, judged on block size ``n``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return (n - 2 * alpha) / (2 * n + (n - 2) * alpha)


@dataclass(frozen=True)
class TheoryContext:
    spec: ModelSpec

    @property
    def alpha_c(self):
        return critical_alpha(self.spec.flip)

    @property
    def rho_stationary(self):
        return predicted_stationary_density(self.spec.alpha, self.spec.flip)

    def rho(self, t, rho0):
        if self.spec.variant == "sa":
            return min(1.0, max(0.0, rho0 + (self.spec.beta - self.spec.alpha) * t))
        return predicted_density(t, rho0, self.spec.alpha, self.spec.flip)

    def t_prime(self, rho0):
        return freeze_time(rho0, self.spec.alpha, self.spec.flip)


# -- statistics ------------------------------------------------------------

MIN_BATCHES = 20


def _ci_from_groups(means, n_samples, method, level=0.95):
    means = np.asarray(means, dtype=float)
    b = means.size
    if b < MIN_BATCHES:
        raise EstimationError(f"need at least {MIN_BATCHES} batches or replicates, got {b}")
    sd = means.std(ddof=1)
    q = stats.t.ppf(0.5 + level / 2, b - 1)
    return EstimateWithCI(float(means.mean()), float(q * sd / math.sqrt(b)), int(n_samples), method)


def batch_means(series, n_batches=None):
    """Mean and 95% half-width from non-overlapping batch means of a (possibly correlated) series."""
    x = np.asarray(series, dtype=float)
    if n_batches is None:
        n_batches = min(100, x.size)
    if x.size < MIN_BATCHES or n_batches < MIN_BATCHES:
        raise EstimationError(f"need at least {MIN_BATCHES} batches, got series of {x.size}")
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return _ci_from_groups(means, x.size, "batch-means")


def replicate_means(values):
    """CI across independent replicates (one value each)."""
    v = np.asarray(values, dtype=float)
    return _ci_from_groups(v, v.size, "replicate-means")


# -- Monte Carlo generator-on-block estimates ------------------------------


@njit(cache=True)
def _scan(h, x, low, step):
    """Nearest site with height ``low`` strictly beyond ``x`` in direction ``step``; -1 if off the window."""
    y = x + step
    while 0 <= y < h.shape[0]:
        if h[y] == low:
            return y
        y += step
    return -1


@njit(cache=True)
def _block_after(h, b0, n, x, low, changes):
    """H_n after an (anti-)addition at ``x``; returns -1 if the window is too short."""
    high = 3 - low
    k = 0
    if h[x] == low:
        changes[0, 0] = x
        changes[0, 1] = high
        k = 1
    else:
        xm = _scan(h, x, low, -1)
        xp = _scan(h, x, low, 1)
        if xm < 0 or xp < 0:
            return -1
        changes[0, 0] = xm
        changes[0, 1] = high
        changes[1, 0] = xp
        changes[1, 1] = high
        changes[2, 0] = xm + xp - x
        changes[2, 1] = low
        k = 3
    for y in range(b0, b0 + n):
        v = h[y]
        for j in range(k):
            if changes[j, 0] == y:
                v = changes[j, 1]
        if v != 1:
            return 0
    return 1


@njit(cache=True)
def _op_block_sum(h, b0, n, low):
    """sum_x [H_n(op_x eta) - H_n(eta)] over all contributing x, or nan if the window is too short."""
    changes = np.empty((3, 2), dtype=np.int64)
    H = 1
    for y in range(b0, b0 + n):
        if h[y] != 1:
            H = 0
    a = _scan(h, b0, low, -1)
    b = _scan(h, b0 + n - 1, low, 1)
    if a < 0 or b < 0:
        return np.nan
    total = 0.0
    for x in range(a, b + 1):
        after = _block_after(h, b0, n, x, low, changes)
        if after < 0:
            return np.nan
        total += after - H
    return total


@njit(cache=True)
def _flip_block_sum(h, b0, n):
    H = 1
    for y in range(b0, b0 + n):
        if h[y] != 1:
            H = 0
    total = 0.0
    for x in range(b0, b0 + n):
        after = 1
        for y in range(b0, b0 + n):
            v = h[y]
            if y == x:
                v = 3 - v
            if v != 1:
                after = 0
        total += after - H
    return total


@njit(cache=True)
def _block_terms(windows, b0, n, which):
    out = np.empty(windows.shape[0])
    for s in range(windows.shape[0]):
        h = windows[s]
        if which == 0:
            out[s] = _op_block_sum(h, b0, n, 1)
        elif which == 1:
            out[s] = _flip_block_sum(h, b0, n)
        else:
            out[s] = _op_block_sum(h, b0, n, 1) + _op_block_sum(h, b0, n, 2)
    return out


_WHICH_CODE = {LS: 0, LF: 1, SA_BLOCK: 2}


def generator_block_on_ring(cfg, n, which, offset=0):
    """Exact ``(L H_n)(cfg)`` on a ring by applying every operator at every site."""
    N = cfg.n
    H0 = block_indicator(cfg, n, offset)
    ops = {LS: (add,), LF: (flip,), SA_BLOCK: (add, anti_add)}[which]
    total = 0
    for op in ops:
        for x in range(N):
            total += block_indicator(op(cfg, x), n, offset) - H0
    return float(total)


def mc_generator_block_estimate(rho, n, which, samples, topology, rng, n_batches=100):
    """Monte Carlo estimate of ``int (L H_n) d lambda_rho`` on a ring.

    Heights are drawn i.i.d. in a window around the block just wide enough
    that the nearest relevant site on each side lies inside it except with
    probability below 1e-16; such a sample is recomputed on the full ring.
    """
    if not 0.0 < rho < 1.0:
        raise EstimationError("rho must lie strictly between 0 and 1")
    if which not in _WHICH_CODE:
        raise ValueError(f"unknown generator part {which!r}")
    N = topology.n
    p = rho if which == LS else min(rho, 1.0 - rho)
    if which == LF:
        half = 1
    else:
        half = int(math.ceil(math.log(1e-16) / math.log1p(-p))) + 2
    width = 2 * half + n
    if width >= N:
        raise EstimationError(f"ring of {N} sites too small for rho={rho}; need more than {width}")
    b0 = half
    values = np.empty(samples)
    chunk = max(1, min(samples, 2_000_000 // width))
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        win = np.where(rng.random((m, width)) < rho, 1, 2).astype(np.int8)
        vals = _block_terms(win, b0, n, _WHICH_CODE[which])
        for s in np.flatnonzero(np.isnan(vals)):
            rest = np.where(rng.random(N - width) < rho, 1, 2).astype(np.int8)
            ring = make_config(Ring(N), np.concatenate([win[s], rest]))
            vals[s] = generator_block_on_ring(ring, n, which, offset=b0)
        values[done : done + m] = vals
        done += m
    return batch_means(values, n_batches)
