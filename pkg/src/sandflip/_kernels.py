"""numba kernels shared by the lattice operators, the simulator and the exact chain.

Heights are ``int8`` arrays with values 1 (inactive) and 2 (active).  A
configuration in kernel form is ``(h, ones, twos, off, cnt)``: the heights
plus two hierarchical bitsets holding the inactive and the active sites.
"""

import numpy as np
from numba import njit

from ._bitset import bs_add, bs_discard, bs_fill, bs_pred, bs_succ

# event codes
ADD = 0
ANTI_ADD = 1
FLIP = 2
FLIP_REJECTED = 3

# advance() return codes
REACHED = 0
NEED_RANDOM = 1
STOPPED = 2
MAX_EVENTS = 3

# stop conditions
STOP_NONE = 0
STOP_ONES_BELOW = 1
STOP_ONES_ABOVE = 2
STOP_WINDOW_EMPTY = 3


@njit(cache=True)
def nearest_right(bits, off, cnt, ring, x):
    """Nearest member strictly right of ``x``.

    Ring: wraps, -1 when the set is empty (may return ``x`` itself only if
    ``x`` is a member).  Interval: ``n`` (the virtual site) when none.
    """
    n = cnt[0]
    r = bs_succ(bits, off, cnt, x + 1)
    if r >= 0:
        return r
    if ring:
        return bs_succ(bits, off, cnt, 0)
    return n


@njit(cache=True)
def nearest_left(bits, off, cnt, ring, x):
    n = cnt[0]
    r = bs_pred(bits, off, cnt, x - 1)
    if r >= 0:
        return r
    if ring:
        return bs_pred(bits, off, cnt, n - 1)
    return -1


@njit(cache=True)
def _set_height(h, ones, twos, off, cnt, y, v):
    h[y] = v
    if v == 1:
        bs_add(ones, off, cnt, y)
        bs_discard(twos, off, cnt, y)
    else:
        bs_add(twos, off, cnt, y)
        bs_discard(ones, off, cnt, y)


@njit(cache=True)
def avalanche(h, ones, twos, off, cnt, ring, x, low):
    """Closed-form addition (``low == 1``) or anti-addition (``low == 2``) at ``x``.

    Returns the change in the number of sites carrying ``low``.
    """
    n = h.shape[0]
    high = 3 - low
    if low == 1:
        lowbits = ones
    else:
        lowbits = twos
    if h[x] == low:
        _set_height(h, ones, twos, off, cnt, x, high)
        return -1
    r = nearest_right(lowbits, off, cnt, ring, x)
    if ring and r < 0:
        return 0
    l = nearest_left(lowbits, off, cnt, ring, x)
    if ring:
        xp = r if r > x else r + n
        xm = l if l < x else l - n
    else:
        xp = r
        xm = l
    mirror = xp + xm - x
    delta = 0
    for y in (xm, xp):
        if ring:
            y = y % n
        elif y < 0 or y >= n:
            continue
        if h[y] == low:
            _set_height(h, ones, twos, off, cnt, y, high)
            delta -= 1
    if ring:
        mirror = mirror % n
    if 0 <= mirror < n:
        _set_height(h, ones, twos, off, cnt, mirror, low)
        delta += 1
    return delta


@njit(cache=True)
def flip_site(h, ones, twos, off, cnt, x):
    """Toggle site ``x``; returns the change in the number of inactive sites."""
    if h[x] == 1:
        _set_height(h, ones, twos, off, cnt, x, 2)
        return -1
    _set_height(h, ones, twos, off, cnt, x, 1)
    return 1


@njit(cache=True)
def flip_rate(h, x, ring, family, param):
    if family == 0:
        return 1.0
    fx = 1.0 if h[x] == 2 else -1.0
    if family == 2:
        return 1.0 - param * fx
    n = h.shape[0]
    if x > 0:
        fl = 1.0 if h[x - 1] == 2 else -1.0
    elif ring:
        fl = 1.0 if h[n - 1] == 2 else -1.0
    else:
        fl = -1.0
    if x < n - 1:
        fr = 1.0 if h[x + 1] == 2 else -1.0
    elif ring:
        fr = 1.0 if h[0] == 2 else -1.0
    else:
        fr = -1.0
    return 1.0 - param * fx * (fl + fr)


@njit(cache=True)
def fill_sets(h, ones, twos, off, cnt):
    bs_fill(ones, off, cnt, h == 1)
    bs_fill(twos, off, cnt, h == 2)


@njit(cache=True)
def window_has_member(bits, off, cnt, a, b):
    r = bs_succ(bits, off, cnt, a)
    return r >= 0 and r <= b


@njit(cache=True)
def advance(h, ones, twos, off, cnt, ring, params, tst, ist, counters, rnd,
            t_stop, stop_kind, stop_a, stop_b, max_events):
    """Run the Poisson-clock dynamics until ``t_stop`` or another exit.

    ``tst = [t, t_next]``; ``ist = [pending, pos, n_ones, last_kind, last_site]``.
    Each event consumes one row of ``rnd`` (three uniforms: waiting time,
    site, kind/acceptance), so the trajectory does not depend on how the
    uniforms are batched or on where the caller stops to sample.
    """
    n = h.shape[0]
    model = params[0]
    alpha = params[1]
    beta = params[2]
    family = int(params[3])
    fparam = params[4]
    env = params[5]
    if model == 0.0:
        per_site = alpha + env
        p_add = alpha / per_site if per_site > 0 else 0.0
    else:
        per_site = alpha + beta
        p_add = alpha / per_site if per_site > 0 else 0.0
    total = n * per_site
    nrnd = rnd.shape[0]
    done = 0
    while True:
        if ist[0] == 0:
            if total <= 0.0:
                tst[0] = t_stop
                return REACHED
            if ist[1] >= nrnd:
                return NEED_RANDOM
            tst[1] = tst[0] - np.log1p(-rnd[ist[1], 0]) / total
            ist[0] = 1
        if tst[1] > t_stop:
            tst[0] = t_stop
            return REACHED
        row = ist[1]
        x = int(rnd[row, 1] * n)
        if x >= n:
            x = n - 1
        u = rnd[row, 2]
        ist[1] = row + 1
        ist[0] = 0
        tst[0] = tst[1]
        if u < p_add:
            ist[2] += avalanche(h, ones, twos, off, cnt, ring, x, 1)
            kind = ADD
        elif model == 0.0:
            v = (u - p_add) / (1.0 - p_add)
            if v * env < flip_rate(h, x, ring, family, fparam):
                ist[2] += flip_site(h, ones, twos, off, cnt, x)
                kind = FLIP
            else:
                kind = FLIP_REJECTED
        else:
            ist[2] -= avalanche(h, ones, twos, off, cnt, ring, x, 2)
            kind = ANTI_ADD
        counters[kind] += 1
        ist[3] = kind
        ist[4] = x
        done += 1
        if stop_kind == STOP_ONES_BELOW:
            if ist[2] < stop_a:
                return STOPPED
        elif stop_kind == STOP_ONES_ABOVE:
            if ist[2] > stop_a:
                return STOPPED
        elif stop_kind == STOP_WINDOW_EMPTY:
            if not window_has_member(ones, off, cnt, stop_a, stop_b):
                return STOPPED
        if max_events > 0 and done >= max_events:
            return MAX_EVENTS


@njit(cache=True)
def decode_state(code, h):
    for x in range(h.shape[0]):
        h[x] = 1 if (code >> x) & 1 else 2


@njit(cache=True)
def encode_state(h):
    code = 0
    for x in range(h.shape[0]):
        if h[x] == 1:
            code |= 1 << x
    return code


@njit(cache=True)
def chain_targets(n, ring, op, off, cnt, nwords):
    """Target state code of ``op`` (ADD, ANTI_ADD, FLIP) at every site from every state."""
    nstates = 1 << n
    out = np.empty((nstates, n), dtype=np.int64)
    h = np.empty(n, dtype=np.int8)
    ones = np.zeros(nwords, dtype=np.uint64)
    twos = np.zeros(nwords, dtype=np.uint64)
    for s in range(nstates):
        for x in range(n):
            decode_state(s, h)
            fill_sets(h, ones, twos, off, cnt)
            if op == ADD:
                avalanche(h, ones, twos, off, cnt, ring, x, 1)
            elif op == ANTI_ADD:
                avalanche(h, ones, twos, off, cnt, ring, x, 2)
            else:
                flip_site(h, ones, twos, off, cnt, x)
            out[s, x] = encode_state(h)
    return out


@njit(cache=True)
def chain_flip_rates(n, ring, family, param):
    nstates = 1 << n
    out = np.empty((nstates, n), dtype=np.float64)
    h = np.empty(n, dtype=np.int8)
    for s in range(nstates):
        decode_state(s, h)
        for x in range(n):
            out[s, x] = flip_rate(h, x, ring, family, param)
    return out


@njit(cache=True)
def generator_height_sum(h0, ring, params, site, off, cnt, nwords):
    """Explicit sum over all sites of rate * (height change at ``site``)."""
    n = h0.shape[0]
    h = np.empty(n, dtype=np.int8)
    ones = np.zeros(nwords, dtype=np.uint64)
    twos = np.zeros(nwords, dtype=np.uint64)
    alpha = params[1]
    beta = params[2]
    total = 0.0
    for x in range(n):
        h[:] = h0
        fill_sets(h, ones, twos, off, cnt)
        avalanche(h, ones, twos, off, cnt, ring, x, 1)
        total += alpha * (h[site] - h0[site])
        h[:] = h0
        fill_sets(h, ones, twos, off, cnt)
        if params[0] == 0.0:
            c = flip_rate(h0, x, ring, int(params[3]), params[4])
            flip_site(h, ones, twos, off, cnt, x)
            total += c * (h[site] - h0[site])
        else:
            avalanche(h, ones, twos, off, cnt, ring, x, 2)
            total += beta * (h[site] - h0[site])
    return total
