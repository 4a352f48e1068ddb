"""Hierarchical 64-ary bitset with O(log_64 n) predecessor/successor queries.

The set lives in one flat ``uint64`` array.  Level 0 holds one bit per
element; every higher level holds one bit per nonzero word of the level
below, so the top level is a single word.  All kernels are plain numba
functions on ``(bits, off, cnt)`` so the simulation loop can call them
without touching Python objects.
"""

import numpy as np
from numba import njit

_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
_ONE = np.uint64(1)


def layout(n):
    """Return ``(off, cnt)`` for a set over ``range(n)``.

    ``off[l]`` is the start of level ``l`` in the flat array (``off[-1]`` is
    the total length); ``cnt[l]`` is the number of valid bit positions on
    level ``l``.
    """
    if n < 1:
        raise ValueError("bitset universe must be nonempty")
    cnts = [n]
    while True:
        words = (cnts[-1] + 63) // 64
        if words == 1:
            break
        cnts.append(words)
    off = [0]
    for c in cnts:
        off.append(off[-1] + (c + 63) // 64)
    return np.asarray(off, dtype=np.int64), np.asarray(cnts, dtype=np.int64)


@njit(cache=True, inline="always")
def _lsb(x):
    n = 0
    if (x & np.uint64(0xFFFFFFFF)) == 0:
        n += 32
        x >>= np.uint64(32)
    if (x & np.uint64(0xFFFF)) == 0:
        n += 16
        x >>= np.uint64(16)
    if (x & np.uint64(0xFF)) == 0:
        n += 8
        x >>= np.uint64(8)
    if (x & np.uint64(0xF)) == 0:
        n += 4
        x >>= np.uint64(4)
    if (x & np.uint64(0x3)) == 0:
        n += 2
        x >>= np.uint64(2)
    if (x & np.uint64(0x1)) == 0:
        n += 1
    return n


@njit(cache=True, inline="always")
def _msb(x):
    n = 0
    if x >= np.uint64(0x100000000):
        n += 32
        x >>= np.uint64(32)
    if x >= np.uint64(0x10000):
        n += 16
        x >>= np.uint64(16)
    if x >= np.uint64(0x100):
        n += 8
        x >>= np.uint64(8)
    if x >= np.uint64(0x10):
        n += 4
        x >>= np.uint64(4)
    if x >= np.uint64(0x4):
        n += 2
        x >>= np.uint64(2)
    if x >= np.uint64(0x2):
        n += 1
    return n


@njit(cache=True)
def bs_contains(bits, i):
    return (bits[i >> 6] >> np.uint64(i & 63)) & _ONE != 0


@njit(cache=True)
def bs_add(bits, off, cnt, i):
    idx = i
    for lev in range(cnt.shape[0]):
        p = off[lev] + (idx >> 6)
        was = bits[p]
        bits[p] = was | (_ONE << np.uint64(idx & 63))
        if was != 0:
            break
        idx >>= 6


@njit(cache=True)
def bs_discard(bits, off, cnt, i):
    idx = i
    for lev in range(cnt.shape[0]):
        p = off[lev] + (idx >> 6)
        bits[p] &= ~(_ONE << np.uint64(idx & 63))
        if bits[p] != 0:
            break
        idx >>= 6


@njit(cache=True)
def bs_succ(bits, off, cnt, i):
    """Smallest member >= i, or -1."""
    if i < 0:
        i = 0
    if i >= cnt[0]:
        return -1
    nlev = cnt.shape[0]
    lev = 0
    idx = i
    while True:
        w = idx >> 6
        word = bits[off[lev] + w] & (_ALL << np.uint64(idx & 63))
        if word != 0:
            idx = (w << 6) + _lsb(word)
            break
        lev += 1
        if lev == nlev:
            return -1
        idx = w + 1
        if idx >= cnt[lev]:
            return -1
    while lev > 0:
        lev -= 1
        idx = (idx << 6) + _lsb(bits[off[lev] + idx])
    return idx


@njit(cache=True)
def bs_pred(bits, off, cnt, i):
    """Largest member <= i, or -1."""
    if i < 0:
        return -1
    if i >= cnt[0]:
        i = cnt[0] - 1
    nlev = cnt.shape[0]
    lev = 0
    idx = i
    while True:
        w = idx >> 6
        word = bits[off[lev] + w] & (_ALL >> np.uint64(63 - (idx & 63)))
        if word != 0:
            idx = (w << 6) + _msb(word)
            break
        lev += 1
        if lev == nlev:
            return -1
        idx = w - 1
        if idx < 0:
            return -1
    while lev > 0:
        lev -= 1
        idx = (idx << 6) + _msb(bits[off[lev] + idx])
    return idx


@njit(cache=True)
def bs_fill(bits, off, cnt, mask):
    bits[:] = 0
    for i in range(mask.shape[0]):
        if mask[i]:
            bs_add(bits, off, cnt, i)


class OrderedBitSet:
    """Ordered set of integers in ``range(n)`` backed by the kernels above."""

    __slots__ = ("n", "bits", "off", "cnt")

    def __init__(self, n, members=()):
        self.n = int(n)
        self.off, self.cnt = layout(self.n)
        self.bits = np.zeros(self.off[-1], dtype=np.uint64)
        mask = np.zeros(self.n, dtype=np.bool_)
        members = np.asarray(members, dtype=np.int64)
        if members.size:
            if members.min() < 0 or members.max() >= self.n:
                raise IndexError("member outside universe")
            mask[members] = True
            bs_fill(self.bits, self.off, self.cnt, mask)

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=np.bool_)
        out = cls(mask.shape[0])
        bs_fill(out.bits, out.off, out.cnt, mask)
        return out

    def copy(self):
        out = object.__new__(OrderedBitSet)
        out.n = self.n
        out.off = self.off
        out.cnt = self.cnt
        out.bits = self.bits.copy()
        return out

    def add(self, i):
        bs_add(self.bits, self.off, self.cnt, i)

    def discard(self, i):
        bs_discard(self.bits, self.off, self.cnt, i)

    def successor(self, i):
        """Smallest member >= i, or None."""
        r = bs_succ(self.bits, self.off, self.cnt, i)
        return None if r < 0 else int(r)

    def predecessor(self, i):
        """Largest member <= i, or None."""
        r = bs_pred(self.bits, self.off, self.cnt, i)
        return None if r < 0 else int(r)

    def to_array(self):
        words = self.bits[: self.off[1]]
        as_bytes = words.view(np.uint8)
        flags = np.unpackbits(as_bytes, bitorder="little")[: self.n]
        return np.flatnonzero(flags)

    def __contains__(self, i):
        return 0 <= i < self.n and bool(bs_contains(self.bits, i))

    def __iter__(self):
        return iter(self.to_array().tolist())

    def __len__(self):
        return int(np.bitwise_count(self.bits[: self.off[1]]).sum())

    def __eq__(self, other):
        if not isinstance(other, OrderedBitSet):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"OrderedBitSet(n={self.n}, members={self.to_array().tolist()})"
