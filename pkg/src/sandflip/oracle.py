"""Exact analysis on small lattices: rate matrices, transients, stationary laws, domination.

States are encoded as integers whose bit ``x`` is set when site ``x`` is
inactive (height 1).
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
import math

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.special import gammainc
from scipy.stats import poisson

from . import _kernels as K
from ._bitset import layout
from .lattice import Configuration, LatticeError, add, anti_add, decency_statistic, flip, global_flip, make_config
from .models import SF, Topology  # noqa: F401

MAX_EXACT_SITES = 12
MAX_FLOW_SITES = 8
POISSON_TAIL = 1e-12


class OracleError(ValueError):
    pass


class ReducibleChainError(OracleError):
    pass


def state_heights(n):
    """``(2**n, n)`` int8 matrix of heights for every state code."""
    codes = np.arange(1 << n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return np.where(bits == 1, 1, 2).astype(np.int8)


def encode(cfg):
    return int(np.sum((cfg.heights == 1).astype(np.int64) << np.arange(cfg.n, dtype=np.int64)))


def decode(code, topology):
    h = np.array([1 if (code >> x) & 1 else 2 for x in range(topology.n)], dtype=np.int8)
    return make_config(topology, h)


@dataclass
class Distribution:
    """Probability weights over the ``2**n`` states of an ``n``-site lattice."""

    weights: np.ndarray
    n: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (1 << self.n,):
            raise OracleError(f"expected {1 << self.n} weights, got {w.shape}")
        self.weights = w

    def check(self, tol=1e-12):
        if self.weights.min() < -tol or abs(self.weights.sum() - 1.0) > tol:
            raise OracleError("weights are not a probability vector")
        return self

    @classmethod
    def dirac(cls, cfg_or_code, n=None):
        if isinstance(cfg_or_code, Configuration):
            n, code = cfg_or_code.n, encode(cfg_or_code)
        else:
            code = int(cfg_or_code)
        w = np.zeros(1 << n)
        w[code] = 1.0
        return cls(w, n)

    @classmethod
    def all_ones(cls, n):
        return cls.dirac((1 << n) - 1, n)

    @classmethod
    def all_twos(cls, n):
        return cls.dirac(0, n)

    @classmethod
    def uniform(cls, n):
        return cls(np.full(1 << n, 1.0 / (1 << n)), n)

    @classmethod
    def product(cls, n, rho):
        ones = np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(float)
        return cls(rho**ones * (1.0 - rho) ** (n - ones), n)

    def prob_inactive(self, sites):
        """Probability that every site in ``sites`` is inactive."""
        mask = 0
        for x in np.atleast_1d(sites):
            mask |= 1 << int(x)
        codes = np.arange(1 << self.n, dtype=np.int64)
        return float(self.weights[(codes & mask) == mask].sum())

    def density_of_ones(self):
        ones = np.bitwise_count(np.arange(1 << self.n, dtype=np.uint64)).astype(float)
        return float(self.weights @ ones) / self.n


@dataclass
class ExactChain:
    topology: Topology
    spec: object
    Q: sparse.csr_matrix
    Lambda: float

    @property
    def n(self):
        return self.topology.n

    @property
    def n_states(self):
        return self.Q.shape[0]


def _targets(topology, op):
    off, cnt = layout(topology.n)
    return K.chain_targets(topology.n, topology.is_ring, op, off, cnt, int(off[-1]))


def enumerate_chain(topology, spec):
    """Rate matrix of the process on all ``2**n`` configurations."""
    n = topology.n
    if n > MAX_EXACT_SITES:
        raise OracleError(f"exact chains are limited to {MAX_EXACT_SITES} sites, got {n}")
    nstates = 1 << n
    src = np.repeat(np.arange(nstates), n)
    rows, cols, vals = [], [], []

    def push(targets, rates):
        dst = targets.ravel()
        r = np.broadcast_to(rates, targets.shape).ravel()
        keep = (dst != src) & (r > 0)
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(r[keep])

    push(_targets(topology, K.ADD), spec.alpha)
    if spec.variant == SF:
        rates = K.chain_flip_rates(n, topology.is_ring, spec.flip.code, spec.flip.param)
        push(_targets(topology, K.FLIP), rates)
    else:
        push(_targets(topology, K.ANTI_ADD), spec.beta)
    off = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nstates, nstates)
    )
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sparse.diags(exit_rates)).tocsr()
    Lam = float(exit_rates.max()) if exit_rates.max() > 0 else 1.0
    return ExactChain(topology, spec, Q, Lam)


def transient_distribution(chain, init, t):
    """``init @ expm(t Q)`` by uniformization; Poisson tail cut below 1e-12."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(init.weights, dtype=float).copy()
    if t == 0:
        return Distribution(v, chain.n)
    lam_t = chain.Lambda * t
    P = (sparse.identity(chain.n_states, format="csr") + chain.Q / chain.Lambda).tocsr()
    PT = P.T.tocsr()
    k_max = int(poisson.isf(POISSON_TAIL, lam_t)) + 1
    w = poisson.pmf(np.arange(k_max + 1), lam_t)
    out = w[0] * v
    for k in range(1, k_max + 1):
        v = PT @ v
        out += w[k] * v
    return Distribution(out, chain.n)


def stationary_distribution(chain, tol=1e-10):
    """Solve ``pi Q = 0``, ``sum(pi) = 1`` by sparse LU; raises for reducible chains."""
    ncomp, _ = connected_components(chain.Q, directed=True, connection="strong")
    if ncomp != 1:
        raise ReducibleChainError(f"chain has {ncomp} communicating classes")
    A = chain.Q.T.tolil()
    A[-1, :] = 1.0
    b = np.zeros(chain.n_states)
    b[-1] = 1.0
    pi = spsolve(A.tocsc(), b)
    resid = np.abs(chain.Q.T @ pi).max()
    if resid >= tol:
        raise OracleError(f"stationary residual {resid:.3g} exceeds {tol}")
    return Distribution(pi, chain.n)


def expectation(dist, observable):
    """``sum_eta dist(eta) f(eta)`` with ``f`` taking a heights array."""
    h = state_heights(dist.n)
    vals = np.array([observable(row) for row in h], dtype=float)
    return float(dist.weights @ vals)


# -- stochastic domination -------------------------------------------------


def _upper_codes(code, n):
    """Codes of every configuration with heights >= the given one (subsets of its inactive set)."""
    sub = code
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & code


def stochastic_domination_check(lower, upper, tol=1e-9):
    """Exact Strassen test: is ``lower`` stochastically dominated by ``upper`` in height order?

    Decided by max-flow on the bipartite order relation; limited to 8 sites.
    """
    n = lower.n
    if upper.n != n:
        raise OracleError("distributions live on different lattices")
    if n > MAX_FLOW_SITES:
        raise OracleError(f"exact domination check is limited to {MAX_FLOW_SITES} sites")
    if domination_prefilter(lower, upper, tol) == "refuted":
        return False
    lw, uw = lower.weights, upper.weights
    G = nx.DiGraph()
    up_nodes = set(np.flatnonzero(uw > 0).tolist())
    for a in np.flatnonzero(lw > 0).tolist():
        G.add_edge("s", ("L", a), capacity=float(lw[a]))
        for b in _upper_codes(a, n):
            if b in up_nodes:
                G.add_edge(("L", a), ("U", b))
    for b in up_nodes:
        G.add_edge(("U", b), "t", capacity=float(uw[b]))
    if "t" not in G or "s" not in G:
        return False
    flow = nx.maximum_flow_value(G, "s", "t")
    return flow >= lw[lw > 0].sum() - tol


@lru_cache(maxsize=None)
def _monotone_upsets(k):
    """Every nonempty proper up-set of {0,1}^k as a boolean mask over the 2**k patterns."""
    m = 1 << k
    f = np.arange(1, (1 << m) - 1, dtype=np.int64)
    ok = np.ones(f.shape, dtype=bool)
    for p in range(m):
        for j in range(k):
            q = p | (1 << j)
            if q != p:
                ok &= ((f >> p) & 1 == 0) | ((f >> q) & 1 == 1)
    f = f[ok]
    return ((f[:, None] >> np.arange(m)) & 1).astype(bool)


def _marginal(dist, sites):
    """Marginal over the active/inactive pattern on ``sites``; pattern bit j = site j active."""
    codes = np.arange(1 << dist.n, dtype=np.int64)
    pat = np.zeros_like(codes)
    for j, x in enumerate(sites):
        pat |= (((codes >> x) & 1) ^ 1) << j
    return np.bincount(pat, weights=dist.weights, minlength=1 << len(sites))


def domination_prefilter(lower, upper, tol=1e-9):
    """Necessary condition on every increasing cylinder event over at most 4 sites.

    Returns "refuted" or "not refuted"; the latter is not a proof of domination.
    """
    n = lower.n
    if n > MAX_EXACT_SITES:
        raise OracleError(f"prefilter is limited to {MAX_EXACT_SITES} sites")
    k = min(4, n)
    ups = _monotone_upsets(k)
    for sites in combinations(range(n), k):
        pl = ups @ _marginal(lower, sites)
        pu = ups @ _marginal(upper, sites)
        if np.any(pl > pu + tol):
            return "refuted"
    return "not refuted"


# -- series expansion ------------------------------------------------------


def _pointwise_transitions(cfg, spec):
    out = []
    for x in range(cfg.n):
        if spec.alpha > 0:
            out.append((spec.alpha, add(cfg, x)))
        if spec.variant == SF:
            out.append((spec.flip.rate(cfg, x), flip(cfg, x)))
        elif spec.beta > 0:
            out.append((spec.beta, anti_add(cfg, x)))
    return out


def series_window(cfg, spec):
    """Largest ``t`` for which the truncated series is trusted at ``cfg``."""
    try:
        a = decency_statistic(cfg)
        if spec.variant != SF:
            a = max(a, decency_statistic(global_flip(cfg)))
    except LatticeError as e:
        raise OracleError(f"no trusted series window: {e}") from None
    return 1.0 / (4.0 * spec.per_site_rate * math.e * a)


def series_semigroup(cfg, observable, spec, t, n_max, f_sup=None):
    """Truncated Taylor sum of ``S(t) f(cfg)`` and a bound on the dropped tail.

    ``L^k f`` is evaluated pointwise by recursion over the configurations
    reachable in ``k`` steps.  The bound uses ``||L|| <= 2 n r`` with ``r``
    the per-site clock rate, so the tail is at most
    ``||f|| (exp(x) - sum_{k<=n_max} x^k / k!)`` with ``x = 2 n r t``.
    """
    if not 0 <= n_max <= 8:
        raise ValueError("n_max must lie in 0..8")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t > 0 and t >= series_window(cfg, spec):
        raise OracleError(f"t={t} is outside the trusted window {series_window(cfg, spec):.4g}")
    if f_sup is None:
        if cfg.n > 16:
            raise OracleError("pass f_sup for lattices above 16 sites")
        f_sup = float(np.abs([observable(row) for row in state_heights(cfg.n)]).max())
    trans_cache = {}
    value_cache = {}

    def key(c):
        return c.heights.tobytes()

    def transitions(c):
        k = key(c)
        if k not in trans_cache:
            trans_cache[k] = _pointwise_transitions(c, spec)
        return trans_cache[k]

    def Lk(c, k):
        memo = (k, key(c))
        if memo in value_cache:
            return value_cache[memo]
        if k == 0:
            v = float(observable(c.heights))
        else:
            here = Lk(c, k - 1)
            v = sum(r * (Lk(d, k - 1) - here) for r, d in transitions(c))
        value_cache[memo] = v
        return v

    estimate = sum(t**k * Lk(cfg, k) / math.factorial(k) for k in range(n_max + 1))
    if t == 0:
        return estimate, 0.0
    x = 2.0 * cfg.n * spec.per_site_rate * t
    bound = f_sup * math.exp(x) * gammainc(n_max + 1, x)
    return float(estimate), float(bound)
