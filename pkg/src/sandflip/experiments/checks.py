"""Exact property checks behind ``sandflip check``; each returns ``(passed, detail)``."""

import numpy as np

from .. import _kernels as K
from .._bitset import layout
from ..lattice import (
    UnstableConfiguration,
    WrapUnsafeError,
    add,
    anti_add,
    make_config,
    pointwise_generator_height0,
    random_config,
    rene_closed_form,
    ring_add_by_unrolling,
    stabilize_by_toppling,
)
from ..models import Interval, ModelSpec, Ring
from ..observables import renewal_identity_residual
from ..oracle import (
    Distribution,
    enumerate_chain,
    series_semigroup,
    stationary_distribution,
    transient_distribution,
)


def operator_equivalence(n_configs=2000, max_n=64, seed=1):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_configs):
        top = Interval(int(rng.integers(3, max_n + 1)))
        cfg = random_config(top, rng, rng.uniform(0.05, 0.95))
        x = int(rng.integers(top.n))
        fwd = stabilize_by_toppling(UnstableConfiguration.from_config(cfg, x, 1), "forward")
        rev = stabilize_by_toppling(UnstableConfiguration.from_config(cfg, x, -1), "reverse")
        bad += fwd != add(cfg, x)
        bad += rev != anti_add(cfg, x)
    return bad == 0, f"{bad} mismatches over {n_configs} interval configurations"


def ring_unrolling(n_configs=500, seed=2):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_configs):
        cfg = random_config(Ring(int(rng.integers(3, 40))), rng, rng.uniform(0.1, 0.9))
        x = int(rng.integers(cfg.n))
        if np.any(cfg.heights == 1):
            bad += ring_add_by_unrolling(cfg, x, "forward") != add(cfg, x)
        if np.any(cfg.heights == 2):
            bad += ring_add_by_unrolling(cfg, x, "reverse") != anti_add(cfg, x)
    return bad == 0, f"{bad} mismatches over {n_configs} ring configurations"


def transition_table(topology, op):
    off, cnt = layout(topology.n)
    return K.chain_targets(topology.n, topology.is_ring, op, off, cnt, int(off[-1]))


def abelian(max_n=10):
    """``a_x a_y = a_y a_x`` exhaustively for both operators.

    Intervals commute everywhere.  Rings have no sink and commute only
    while at least 3 sites carry the height being sought: on ``1 2 2``
    adding at 0 then 1 gives ``2 2 2`` while the other order gives ``2 1 2``.
    """
    pairs = 0
    for n in range(3, max_n + 1):
        codes = np.arange(1 << n, dtype=np.uint64)
        ones = np.bitwise_count(codes).astype(np.int64)
        for top in (Interval(n), Ring(n)):
            for op in (K.ADD, K.ANTI_ADD):
                T = transition_table(top, op)
                low = ones if op == K.ADD else n - ones
                scope = np.ones(codes.size, bool) if not top.is_ring else low >= 3
                for x in range(n):
                    for y in range(x + 1, n):
                        diff = T[T[:, y], x] != T[T[:, x], y]
                        if np.any(diff & scope):
                            return False, f"fails on {top} op={op} x={x} y={y}"
                        pairs += 1
    return True, f"{pairs} site pairs commute (intervals: all states; rings: >= 3 sought sites), n <= {max_n}"


def generator_identity(n_configs=2000, alpha=0.7, seed=3):
    rng = np.random.default_rng(seed)
    spec = ModelSpec.sf(alpha)
    done = worst = 0
    while done < n_configs:
        cfg = random_config(Ring(int(rng.integers(8, 80))), rng, rng.uniform(0.2, 0.8))
        try:
            lhs = pointwise_generator_height0(cfg, spec)
        except WrapUnsafeError:
            continue
        worst = max(worst, abs(lhs - rene_closed_form(cfg, alpha)))
        done += 1
    return worst <= 1e-9, f"max deviation {worst:.3g} over {n_configs} wrap-safe ring configurations"


def renewal(n_configs=10000, seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        cfg = random_config(Ring(int(rng.integers(3, 200))), rng, rng.uniform(0.05, 0.95))
        if cfg.n_inactive == 0:
            continue
        worst = max(worst, abs(renewal_identity_residual(cfg)))
    return worst == 0.0, f"max residual {worst:.3g} over {n_configs} ring configurations"


def chain_sanity(n=8, alpha=0.5):
    chain = enumerate_chain(Ring(n), ModelSpec.sf(alpha))
    rows = float(np.abs(np.asarray(chain.Q.sum(axis=1))).max())
    pi = stationary_distribution(chain)
    resid = float(np.abs(chain.Q.T @ pi.weights).max())
    pt = transient_distribution(chain, Distribution.all_ones(n), 1.0)
    mass = abs(pt.weights.sum() - 1.0)
    ok = rows < 1e-12 and resid < 1e-10 and mass < 1e-10 and pt.weights.min() > -1e-12
    return ok, f"row sums {rows:.2g}, |pi Q| {resid:.2g}, transient mass error {mass:.2g}"


def series_vs_uniformization(t=0.02, n_max=6, alpha=0.5):
    top = Ring(10)
    cfg = make_config(top, [1, 2, 1, 2, 2, 1, 2, 1, 2, 1])
    spec = ModelSpec.sf(alpha)

    def f(h):
        return float(h[0] == 1)

    est, bound = series_semigroup(cfg, f, spec, t, n_max)
    chain = enumerate_chain(top, spec)
    exact = transient_distribution(chain, Distribution.dirac(cfg), t).prob_inactive([0])
    err = abs(est - exact)
    return err < 1e-8 and err <= bound, f"|series - exact| = {err:.3g}, reported bound {bound:.3g}"


SUITE = {
    "operator_equivalence": operator_equivalence,
    "ring_unrolling": ring_unrolling,
    "abelian": abelian,
    "generator_identity": generator_identity,
    "renewal_identity": renewal,
    "exact_chain": chain_sanity,
    "series_expansion": series_vs_uniformization,
}


def run_suite(names=None, out=print):
    ok = True
    for name in names or SUITE:
        try:
            passed, detail = SUITE[name]()
        except Exception as e:  # a crash is a failed check, reported not raised
            passed, detail = False, f"{type(e).__name__}: {e}"
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok


__all__ = ["SUITE", "run_suite", "transition_table"]
