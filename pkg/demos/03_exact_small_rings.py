"""Exact analysis on small rings.

For N <= 12 the process is a finite Markov chain.  Its stationary law is
not a product measure, starting from all-ones stays stochastically below
starting from all-twos, and the generator power series reproduces the
semigroup for short times.

    python3 demos/03_exact_small_rings.py
"""

from sandflip import ModelSpec, Ring, make_config
from sandflip.observables import product_consistency_rho
from sandflip.oracle import (
    Distribution,
    enumerate_chain,
    series_semigroup,
    stationary_distribution,
    stochastic_domination_check,
    transient_distribution,
)

spec = ModelSpec.sf(0.4)
chain = enumerate_chain(Ring(12), spec)
pi = stationary_distribution(chain)
p0, p01 = pi.prob_inactive([0]), pi.prob_inactive([0, 1])
print(f"N=12, alpha=0.4: {chain.n_states} states")
print(f"  stationary density {pi.density_of_ones():.5f}")
print(f"  P(0,1 inactive) - P(0 inactive)^2 = {p01 - p0 * p0:.3e}  (zero for a product law)")
print(f"at alpha=0.5 a product law matching the block-2 and block-3 generators needs density "
      f"{product_consistency_rho(2, 0.5):.4f} and {product_consistency_rho(3, 0.5):.4f} respectively")

spec = ModelSpec.sf(0.5)
chain = enumerate_chain(Ring(8), spec)
for t in (0.1, 1.0, 10.0):
    lo = transient_distribution(chain, Distribution.all_ones(8), t)
    hi = transient_distribution(chain, Distribution.all_twos(8), t)
    print(f"N=8, t={t:<4g} all-ones start below all-twos start: {stochastic_domination_check(lo, hi)}")

top = Ring(10)
cfg = make_config(top, [1, 2, 1, 2, 2, 1, 2, 1, 2, 1])
chain = enumerate_chain(top, spec)
exact = transient_distribution(chain, Distribution.dirac(cfg), 0.02).prob_inactive([0])
for n_max in (1, 2, 4, 6):
    est, bound = series_semigroup(cfg, lambda h: float(h[0] == 1), spec, 0.02, n_max)
    print(f"series to order {n_max}: {est:.12f}  error {abs(est - exact):.2e}  bound {bound:.2e}")
