"""Density of inactive sites in the sandpile + spin-flip process.

The density relaxes exponentially to (1 - alpha)/2 for alpha < 1 and the
system freezes in finite time for alpha > 1.  With Glauber flip rates
the transition moves to alpha_c = 1 - 2 gamma.

    python3 demos/02_density_relaxation.py
"""

import numpy as np

from sandflip import InitialDistribution, ModelSpec, Ring, SimState, run_until
from sandflip.dynamics import density_of_ones_state, replica_rng
from sandflip.models import FlipRateSpec
from sandflip.observables import TheoryContext, freeze_time

N = 20_000
TIMES = np.array([0.25, 0.5, 1.0, 2.0, 4.0])


def density_curve(spec, rho0, seed, replicas=4):
    curves = []
    for r in range(replicas):
        state = SimState.from_distribution(InitialDistribution.product(rho0), Ring(N), replica_rng(seed, r))
        (vals,) = run_until(state, spec, TIMES[-1], hooks=[(TIMES, density_of_ones_state)])
        curves.append(vals)
    return np.mean(curves, axis=0)


print(f"ring of {N} sites, product start with density 0.5\n")
for label, spec in [
    ("pure flips, alpha=0.5", ModelSpec.sf(0.5)),
    ("pure flips, alpha=2", ModelSpec.sf(2.0)),
    ("Glauber gamma=0.25, alpha=0.25", ModelSpec.sf(0.25, FlipRateSpec.glauber(0.25))),
    ("Glauber gamma=0.25, alpha=0.6", ModelSpec.sf(0.6, FlipRateSpec.glauber(0.25))),
]:
    th = TheoryContext(spec)
    sim = density_curve(spec, 0.5, seed=7)
    print(label)
    for t, s in zip(TIMES, sim):
        print(f"  t={t:<5g} simulated {s:.4f}   ODE {th.rho(t, 0.5):.4f}")
    print(f"  stationary prediction {th.rho_stationary:.4f}\n")

print(f"freezing time from density 0.5 at alpha=2: {freeze_time(0.5, 2.0):.4f}")
