"""Sandpile + spin-flip (SF) and sandpile + anti-sandpile (SA) processes in one dimension.

Heights live in {1, 2}: 1 is an inactive site, 2 an active one.  The
package offers the closed-form avalanche operators, a kinetic Monte Carlo
simulator, exact small-lattice Markov chains, estimators with theory
predictions, and an experiment runner with a command-line front end.
"""

__version__ = "0.1.0"

from .models import FlipRateSpec, Interval, ModelSpec, Ring, Topology
from .lattice import (
    Configuration,
    LatticeError,
    UnstableConfiguration,
    add,
    anti_add,
    constant_config,
    flip,
    global_flip,
    make_config,
    random_config,
    stabilize_by_toppling,
)
from .dynamics import InitialDistribution, SimState, run_until, step

__all__ = [
    "__version__",
    "FlipRateSpec",
    "Interval",
    "ModelSpec",
    "Ring",
    "Topology",
    "Configuration",
    "LatticeError",
    "UnstableConfiguration",
    "add",
    "anti_add",
    "constant_config",
    "flip",
    "global_flip",
    "make_config",
    "random_config",
    "stabilize_by_toppling",
    "InitialDistribution",
    "SimState",
    "run_until",
    "step",
]
