"""Avalanches without toppling.

Adding a grain at x on a {1,2} configuration starts an avalanche that
ends with a single site changed: the inactive site mirrored about x
between the nearest inactive neighbours.  This script compares that
closed form with explicit toppling, and shows where rings stop being
abelian.

    python3 demos/01_avalanches.py
"""

import numpy as np

from sandflip import (
    Interval,
    Ring,
    UnstableConfiguration,
    add,
    anti_add,
    make_config,
    random_config,
    stabilize_by_toppling,
)


def show(label, cfg):
    print(f"{label:<28}{''.join(map(str, cfg.heights))}")


top = Interval(12)
cfg = make_config(top, [2, 1, 2, 2, 2, 1, 2, 2, 1, 2, 2, 2])
show("start", cfg)
for x in (3, 6, 10):
    show(f"add at {x} (closed form)", add(cfg, x))
    show(f"add at {x} (toppling)", stabilize_by_toppling(UnstableConfiguration.from_config(cfg, x, 1), "forward"))
show("anti-add at 5", anti_add(cfg, 5))

# the two constructions agree on random intervals
rng = np.random.default_rng(0)
mismatches = 0
for _ in range(2000):
    c = random_config(Interval(int(rng.integers(3, 50))), rng, 0.4)
    x = int(rng.integers(c.n))
    mismatches += add(c, x) != stabilize_by_toppling(UnstableConfiguration.from_config(c, x, 1), "forward")
print(f"\nclosed form vs toppling on 2000 random intervals: {mismatches} mismatches")

# on a ring with a single inactive site the order of additions matters
ring = make_config(Ring(3), [1, 2, 2])
print()
show("ring start", ring)
show("add 0 then 1", add(add(ring, 0), 1))
show("add 1 then 0", add(add(ring, 1), 0))
