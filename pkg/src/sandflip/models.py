"""Topologies, flip-rate families and model specifications."""

from dataclasses import dataclass, field

import numpy as np

RING = "ring"
INTERVAL = "interval"


@dataclass(frozen=True)
class Topology:
    """A finite one-dimensional lattice.

    ``ring`` is periodic.  ``interval`` has virtual inactive sites at
    positions ``-1`` and ``n`` which are never stored and only consulted by
    the addition rule (they absorb grains, or act as a source for reversed
    topplings).
    """

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in (RING, INTERVAL):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"topology needs at least 3 sites, got {self.n}")

    @property
    def is_ring(self):
        return self.kind == RING

    def check_site(self, x):
        if not (0 <= x < self.n):
            raise IndexError(f"site {x} outside {self}")
        return int(x)

    def __str__(self):
        return f"{self.kind.capitalize()}{{{self.n}}}"


def Ring(n):
    return Topology(RING, n)


def Interval(n):
    return Topology(INTERVAL, n)


PURE = "pure"
GLAUBER = "glauber"
BIASED = "biased"
_FAMILY_CODE = {PURE: 0, GLAUBER: 1, BIASED: 2}


@dataclass(frozen=True)
class FlipRateSpec:
    """Flip rates ``c(x, eta)``.

    * pure: ``c = 1``
    * glauber: ``c = 1 - gamma f_x (f_{x-1} + f_{x+1})`` with
      ``f_x = 1 - 2 [eta(x) = 1]``; ``gamma = tanh(2 beta) / 2`` for an
      Ising coupling ``beta``
    * biased: ``c = 1 - kappa f_x``
    """

    family: str = PURE
    gamma: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILY_CODE:
            raise ValueError(f"unknown flip family {self.family!r}")
        if self.family == GLAUBER and not -0.5 <= self.gamma <= 0.5:
            raise ValueError("glauber gamma must lie in [-1/2, 1/2]")
        if self.family == BIASED and not -1.0 < self.kappa < 1.0:
            raise ValueError("biased kappa must lie in (-1, 1)")

    @classmethod
    def pure(cls):
        return cls(PURE)

    @classmethod
    def glauber(cls, gamma):
        return cls(GLAUBER, gamma=float(gamma))

    @classmethod
    def biased(cls, kappa):
        return cls(BIASED, kappa=float(kappa))

    @property
    def code(self):
        return _FAMILY_CODE[self.family]

    @property
    def param(self):
        return {PURE: 0.0, GLAUBER: self.gamma, BIASED: self.kappa}[self.family]

    @property
    def m(self):
        """Lower bound on the flip rate."""
        if self.family == GLAUBER:
            return 1.0 - 2.0 * abs(self.gamma)
        if self.family == BIASED:
            return 1.0 - abs(self.kappa)
        return 1.0

    @property
    def M(self):
        """Upper bound on the flip rate; also the thinning envelope."""
        if self.family == GLAUBER:
            return 1.0 + 2.0 * abs(self.gamma)
        if self.family == BIASED:
            return 1.0 + abs(self.kappa)
        return 1.0

    def rate(self, cfg, x):
        from ._kernels import flip_rate

        return float(flip_rate(cfg.heights, x, cfg.topology.is_ring, self.code, self.param))


SF = "sf"
SA = "sa"


@dataclass(frozen=True)
class ModelSpec:
    """Rates of an SF (additions + flips) or SA (additions + anti-additions) process."""

    variant: str
    alpha: float
    beta: float = 0.0
    flip: FlipRateSpec = field(default_factory=FlipRateSpec)

    def __post_init__(self):
        if self.variant not in (SF, SA):
            raise ValueError(f"unknown model variant {self.variant!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.variant == SF and self.beta != 0:
            raise ValueError("beta is only meaningful for the SA process")
        if self.variant == SA and self.flip != FlipRateSpec():
            raise ValueError("the SA process has no flip part")

    @classmethod
    def sf(cls, alpha, flip=None):
        return cls(SF, float(alpha), 0.0, flip or FlipRateSpec())

    @classmethod
    def sa(cls, alpha, beta):
        return cls(SA, float(alpha), float(beta))

    @property
    def per_site_rate(self):
        """Total clock rate per site (with the thinning envelope for flips)."""
        if self.variant == SF:
            return self.alpha + self.flip.M
        return self.alpha + self.beta

    def kernel_params(self):
        return np.array(
            [
                0.0 if self.variant == SF else 1.0,
                self.alpha,
                self.beta,
                float(self.flip.code),
                self.flip.param,
                self.flip.M,
            ],
            dtype=np.float64,
        )
