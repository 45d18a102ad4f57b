"""
Parameter records shared by the expansion modules.

ModelParams describes either a finite periodic box (L with particle counts) or
the thermodynamic limit (densities only). ConvergenceParams holds the
constants a, b, c of the convergence conditions. Truncation collects every
cutoff and sampling budget a series evaluation depends on, so it can be
recorded next to the numbers it produced.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

from expansion.errors import InvalidArgument
from expansion.geometry import BoxMetric, SphereSpecies, ball_volume

A_INF_VARIANTS = ("printed", "restricted")
EXCLUDED_VOLUME_READINGS = ("2R", "2r")


@dataclass(frozen=True)
class ModelParams:
    d: int
    r: float
    R: float
    L: Optional[float] = None
    n_small: int = 0
    n_big: int = 0
    rho_small: float = 0.0
    rho_big: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgument(f"dimension must be >= 1, got {self.d}")
        SphereSpecies(self.r, self.R)
        if self.L is not None:
            if not self.L > 2 * self.R:
                raise InvalidArgument(f"box length {self.L} must exceed the big diameter {2 * self.R}")
            if self.n_small < 0 or self.n_big < 0:
                raise InvalidArgument("particle counts must be non-negative")
        if self.rho_small < 0 or self.rho_big < 0:
            raise InvalidArgument("densities must be non-negative")

    @classmethod
    def finite(cls, d: int, r: float, R: float, L: float, n_small: int, n_big: int) -> "ModelParams":
        return cls(d=d, r=r, R=R, L=L, n_small=n_small, n_big=n_big)

    @classmethod
    def limit(cls, d: int, r: float, R: float, rho_small: float, rho_big: float) -> "ModelParams":
        return cls(d=d, r=r, R=R, rho_small=rho_small, rho_big=rho_big)

    @property
    def is_finite(self) -> bool:
        return self.L is not None

    @property
    def species(self) -> SphereSpecies:
        return SphereSpecies(self.r, self.R)

    @property
    def metric(self) -> BoxMetric:
        if self.L is None:
            return BoxMetric.flat(self.d)
        return BoxMetric(d=self.d, L=self.L, periodic=True)

    @property
    def volume(self) -> float:
        return math.inf if self.L is None else self.L**self.d

    @property
    def small_density(self) -> float:
        """N_r/|Λ| in a box, ρ_r in the limit."""
        return self.n_small / self.volume if self.is_finite else self.rho_small

    @property
    def big_density(self) -> float:
        return self.n_big / self.volume if self.is_finite else self.rho_big

    def excluded_fraction(self, radius: float) -> float:
        """Fraction of the volume excluded by the bigs at the given radius: N_R|B_radius|/|Λ|."""
        return self.big_density * ball_volume(self.d, radius)

    def available_small_density(self, radius: float) -> float:
        """
        N_r/(|Λ| - N_R|B_radius|), or ρ_r/(1 - ρ_R|B_radius|) in the limit.

        Raises when the bigs exclude the whole box.
        """
        remaining = 1.0 - self.excluded_fraction(radius)
        if remaining <= 0:
            raise InvalidArgument(
                f"big spheres exclude the whole volume at radius {radius} (fraction {1 - remaining:.4g})"
            )
        return self.small_density / remaining

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ConvergenceParams:
    a: float = 0.5
    b: float = 0.5
    c: float = 0.5

    def __post_init__(self):
        if min(self.a, self.b, self.c) < 0:
            raise InvalidArgument(f"convergence constants must be non-negative, got {self}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Truncation:
    """
    Cutoffs for one series evaluation.

    ``order`` caps the small-sphere sums, ``l_max``/``k_max`` the white/black
    vertex counts inside the many-big factor, ``cloud_max`` the clouds per
    big-sphere graph and ``big_order`` the big-sphere order.
    """

    order: int = 3
    l_max: int = 2
    k_max: int = 1
    cloud_max: int = 2
    big_order: int = 2
    samples: int = 100_000
    inner_samples: int = 2_000
    shards: int = 4
    workers: int = 1
    a_inf_variant: str = "printed"
    excluded_volume_reading: str = "2R"

    def __post_init__(self):
        if self.order < 1:
            raise InvalidArgument(f"series order must be >= 1, got {self.order}")
        if self.l_max < 1 or self.k_max < 0 or self.cloud_max < 0:
            raise InvalidArgument("need l_max >= 1, k_max >= 0 and cloud_max >= 0")
        if self.big_order not in (1, 2):
            raise InvalidArgument(f"big-sphere order must be 1 or 2, got {self.big_order}")
        if self.a_inf_variant not in A_INF_VARIANTS:
            raise InvalidArgument(f"A_inf variant must be one of {A_INF_VARIANTS}, got {self.a_inf_variant!r}")
        if self.excluded_volume_reading not in EXCLUDED_VOLUME_READINGS:
            raise InvalidArgument(
                f"excluded-volume reading must be one of {EXCLUDED_VOLUME_READINGS}, "
                f"got {self.excluded_volume_reading!r}"
            )

    def caps(self) -> Dict[str, Any]:
        """The cutoffs that must agree across the terms of one report."""
        return {
            "order": self.order,
            "l_max": self.l_max,
            "k_max": self.k_max,
            "cloud_max": self.cloud_max,
            "big_order": self.big_order,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def excluded_volume(d: int, species: SphereSpecies, reading: str) -> float:
    """|B_2R| as printed in the polymer convergence condition, or |B_2r|."""
    if reading == "2R":
        return ball_volume(d, 2 * species.R)
    if reading == "2r":
        return ball_volume(d, 2 * species.r)
    raise InvalidArgument(f"excluded-volume reading must be one of {EXCLUDED_VOLUME_READINGS}, got {reading!r}")
