"""
Hard-core geometry: ball and shell volumes, the periodic box metric, Mayer
functions and the available volume of the small spheres.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
from scipy.special import gamma

from expansion.errors import InadmissibleConfiguration, InvalidArgument
from expansion.estimates import CoefficientEstimate, sample_mean

logger = logging.getLogger(__name__)

PAIR_KINDS = ("ll", "ss", "ls")


@dataclass(frozen=True)
class BoxMetric:
    """
    Cube of side L in d dimensions.

    With ``periodic`` the minimum-image convention applies and displacement
    components lie in (-L/2, L/2]. Without it the metric is flat, which is how
    infinite-volume integrals are evaluated.
    """

    d: int
    L: float = math.inf
    periodic: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgument(f"dimension must be >= 1, got {self.d}")
        if not self.L > 0:
            raise InvalidArgument(f"box length must be positive, got {self.L}")
        if self.periodic and math.isinf(self.L):
            raise InvalidArgument("a periodic box needs a finite side length")

    @classmethod
    def flat(cls, d: int) -> "BoxMetric":
        return cls(d=d, L=math.inf, periodic=False)

    @property
    def volume(self) -> float:
        return self.L ** self.d

    def displacement(self, x, y) -> np.ndarray:
        """Displacement y - x, wrapped to the minimum image when periodic."""
        diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periodic:
            diff = diff - self.L * np.ceil(diff / self.L - 0.5)
        return diff

    def distance(self, x, y) -> np.ndarray:
        return np.sqrt(np.sum(self.displacement(x, y) ** 2, axis=-1))


@dataclass(frozen=True)
class SphereSpecies:
    """Radii of the small (r) and big (R) spheres."""

    r: float
    R: float

    def __post_init__(self):
        if not (self.r > 0 and self.R > 0):
            raise InvalidArgument(f"radii must be positive, got r={self.r}, R={self.R}")
        if self.r >= self.R:
            raise InvalidArgument(f"small radius {self.r} must be below big radius {self.R}")

    def excluded_distance(self, pair_kind: str) -> float:
        if pair_kind == "ll":
            return 2.0 * self.R
        if pair_kind == "ss":
            return 2.0 * self.r
        if pair_kind == "ls":
            return self.R + self.r
        raise InvalidArgument(f"unknown pair kind {pair_kind!r}; expected one of {PAIR_KINDS}")


def ball_volume(d: int, radius: float) -> float:
    """Volume of the d-dimensional ball, pi^(d/2) radius^d / Gamma(d/2 + 1)."""
    if d < 1:
        raise InvalidArgument(f"dimension must be >= 1, got {d}")
    if radius < 0:
        raise InvalidArgument(f"radius must be non-negative, got {radius}")
    return float(math.pi ** (d / 2) * radius**d / gamma(d / 2 + 1))


def shell_volume(d: int, R: float, r: float) -> float:
    """Volume of B_{R+r} minus B_{R-r}."""
    if r <= 0 or r > R:
        raise InvalidArgument(f"shell needs 0 < r <= R, got r={r}, R={R}")
    return ball_volume(d, R + r) - ball_volume(d, R - r)


def overlaps(pair_kind: str, x, y, metric: BoxMetric, species: SphereSpecies) -> np.ndarray:
    """Vectorized hard-core indicator: distance strictly below the excluded distance."""
    return metric.distance(x, y) < species.excluded_distance(pair_kind)


def mayer(pair_kind: str, x, y, metric: BoxMetric, species: SphereSpecies) -> int:
    """Hard-core Mayer function: -1 on overlap, 0 otherwise."""
    return -1 if bool(overlaps(pair_kind, x, y, metric, species)) else 0


def pair_overlap_mask(points: np.ndarray, metric: BoxMetric, thresholds) -> np.ndarray:
    """
    Overlap masks for batches of point tuples.

    ``points`` has shape (batch, m, d). Bit b of the result is set when the
    b-th pair (i < j, lexicographic) is closer than its threshold; a scalar
    threshold applies to every pair, an (m, m) array gives one per pair.
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[1]
    limits = np.broadcast_to(np.asarray(thresholds, dtype=float), (m, m))
    mask = np.zeros(points.shape[0], dtype=np.int64)
    for bit, (i, j) in enumerate(itertools.combinations(range(m), 2)):
        close = metric.distance(points[:, i], points[:, j]) < limits[i, j]
        mask |= close.astype(np.int64) << bit
    return mask


def check_admissible(big_centers: Sequence, metric: BoxMetric, species: SphereSpecies) -> None:
    """Raise if any two big spheres overlap."""
    centers = _as_points(big_centers, metric.d)
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if overlaps("ll", centers[i], centers[j], metric, species):
                raise InadmissibleConfiguration(
                    f"big spheres {i} and {j} overlap (distance "
                    f"{float(metric.distance(centers[i], centers[j])):.6g} < {2 * species.R:.6g})"
                )


def free_volume(
    big_centers: Sequence,
    metric: BoxMetric,
    species: SphereSpecies,
    samples: int,
    seed: int,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """
    Monte Carlo estimate of the volume available to small-sphere centres.

    Uniform points in the box are kept when farther than R + r from every big
    centre.
    """
    if not metric.periodic:
        raise InvalidArgument("free volume is defined on the periodic box only")
    centers = _as_points(big_centers, metric.d)
    check_admissible(centers, metric, species)
    if len(centers) == 0:
        return CoefficientEstimate.exact(metric.volume, samples=samples)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(0.0, metric.L, size=(size, metric.d))

    def integrand(points: np.ndarray) -> np.ndarray:
        free = np.ones(len(points), dtype=bool)
        for center in centers:
            free &= ~overlaps("ls", center, points, metric, species)
        return free.astype(float)

    estimate = sample_mean(
        integrand, sampler, samples, seed, shards=shards, workers=workers, volume=metric.volume
    )
    logger.debug("Free volume with %d big spheres: %.6g +- %.2g", len(centers), estimate.value, estimate.std_error)
    return estimate


def free_volume_bounds(n_big: int, metric: BoxMetric, species: SphereSpecies) -> tuple:
    """Configuration-independent bounds (|L| - N_R|B_{R+r}|, |L| - N_R|B_R|)."""
    return (
        metric.volume - n_big * ball_volume(metric.d, species.R + species.r),
        metric.volume - n_big * ball_volume(metric.d, species.R),
    )


def free_volume_1d(big_centers: Iterable[float], L: float, exclusion: float) -> float:
    """
    Exact available length on a circle of length L.

    Each centre removes the open interval of half-width ``exclusion``; the
    union is measured by sorting the arcs.
    """
    centers = sorted(float(c) % L for c in big_centers)
    if not centers:
        return L
    if 2 * exclusion >= L:
        return 0.0
    arcs = _circle_arcs(centers, exclusion, L)
    return L - _union_length(arcs)


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _as_points(points, d: int) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.size == 0:
        return np.zeros((0, d))
    return array.reshape(-1, d)


def _circle_arcs(centers: List[float], half_width: float, L: float) -> List[tuple]:
    # Unroll each arc onto [0, L), splitting the ones that wrap
    arcs = []
    for c in centers:
        lo, hi = c - half_width, c + half_width
        if lo < 0:
            arcs.extend([(lo + L, L), (0.0, hi)])
        elif hi > L:
            arcs.extend([(lo, L), (0.0, hi - L)])
        else:
            arcs.append((lo, hi))
    return arcs


def _union_length(intervals: List[tuple]) -> float:
    total = 0.0
    current_lo, current_hi = None, None
    for lo, hi in sorted(intervals):
        if current_hi is None or lo > current_hi:
            if current_hi is not None:
                total += current_hi - current_lo
            current_lo, current_hi = lo, hi
        else:
            current_hi = max(current_hi, hi)
    if current_hi is not None:
        total += current_hi - current_lo
    return total
