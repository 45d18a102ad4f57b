"""
Abstract polymer model of the small spheres in a fixed big-sphere background.

Polymers are label sets V of small spheres with |V| >= 2. Their activities
come from the connected small-small graph sum restricted to the volume left
free by the bigs and normalized by that free volume. log Z of the polymer gas
is evaluated as a truncated cluster series with a Kotecky-Preiss tail
bound.
"""

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from expansion import graphs
from expansion.errors import InvalidArgument, NotInDomain, PrecisionFailure, ResourceLimit
from expansion.estimates import CoefficientEstimate, sample_mean
from expansion.geometry import (
    BoxMetric,
    SphereSpecies,
    check_admissible,
    free_volume,
    free_volume_1d,
    overlaps,
    pair_overlap_mask,
)
from expansion.params import ConvergenceParams, ModelParams, excluded_volume

logger = logging.getLogger(__name__)

URSELL_MAX = 6
QUADRATURE_MAX_SIZE = 3
KP_TAIL_TERMS = 80
TIE_SLACK = 1e-9


@dataclass(frozen=True)
class Polymer:
    labels: FrozenSet[int]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise InvalidArgument(f"a polymer needs at least two labels, got {sorted(self.labels)}")

    @classmethod
    def of(cls, *labels: int) -> "Polymer":
        return cls(frozenset(labels))

    @property
    def size(self) -> int:
        return len(self.labels)

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        return (len(self.labels), tuple(sorted(self.labels)))

    def __str__(self) -> str:
        return "{" + ",".join(str(k) for k in sorted(self.labels)) + "}"


@dataclass(frozen=True)
class Cloud:
    """
    Tuple of label sets with one coordinate per (set index, label).

    A label that appears in two sets carries two independent coordinates.
    A single one-label set is the single-particle cloud.
    """

    polymers: Tuple[FrozenSet[int], ...]
    positions: Mapping[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = {(i, k) for i, labels in enumerate(self.polymers) for k in labels}
        if set(self.positions) != expected:
            raise InvalidArgument(f"cloud positions must be keyed by {sorted(expected)}")
        if any(not labels for labels in self.polymers):
            raise InvalidArgument("cloud contains an empty label set")

    @classmethod
    def single(cls, label: int, q) -> "Cloud":
        return cls((frozenset({label}),), {(0, label): np.asarray(q, dtype=float)})

    @property
    def size(self) -> int:
        return len(frozenset().union(*self.polymers))

    def coordinates(self) -> np.ndarray:
        return np.array([self.positions[key] for key in sorted(self.positions)], dtype=float)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite midpoint grid on [0, L) with two Richardson refinements (d=1)."""

    cells: int = 100
    tolerance: float = 1e-4


@dataclass(frozen=True)
class MonteCarloSpec:
    samples: int = 100_000
    seed: int = 0
    shards: int = 1
    workers: int = 1


@dataclass(frozen=True)
class ClusterSeries:
    value: float
    tail_bound: float
    kp_ratio: float
    order: int

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "tail_bound": self.tail_bound, "kp_ratio": self.kp_ratio, "order": self.order}


@dataclass(frozen=True)
class KPReport:
    holds: bool
    margin: float
    lhs: float
    tail_sum: float
    excluded_volume_reading: str

    def to_dict(self) -> Dict[str, object]:
        return {
            "holds": self.holds,
            "margin": self.margin,
            "lhs": self.lhs,
            "tail_sum": self.tail_sum,
            "excluded_volume_reading": self.excluded_volume_reading,
        }


def enumerate_polymers(n_small: int) -> List[Polymer]:
    """All V in [N_r] with |V| >= 2, by size then labels."""
    if n_small < 0:
        raise InvalidArgument(f"small-sphere count must be non-negative, got {n_small}")
    labels = range(1, n_small + 1)
    return [Polymer(frozenset(c)) for size in range(2, n_small + 1) for c in itertools.combinations(labels, size)]


def ursell(polymers: Sequence[Polymer]) -> int:
    """Signed connected-graph sum over the intersection graph of the polymers."""
    n = len(polymers)
    if n == 0:
        raise InvalidArgument("the Ursell function needs at least one polymer")
    if n > URSELL_MAX:
        raise ResourceLimit(f"Ursell function of {n} polymers exceeds the cap of {URSELL_MAX}")
    if n == 1:
        return 1
    mask = 0
    for bit, (i, j) in enumerate(graphs.pair_list(n)):
        if _labels(polymers[i]) & _labels(polymers[j]):
            mask |= 1 << bit
    return int(graphs.connected_table(n)(mask))


def cloud_link(p, cloud: Cloud, metric: BoxMetric, species: SphereSpecies) -> float:
    """Product of (1 + f^ls) over the cloud coordinates, minus one: -1 or 0."""
    coordinates = cloud.coordinates()
    hit = np.any(overlaps("ls", np.asarray(p, dtype=float), coordinates, metric, species))
    return -1.0 if hit else 0.0


def cloud_weight(cloud: Cloud, metric: BoxMetric, species: SphereSpecies) -> int:
    """Product over the cloud's sets of the connected small-small graph sum at its coordinates."""
    weight = 1
    for i, labels in enumerate(cloud.polymers):
        ordered = sorted(labels)
        if len(ordered) == 1:
            continue
        points = np.array([[cloud.positions[(i, k)] for k in ordered]], dtype=float)
        mask = pair_overlap_mask(points, metric, 2 * species.r)
        weight *= int(graphs.connected_table(len(ordered))(mask)[0])
    return weight


def polymer_activity(
    polymer: Polymer,
    big_centers: Sequence,
    metric: BoxMetric,
    species: SphereSpecies,
    spec: QuadratureSpec | MonteCarloSpec = QuadratureSpec(),
) -> float:
    """
    Activity of a polymer: the connected small-small graph integral over the
    free volume, divided by |free volume|^|V|.
    """
    return activity_estimate(polymer.size, big_centers, metric, species, spec).value


def activity_estimate(
    size: int,
    big_centers: Sequence,
    metric: BoxMetric,
    species: SphereSpecies,
    spec: QuadratureSpec | MonteCarloSpec = QuadratureSpec(),
) -> CoefficientEstimate:
    """Activity of any polymer with ``size`` labels; size 1 gives the normalization 1."""
    if not metric.periodic:
        raise InvalidArgument("polymer activities are defined in the periodic box")
    check_admissible(big_centers, metric, species)
    if size < 1:
        raise InvalidArgument(f"polymer size must be positive, got {size}")
    if size == 1:
        return CoefficientEstimate.exact(1.0)
    centers = np.asarray(big_centers, dtype=float).reshape(-1, metric.d)

    if isinstance(spec, QuadratureSpec):
        if metric.d != 1:
            raise InvalidArgument("deterministic quadrature is available in d=1 only; pass a MonteCarloSpec")
        if size > QUADRATURE_MAX_SIZE:
            raise ResourceLimit(f"midpoint quadrature supports polymers up to size {QUADRATURE_MAX_SIZE}")
        free = free_volume_1d(centers[:, 0], metric.L, species.R + species.r)
        integral, error = _midpoint_richardson(size, centers, metric, species, spec.cells)
        if error > spec.tolerance * free**size:
            raise PrecisionFailure(
                f"quadrature error {error / free**size:.3g} exceeds tolerance {spec.tolerance:.3g} "
                f"for a size-{size} polymer with {spec.cells} cells"
            )
        return CoefficientEstimate(integral / free**size, error / free**size, truncation={"cells": spec.cells})

    if not isinstance(spec, MonteCarloSpec):
        raise InvalidArgument(f"unknown integration spec {spec!r}")
    if size > URSELL_MAX:
        raise ResourceLimit(f"polymer size {size} exceeds the cap of {URSELL_MAX}")
    if len(centers) == 0:
        free = CoefficientEstimate.exact(metric.volume)
    else:
        free = free_volume(centers, metric, species, spec.samples, spec.seed + 1, spec.shards, spec.workers)
    table = graphs.connected_table(size)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(0.0, metric.L, size=(n, size, metric.d))

    def integrand(points: np.ndarray) -> np.ndarray:
        values = table(pair_overlap_mask(points, metric, 2 * species.r)).astype(float)
        for center in centers:
            values *= ~np.any(overlaps("ls", center, points, metric, species), axis=1)
        return values

    integral = sample_mean(
        integrand, sampler, spec.samples, spec.seed, spec.shards, spec.workers, volume=metric.volume**size
    )
    value = integral.value / free.value**size
    # first-order propagation of both sampling errors
    error = math.hypot(integral.std_error, size * integral.value * free.std_error / free.value) / free.value**size
    return CoefficientEstimate(value, error, integral.samples, {"samples": spec.samples})


def activity_table(
    n_small: int,
    big_centers: Sequence,
    metric: BoxMetric,
    species: SphereSpecies,
    spec: QuadratureSpec | MonteCarloSpec = QuadratureSpec(),
) -> Dict[Polymer, float]:
    """Activities of every polymer in [N_r]; all polymers of one size share a value."""
    by_size: Dict[int, float] = {}
    table = {}
    for polymer in enumerate_polymers(n_small):
        if polymer.size not in by_size:
            by_size[polymer.size] = activity_estimate(polymer.size, big_centers, metric, species, spec).value
            logger.debug("Activity of size-%d polymers: %.6g", polymer.size, by_size[polymer.size])
        table[polymer] = by_size[polymer.size]
    return table


def polymer_partition_function(activities: Mapping[Polymer, float]) -> float:
    """Exact sum over families of pairwise disjoint polymers of the product of activities."""
    by_min: Dict[int, List[Tuple[FrozenSet[int], float]]] = {}
    for polymer, z in activities.items():
        by_min.setdefault(min(polymer.labels), []).append((polymer.labels, z))
    universe = frozenset().union(*(p.labels for p in activities)) if activities else frozenset()

    @functools.lru_cache(maxsize=None)
    def partition(remaining: FrozenSet[int]) -> float:
        if not remaining:
            return 1.0
        first = min(remaining)
        rest = remaining - {first}
        total = partition(rest)
        for labels, z in by_min.get(first, []):
            if labels <= remaining:
                total += z * partition(remaining - labels)
        return total

    return partition(universe)


def cluster_log_Z(
    activities: Mapping[Polymer, float],
    kp_weight: float,
    order: int,
    allow_outside_domain: bool = False,
) -> ClusterSeries:
    """
    Truncated cluster series for log Z of the polymer gas.

    Sums (1/n!) phi^T(V_1..V_n) prod zeta(V_i) over ordered n-tuples for n up
    to ``order``. Tuples are grouped into multisets with weight 1/prod(m_i!).
    The KP ratio theta = max_V sum_{V' ~ V} |zeta(V')| e^{c|V'|} / (c|V|) must be
    below one. The activities zeta / theta still satisfy the KP condition, so
    the absolute cluster sum at those activities is at most S / theta with
    S = sum_V |zeta(V)| e^{c|V|}. The n-polymer terms scale as theta^-n,
    which bounds everything after ``order`` by S theta^order.

    Raises:
        NotInDomain: KP ratio >= 1 and no override given.
    """
    if order < 1:
        raise InvalidArgument(f"cluster order must be >= 1, got {order}")
    if order > URSELL_MAX:
        raise ResourceLimit(f"cluster order {order} exceeds the cap of {URSELL_MAX}")
    polymers = sorted(activities, key=Polymer.sort_key)
    theta, weighted_total = _kp_ratio(activities, kp_weight)
    if theta >= 1:
        message = f"KP ratio {theta:.4g} >= 1 with weight c={kp_weight}"
        if not allow_outside_domain:
            raise NotInDomain(message, {"kp_ratio": 1.0 - theta})
        logger.warning("%s; evaluating the series anyway", message)

    value = 0.0
    for n in range(1, order + 1):
        term = 0.0
        for combo in itertools.combinations_with_replacement(range(len(polymers)), n):
            chosen = [polymers[i] for i in combo]
            phi = ursell(chosen)
            if phi == 0:
                continue
            weight = math.exp(-sum(gammaln(m + 1) for m in _multiplicities(combo)))
            term += weight * phi * math.prod(activities[p] for p in chosen)
        logger.debug("Cluster order %d: %.6g", n, term)
        value += term

    tail = weighted_total * theta**order if theta < 1 else math.inf
    return ClusterSeries(value=value, tail_bound=tail, kp_ratio=theta, order=order)


def kp_check(params: ModelParams, cp: ConvergenceParams, reading: str = "2R") -> KPReport:
    """
    Polymer convergence condition 2 x |B_excl| e^{2(b+c)+1} < c, with x the
    small density over the volume left by the bigs at radius R + r.
    """
    species = params.species
    try:
        density = params.available_small_density(species.R + species.r)
    except InvalidArgument as err:
        raise InvalidArgument(f"kp check needs a positive free volume: {err}") from err
    excluded = excluded_volume(params.d, species, reading)
    lhs = 2.0 * density * excluded * math.exp(2 * (cp.b + cp.c) + 1)
    return KPReport(
        holds=lhs < cp.c,
        margin=cp.c - lhs,
        lhs=lhs,
        tail_sum=kp_tail_sum(density * excluded, cp.b, cp.c),
        excluded_volume_reading=reading,
    )


def kp_tail_sum(x: float, b: float, c: float, terms: int = KP_TAIL_TERMS) -> float:
    """
    Cayley-tree series e^{b+c} sum_{n>=2} n^{n-2}/(n-1)! (x e^{b+c})^{n-1}.

    Infinite when x e^{b+c} >= 1/e, where the series diverges.
    """
    if x < 0:
        raise InvalidArgument(f"tail-sum argument must be non-negative, got {x}")
    y = x * math.exp(b + c)
    if y == 0:
        return 0.0
    if y * math.e >= 1:
        return math.inf
    log_terms = [(n - 2) * math.log(n) - gammaln(n) + (n - 1) * math.log(y) for n in range(2, terms + 1)]
    return math.exp(b + c) * float(np.sum(np.exp(log_terms)))


def big_subset_cumulant(log_z_of: Callable[[FrozenSet[int]], float], bigs: Iterable[int]) -> float:
    """Phi^T(J) = sum over J' in J of (-1)^{|J - J'|} log Z(J')."""
    members = tuple(sorted(bigs))
    total = 0.0
    for size in range(len(members) + 1):
        sign = -1.0 if (len(members) - size) % 2 else 1.0
        for subset in itertools.combinations(members, size):
            total += sign * log_z_of(frozenset(subset))
    return total


def log_z_from_cumulants(log_z_of: Callable[[FrozenSet[int]], float], bigs: Iterable[int]) -> float:
    """Sum of Phi^T(J) over all J in the given big set; equals log Z of the full set."""
    members = tuple(sorted(bigs))
    return sum(
        big_subset_cumulant(log_z_of, subset)
        for size in range(len(members) + 1)
        for subset in itertools.combinations(members, size)
    )


def linked_cloud_integral(
    p,
    polymers: Sequence[FrozenSet[int]],
    whites: Sequence[FrozenSet[int]],
    species: SphereSpecies,
    d: int,
    samples: int,
    seed: int,
) -> CoefficientEstimate:
    """
    Flat-space integral over independent cloud coordinates of
    prod_i prod_{k in whites_i} f^ls(p, q^i_k) times the connected
    small-small sum of every set.
    """
    metric = BoxMetric.flat(d)
    layout = [(i, k) for i, labels in enumerate(polymers) for k in sorted(labels)]
    if any(not whites[i] <= polymers[i] for i in range(len(polymers))):
        raise InvalidArgument("white labels must belong to their set")
    p = np.asarray(p, dtype=float).reshape(d)
    half_width = species.R + species.r + 2 * species.r * max(len(v) for v in polymers)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return p + rng.uniform(-half_width, half_width, size=(n, len(layout), d))

    def integrand(points: np.ndarray) -> np.ndarray:
        values = np.ones(len(points))
        for i, labels in enumerate(polymers):
            columns = [layout.index((i, k)) for k in sorted(labels)]
            if len(columns) > 1:
                mask = pair_overlap_mask(points[:, columns], metric, 2 * species.r)
                values *= graphs.connected_table(len(columns))(mask)
            for k in whites[i]:
                values *= np.where(overlaps("ls", p, points[:, layout.index((i, k))], metric, species), -1.0, 0.0)
        return values

    return sample_mean(integrand, sampler, samples, seed, volume=(2 * half_width) ** (d * len(layout)))


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _labels(polymer) -> FrozenSet[int]:
    return polymer.labels if isinstance(polymer, Polymer) else frozenset(polymer)


def _multiplicities(combo: Sequence[int]) -> List[int]:
    return [len(list(group)) for _, group in itertools.groupby(combo)]


def _kp_ratio(activities: Mapping[Polymer, float], c: float) -> Tuple[float, float]:
    if not activities:
        return 0.0, 0.0
    weighted = {p: abs(z) * math.exp(c * p.size) for p, z in activities.items()}
    total = sum(weighted.values())
    if c <= 0:
        return (math.inf if total > 0 else 0.0), total
    ratio = max(
        sum(w for other, w in weighted.items() if other.labels & polymer.labels) / (c * polymer.size)
        for polymer in activities
    )
    return ratio, total


def _midpoint_richardson(
    size: int, centers: np.ndarray, metric: BoxMetric, species: SphereSpecies, cells: int
) -> Tuple[float, float]:
    # Midpoint sums at h, h/2, h/4 with the O(h) and O(h^2) terms eliminated
    coarse, middle, fine = (_midpoint_sum(size, centers, metric, species, cells * 2**j) for j in range(3))
    first = 2 * fine - middle
    extrapolated = (8 * fine - 6 * middle + coarse) / 3
    return extrapolated, abs(extrapolated - first)


def _midpoint_sum(size: int, centers: np.ndarray, metric: BoxMetric, species: SphereSpecies, cells: int) -> float:
    h = metric.L / cells
    grid = (np.arange(cells) + 0.5) * h
    free = np.ones(cells, dtype=bool)
    for center in centers:
        free &= ~overlaps("ls", center, grid[:, None], metric, species)
    table = graphs.connected_table(size)
    # midpoint separations are whole multiples of h; ties at the contact distance count as apart
    index = np.arange(cells)
    steps = np.abs(index[:, None] - index[None, :])
    steps = np.minimum(steps, cells - steps)
    close = steps * h < 2 * species.r * (1 - TIE_SLACK)
    weight = free.astype(float)

    if size == 2:
        values = table(close.astype(np.int64))
        return float(weight @ values @ weight) * h**2

    total = 0.0
    # size 3: slice over the first coordinate, pairs (0,1), (0,2), (1,2)
    for i in range(cells):
        if not free[i]:
            continue
        mask = (
            close[i][:, None].astype(np.int64)
            | (close[i][None, :].astype(np.int64) << 1)
            | (close.astype(np.int64) << 2)
        )
        total += float(weight @ table(mask) @ weight)
    return total * h**3
