"""
Brute-force partition functions for tiny instances.

Every partition function is normalized by |Λ|^N, so an ideal gas gives 1.
In d=1 the hard-rod geometry is exact: centres of the small rods live on the
arcs the bigs leave free, and n rods with minimum spacing a fit into an arc
of length l in (l - (n-1)a)^n of ordered configuration volume. The only
numerical step left is the integral over the second big position, done with
adaptive quadrature split at every breakpoint of the piecewise-polynomial
integrand. In d=2 everything is Monte Carlo.
"""

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from expansion import graphs
from expansion.errors import InvalidArgument, NotInDomain, PrecisionFailure, ResourceLimit
from expansion.estimates import CoefficientEstimate, sample_mean
from expansion.geometry import BoxMetric, SphereSpecies, check_admissible, pair_overlap_mask
from expansion.params import ConvergenceParams, ModelParams, Truncation
from expansion.series import FreeEnergyReport, free_energy_bounds

logger = logging.getLogger(__name__)

MAX_SMALL = 4
MAX_BIG = 2
QUAD_TOLERANCE = 1e-10
TREE_GRAPH_MAX = 6


@dataclass(frozen=True)
class TinyInstance:
    d: int
    L: float
    r: float
    R: float
    n_small: int
    n_big: int
    samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidArgument(f"tiny instances live in d=1 or d=2, got d={self.d}")
        if self.n_small > MAX_SMALL or self.n_big > MAX_BIG:
            raise ResourceLimit(f"tiny instances allow N_r <= {MAX_SMALL} and N_R <= {MAX_BIG}")
        if self.n_small < 0 or self.n_big < 0:
            raise InvalidArgument("particle counts must be non-negative")
        SphereSpecies(self.r, self.R)
        if self.d == 1 and self.n_small * 2 * self.r + self.n_big * 2 * self.R >= self.L:
            raise InvalidArgument(f"instance is at or above close packing on a circle of length {self.L}")

    @property
    def species(self) -> SphereSpecies:
        return SphereSpecies(self.r, self.R)

    @property
    def metric(self) -> BoxMetric:
        return BoxMetric(d=self.d, L=self.L, periodic=True)

    @property
    def volume(self) -> float:
        return self.L**self.d

    def params(self) -> ModelParams:
        return ModelParams.finite(self.d, self.r, self.R, self.L, self.n_small, self.n_big)


@dataclass(frozen=True)
class OracleValue:
    value: float
    error: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "error": self.error}


@dataclass(frozen=True)
class SandwichReport:
    exact: float
    exact_error: float
    lower: float
    upper: float
    tolerance: float
    holds: bool
    skipped: bool = False
    reason: str = ""
    remainder: float = 0.0
    margins: Dict[str, float] = dataclasses.field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TreeGraphReport:
    n: int
    trials: int
    violations: int
    max_ratio: float

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def circle_rod_volume(L: float, n: int, a: float) -> float:
    """Configuration volume of n labelled rods of length a on a circle: L (L - n a)^(n-1)."""
    if n == 0:
        return 1.0
    return L * max(L - n * a, 0.0) ** (n - 1)


def segment_rod_volume(lengths: Sequence[float], n: int, a: float) -> float:
    """
    Configuration volume of n labelled rod centres spread over disjoint arcs:
    sum over occupations n_i of n!/prod n_i! prod (l_i - (n_i - 1) a)_+^(n_i).
    """
    total = 0.0
    for occupation in _compositions(n, len(lengths)):
        log_weight = gammaln(n + 1) - sum(gammaln(k + 1) for k in occupation)
        volume = 1.0
        for length, k in zip(lengths, occupation):
            if k:
                volume *= max(length - (k - 1) * a, 0.0) ** k
        total += math.exp(log_weight) * volume
    return total


def brute_Z_empty(inst: TinyInstance) -> OracleValue:
    """Small spheres alone: |Λ|^-N_r times the integral of the small-small hard-core product."""
    if inst.d == 1:
        return OracleValue(circle_rod_volume(inst.L, inst.n_small, 2 * inst.r) / inst.L**inst.n_small)
    return _mc_no_overlap(inst, n_small=inst.n_small, n_big=0)


def brute_Z_p(inst: TinyInstance, big_centers: Sequence) -> OracleValue:
    """Small spheres in the presence of bigs fixed at ``big_centers``."""
    centers = np.asarray(big_centers, dtype=float).reshape(-1, inst.d)
    if len(centers) == 0:
        return brute_Z_empty(inst)
    check_admissible(centers, inst.metric, inst.species)
    if inst.d == 1:
        lengths = _free_arcs(centers[:, 0], inst.L, inst.R + inst.r)
        return OracleValue(segment_rod_volume(lengths, inst.n_small, 2 * inst.r) / inst.L**inst.n_small)
    return _mc_no_overlap(inst, n_small=inst.n_small, n_big=0, fixed_bigs=centers)


def brute_Z_int(inst: TinyInstance) -> OracleValue:
    """Interacting part of the full canonical partition function, Z = Z^ideal Z^int."""
    if inst.n_big == 0:
        return brute_Z_empty(inst)
    if inst.d == 2:
        return _mc_no_overlap(inst, n_small=inst.n_small, n_big=inst.n_big)
    if inst.n_big == 1:
        return brute_Z_p(inst, [0.0])

    L, e, a, n = inst.L, inst.R + inst.r, 2 * inst.r, inst.n_small

    def integrand(p: float) -> float:
        lengths = [max(p - 2 * e, 0.0), max(L - p - 2 * e, 0.0)]
        return segment_rod_volume(lengths, n, a)

    lo, hi = 2 * inst.R, L - 2 * inst.R
    breaks = {2 * e + j * a for j in range(n + 1)} | {L - 2 * e - j * a for j in range(n + 1)}
    points = sorted(x for x in breaks if lo < x < hi)
    value, error = quad(integrand, lo, hi, points=points or None, limit=200, epsabs=QUAD_TOLERANCE)
    scale = L ** (n + 1)
    if error > 1e3 * QUAD_TOLERANCE * max(1.0, abs(value)):
        raise PrecisionFailure(f"big-position quadrature error {error:.3g} is too large")
    return OracleValue(value / scale, error / scale)


def brute_Z(inst: TinyInstance) -> OracleValue:
    """Full normalized canonical partition function Z^int / (N_r! N_R!)."""
    interacting = brute_Z_int(inst)
    norm = math.exp(gammaln(inst.n_small + 1) + gammaln(inst.n_big + 1))
    return OracleValue(interacting.value / norm, interacting.error / norm)


def log_z_hat(inst: TinyInstance) -> OracleValue:
    """(1/|Λ|) log(Z^int / Z^empty) with first-order error propagation."""
    interacting = brute_Z_int(inst)
    empty = brute_Z_empty(inst)
    if interacting.value <= 0 or empty.value <= 0:
        raise PrecisionFailure("brute-force partition function is not positive; raise the sample budget")
    value = (math.log(interacting.value) - math.log(empty.value)) / inst.volume
    error = math.hypot(interacting.error / interacting.value, empty.error / empty.value) / inst.volume
    return OracleValue(value, error)


def sandwich_test(
    inst: TinyInstance,
    truncation: Truncation,
    seed: int,
    cp: ConvergenceParams = ConvergenceParams(),
    sigmas: float = 3.0,
) -> SandwichReport:
    """
    Check that the brute-force (1/|Λ|) log Ẑ lies between the two series.

    The series at radius R + r bound log Ẑ from below, the ones at radius R
    from above, up to the O(1/|Λ|) canonical remainder. The tolerance adds
    that remainder as measured by ``canonical_remainder``, the truncation
    tail (the change from one order lower), the oracle error and ``sigmas``
    Monte Carlo standard errors. A parameter point outside the convergence
    domain is reported as skipped.
    """
    try:
        lower_f, upper_f = free_energy_bounds(inst.params(), cp, truncation, seed)
    except NotInDomain as err:
        logger.warning("Sandwich test skipped: %s", err)
        return SandwichReport(
            exact=math.nan, exact_error=math.nan, lower=math.nan, upper=math.nan, tolerance=math.nan,
            holds=False, skipped=True, reason=str(err), margins=err.margins,
        )
    # upper free energy <-> lower bound on log Z-hat
    below, above = upper_f.log_z_hat, lower_f.log_z_hat
    tail = 0.0
    if truncation.order > 1:
        coarse = dataclasses.replace(truncation, order=truncation.order - 1)
        coarse_lower, coarse_upper = free_energy_bounds(inst.params(), cp, coarse, seed)
        tail = max(
            abs(below.value - coarse_upper.log_z_hat.value), abs(above.value - coarse_lower.log_z_hat.value)
        )
    big_only = None
    if inst.n_big > 1:
        big_only, _ = free_energy_bounds(dataclasses.replace(inst, n_small=0).params(), cp, truncation, seed)
    remainder = canonical_remainder(inst, lower_f, big_only)
    exact = log_z_hat(inst)
    tolerance = remainder + tail + exact.error + sigmas * math.hypot(below.std_error, above.std_error)
    holds = below.value - tolerance <= exact.value <= above.value + tolerance
    logger.info(
        "Sandwich: %.6g <= %.6g <= %.6g (tolerance %.2g): %s",
        below.value, exact.value, above.value, tolerance, "holds" if holds else "VIOLATED",
    )
    return SandwichReport(
        exact=exact.value,
        exact_error=exact.error,
        lower=below.value,
        upper=above.value,
        tolerance=tolerance,
        holds=holds,
        remainder=remainder,
    )


def canonical_remainder(
    inst: TinyInstance, report: FreeEnergyReport, big_only: Optional[FreeEnergyReport] = None
) -> float:
    """
    Finite-N remainder of the canonical series, measured on each species alone.

    The small gas without bigs is compared with the F0 of ``report``, the big
    gas without smalls with the F2 of ``big_only``.
    """
    V = inst.volume
    remainder = 0.0
    if inst.n_small > 0:
        remainder += abs(math.log(brute_Z_empty(inst).value) / V - report.F0.value)
    if inst.n_big > 1 and big_only is not None:
        bigs = brute_Z_int(dataclasses.replace(inst, n_small=0))
        remainder += abs(math.log(bigs.value) / V - big_only.F2.value)
    return remainder


def tree_graph_check(n: int, trials: int, seed: int, d: int = 2, r: float = 0.5) -> TreeGraphReport:
    """
    Compare |sum over connected graphs of prod f| with the number of spanning
    trees of the overlap graph on random position tuples.

    Points are drawn in a cube small enough that most pairs overlap.
    """
    if not 2 <= n <= TREE_GRAPH_MAX:
        raise ResourceLimit(f"tree-graph check is available for 2 <= n <= {TREE_GRAPH_MAX}, got {n}")
    if trials < 1:
        raise InvalidArgument(f"need at least one trial, got {trials}")
    rng = np.random.Generator(np.random.PCG64(seed))
    side = 2 * r * max(1.0, n / 2)
    points = rng.uniform(0.0, side, size=(trials, n, d))
    masks = pair_overlap_mask(points, BoxMetric.flat(d), 2 * r)
    sums = np.abs(graphs.connected_table(n)(masks))

    violations = 0
    max_ratio = 0.0
    for mask, total in zip(masks.tolist(), sums.tolist()):
        trees = spanning_tree_count(n, mask)
        if total > trees:
            violations += 1
        if trees > 0:
            max_ratio = max(max_ratio, total / trees)
    logger.info("Tree-graph check n=%d: %d trials, %d violations, max ratio %.3g", n, trials, violations, max_ratio)
    return TreeGraphReport(n=n, trials=trials, violations=violations, max_ratio=max_ratio)


@functools.lru_cache(maxsize=None)
def spanning_tree_count(n: int, mask: int) -> int:
    """Kirchhoff count of spanning trees of the graph on n vertices with edge mask ``mask``."""
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(e for bit, e in enumerate(graphs.pair_list(n)) if mask >> bit & 1)
    if n == 1:
        return 1
    if not nx.is_connected(g):
        return 0
    laplacian = nx.laplacian_matrix(g, nodelist=range(n)).toarray().astype(float)
    return int(round(np.linalg.det(laplacian[1:, 1:])))


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _compositions(n: int, parts: int) -> List[tuple]:
    if parts == 0:
        return [()] if n == 0 else []
    return [
        (first,) + rest for first in range(n + 1) for rest in _compositions(n - first, parts - 1)
    ]


def _free_arcs(centers: Sequence[float], L: float, exclusion: float) -> List[float]:
    ordered = sorted(float(c) % L for c in centers)
    gaps = [later - earlier for earlier, later in zip(ordered, ordered[1:])]
    gaps.append(ordered[0] + L - ordered[-1])
    return [max(gap - 2 * exclusion, 0.0) for gap in gaps]


def _mc_no_overlap(
    inst: TinyInstance, n_small: int, n_big: int, fixed_bigs: Optional[np.ndarray] = None
) -> OracleValue:
    # Probability that uniform positions have no hard-core overlap
    d, L = inst.d, inst.L
    species = inst.species
    fixed = np.zeros((0, d)) if fixed_bigs is None else np.asarray(fixed_bigs, dtype=float)
    n_fixed = len(fixed)
    m = n_fixed + n_big + n_small
    if m - n_fixed == 0:
        return OracleValue(1.0)
    kinds = ["l"] * (n_fixed + n_big) + ["s"] * n_small
    thresholds = np.array([[species.excluded_distance("".join(sorted(i + j))) for j in kinds] for i in kinds])
    metric = inst.metric

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(0.0, L, size=(size, m - n_fixed, d))

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([np.broadcast_to(fixed, (len(points), n_fixed, d)), points], axis=1)
        return (pair_overlap_mask(tuples, metric, thresholds) == 0).astype(float)

    estimate: CoefficientEstimate = sample_mean(integrand, sampler, inst.samples, inst.seed)
    return OracleValue(estimate.value, estimate.std_error)
