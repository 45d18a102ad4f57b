"""
Finite-volume counterparts of the cluster coefficients.

In the periodic box the cover sums are not restricted to tree-like covers:
every collection of polymers covering [k+1] contributes, weighted by
|Λ|^(k - sum(|V_i| - 1)). The tree-like covers give the limit coefficient
and every extra unit of overlap costs a factor 1/|Λ|, which is what the
O(1/|Λ|) convergence measurements look at. Collections are truncated by
that excess.
"""

import functools
import itertools
import logging
import math
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from expansion import graphs
from expansion.errors import InvalidArgument, ResourceLimit
from expansion.estimates import CoefficientEstimate, sample_mean, sum_estimates, uniform_cube_sampler
from expansion.geometry import BoxMetric, SphereSpecies, ball_volume, pair_overlap_mask
from expansion.integrals import B1_MAX_ORDER, BETA_MAX_ORDER, child_seed, one_big_graph_integral
from expansion.params import A_INF_VARIANTS
from expansion.polymers import URSELL_MAX, ursell

logger = logging.getLogger(__name__)

FINITE_MAX_K = 3
DEFAULT_EXCESS = 2


def beta_lambda(
    k: int, box: BoxMetric, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """
    (1/|Λ|)(1/k!) sum over two-connected graphs on k+1 vertices of the
    box integral. Translation invariance pins one vertex at the origin.
    """
    if not 1 <= k <= BETA_MAX_ORDER:
        raise ResourceLimit(f"beta_lambda is available for 1 <= k <= {BETA_MAX_ORDER}, got {k}")
    table = graphs.two_connected_table(k + 1)
    estimate = _pinned_box_integral(table, k, box, r, min(2 * r * k, box.L / 2), samples, seed, shards, workers)
    return estimate.scaled(1 / math.factorial(k)).with_truncation(k=k, L=box.L)


def periodic_cluster_integral(
    m: int, box: BoxMetric, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """Connected-graph integral over Λ^m divided by |Λ|; m=1 gives 1."""
    _require_periodic(box)
    if m < 1:
        raise InvalidArgument(f"cluster size must be positive, got {m}")
    if m == 1:
        return CoefficientEstimate.exact(1.0, m=1)
    if m == 2 and 2 * r <= box.L / 2:
        return CoefficientEstimate.exact(-ball_volume(box.d, 2 * r), m=2)
    if m > graphs.DEFAULT_N_MAX:
        raise ResourceLimit(f"connected cluster integrals are available up to {graphs.DEFAULT_N_MAX} vertices")
    half_width = min(2 * r * (m - 1), box.L / 2)
    return _pinned_box_integral(
        graphs.connected_table(m), m - 1, box, r, half_width, samples, seed, shards, workers
    ).with_truncation(m=m)


def B_empty_lambda(
    k: int,
    box: BoxMetric,
    r: float,
    samples: int,
    seed: int,
    cluster_integrals: Optional[Mapping[int, CoefficientEstimate]] = None,
    excess: int = DEFAULT_EXCESS,
) -> CoefficientEstimate:
    """
    (|Λ|^k/k!) sum over polymer collections covering [k+1] of
    phi^T prod_i c_Λ(|V_i|)/|Λ|^(|V_i|-1).

    Repeated polymers are allowed and carry 1/prod(m!). ``excess`` caps
    sum(|V_i| - 1) - k; the dropped terms are O(|Λ|^-(excess+1)).
    """
    return _cover_series(k, box, r, samples, seed, cluster_integrals, excess, rho=None, variant="restricted")


def A_lambda(
    k: int,
    rho: float,
    box: BoxMetric,
    r: float,
    samples: int,
    seed: int,
    cluster_integrals: Optional[Mapping[int, CoefficientEstimate]] = None,
    excess: int = DEFAULT_EXCESS,
    variant: str = "printed",
) -> CoefficientEstimate:
    """
    The B_empty_lambda sum with each collection weighted by (1-rho)^(-sum|V_i|) - 1.

    ``variant`` reads the graph factor as in A_inf: ``printed`` takes
    c_Λ(k+1) once for every collection, ``restricted`` the product of
    c_Λ(|V_i|). Either one tends to the A_inf of the same variant.
    """
    if not 0 <= rho < 1:
        raise InvalidArgument(f"A_lambda needs 0 <= rho < 1, got {rho}")
    if variant not in A_INF_VARIANTS:
        raise InvalidArgument(f"unknown A_lambda variant {variant!r}")
    if rho == 0:
        return CoefficientEstimate.exact(0.0, k=k, L=box.L, excess=excess, variant=variant)
    return _cover_series(k, box, r, samples, seed, cluster_integrals, excess, rho=rho, variant=variant)


def B1_star_lambda(
    s: int,
    box: BoxMetric,
    species: SphereSpecies,
    n_big: int,
    samples: int,
    seed: int,
    bound: str = "upper",
    cluster_integrals: Optional[Mapping[int, CoefficientEstimate]] = None,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """
    One-big coefficient in the box, with |Λ|/|Λ̃(p)| replaced by its
    configuration-free bound |Λ|/(|Λ| - N_R|B|): |B| = |B_{R+r}| for the
    upper bound, |B_R| for the lower one.
    The bracket is -(s+1) B^∅_Λ(s) |B_{R+r}| plus the one-big graph sum.
    """
    if not 1 <= s <= B1_MAX_ORDER:
        raise ResourceLimit(f"B1_star_lambda is available for 1 <= s <= {B1_MAX_ORDER}, got {s}")
    if bound not in ("upper", "lower"):
        raise InvalidArgument(f"bound must be 'upper' or 'lower', got {bound!r}")
    radius = species.R + species.r if bound == "upper" else species.R
    free = box.volume - n_big * ball_volume(box.d, radius)
    if free <= 0:
        raise InvalidArgument(f"big spheres exclude the whole box at radius {radius}")
    empty = B_empty_lambda(s, box, species.r, samples, child_seed(seed, "empty", s), cluster_integrals)
    first = empty.scaled(-(s + 1) * ball_volume(box.d, species.R + species.r))
    second = one_big_graph_integral(
        s, box.d, species.r, species.R, samples, child_seed(seed, "one-big", s), shards, workers
    )
    ratio = box.volume / free
    return (first + second).scaled(ratio ** (s + 1)).with_truncation(s=s, bound=bound, L=box.L)


def box_cluster_integrals(
    max_size: int, box: BoxMetric, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> Dict[int, CoefficientEstimate]:
    return {
        m: periodic_cluster_integral(m, box, r, samples, child_seed(seed, "box-cluster", m), shards, workers)
        for m in range(1, max_size + 1)
    }


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _require_periodic(box: BoxMetric) -> None:
    if not box.periodic:
        raise InvalidArgument("finite-volume coefficients need a periodic box")


def _pinned_box_integral(
    table: graphs.GraphSumTable,
    n_free: int,
    box: BoxMetric,
    r: float,
    half_width: float,
    samples: int,
    seed: int,
    shards: int,
    workers: int,
) -> CoefficientEstimate:
    _require_periodic(box)
    d = box.d

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([np.zeros((len(points), 1, d)), points], axis=1)
        return table(pair_overlap_mask(tuples, box, 2 * r)).astype(float)

    return sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (n_free, d)),
        samples,
        seed,
        shards,
        workers,
        volume=(2 * half_width) ** (n_free * d),
    )


@functools.lru_cache(maxsize=None)
def _polymer_covers(k: int, excess: int) -> Tuple[Tuple[Tuple[FrozenSet[int], ...], int, float], ...]:
    # Multisets of polymers in [k+1] covering it, with sum(|V|-1) <= k + excess.
    universe = frozenset(range(1, k + 2))
    polymers = [frozenset(c) for size in range(2, k + 2) for c in itertools.combinations(sorted(universe), size)]
    found = []

    def extend(start: int, chosen: list, budget: int) -> None:
        if chosen and frozenset().union(*chosen) == universe:
            phi = ursell(chosen)
            if phi != 0:
                counts = [len(list(group)) for _, group in itertools.groupby(chosen)]
                weight = math.exp(-sum(gammaln(m + 1) for m in counts))
                found.append((tuple(chosen), phi, weight))
        if len(chosen) == URSELL_MAX:
            return
        for index in range(start, len(polymers)):
            cost = len(polymers[index]) - 1
            if cost <= budget:
                chosen.append(polymers[index])
                extend(index, chosen, budget - cost)
                chosen.pop()

    extend(0, [], k + excess)
    return tuple(found)


def _cover_series(
    k: int,
    box: BoxMetric,
    r: float,
    samples: int,
    seed: int,
    cluster_integrals: Optional[Mapping[int, CoefficientEstimate]],
    excess: int,
    rho: Optional[float],
    variant: str,
) -> CoefficientEstimate:
    _require_periodic(box)
    if not 1 <= k <= FINITE_MAX_K:
        raise ResourceLimit(f"finite-volume cover sums are available for 1 <= k <= {FINITE_MAX_K}, got {k}")
    if excess < 0:
        raise InvalidArgument(f"excess must be non-negative, got {excess}")
    if cluster_integrals is None:
        cluster_integrals = box_cluster_integrals(k + 1, box, r, samples, seed)
    volume = box.volume
    terms = []
    shared_factor = 0.0
    for collection, phi, weight in _polymer_covers(k, excess):
        overlap = sum(len(v) - 1 for v in collection)
        factor = phi * weight * volume ** (k - overlap) / math.factorial(k)
        if rho is not None:
            factor *= (1 - rho) ** (-sum(len(v) for v in collection)) - 1
        if variant == "printed":
            shared_factor += factor
            continue
        term = CoefficientEstimate.exact(factor)
        for v in collection:
            term = _times(term, cluster_integrals[len(v)])
        terms.append(term)
    if variant == "printed":
        terms.append(cluster_integrals[k + 1].scaled(shared_factor))
    total = sum_estimates(terms)
    logger.debug("Cover series k=%d L=%g (%s): %.6g", k, box.L, variant, total.value)
    truncation = {"k": k, "L": box.L, "excess": excess}
    if rho is not None:
        truncation["variant"] = variant
    return CoefficientEstimate(total.value, total.std_error, total.samples, truncation)


def _times(left: CoefficientEstimate, right: CoefficientEstimate) -> CoefficientEstimate:
    # Correlated factors: linear error propagation
    value = left.value * right.value
    error = abs(left.std_error * right.value) + abs(right.std_error * left.value)
    return CoefficientEstimate(value, error, max(left.samples, right.samples))
