"""
Infinite-volume cluster coefficients.

Every coefficient here is a flat-space integral of a graph sum over hard-core
Mayer bonds. The graph sum is read from a GraphSumTable indexed by the
overlap mask of the sampled points, so one vectorized pass handles the whole
family. Free coordinates are drawn uniformly from the smallest cube that
contains the support of the integrand.
"""

import functools
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np

from expansion import graphs
from expansion.errors import InvalidArgument, ResourceLimit
from expansion.estimates import CoefficientEstimate, sample_mean, sum_estimates, uniform_cube_sampler
from expansion.geometry import BoxMetric, SphereSpecies, ball_volume, pair_overlap_mask
from expansion.polymers import ursell

logger = logging.getLogger(__name__)

BETA_MAX_ORDER = 4
COVER_MAX_K = 5
A_INF_MAX_K = 4
B1_MAX_ORDER = 3
C_MAX_VERTICES = 5
C_MAX_BIGS = 3
B_STAR_MAX_CLOUDS = 2


@dataclass(frozen=True)
class CoverSum:
    """
    Tree-like covers of [k+1]: sets of distinct label sets of size >= 2 whose
    union is [k+1] and whose sizes satisfy sum(|V_i| - 1) = k, each with its
    Ursell weight.
    """

    k: int
    collections: Tuple[Tuple[Tuple[FrozenSet[int], ...], int], ...]

    def __len__(self):
        return len(self.collections)

    def total_size(self, collection: Tuple[FrozenSet[int], ...]) -> int:
        return sum(len(v) for v in collection)


def beta_n_exact_1d(n: int, a: float) -> float:
    """Hard-rod irreducible coefficient -(n+1) a^n / n."""
    if n < 1 or a <= 0:
        raise InvalidArgument(f"need n >= 1 and a > 0, got n={n}, a={a}")
    return -(n + 1) * a**n / n


def beta_n(
    n: int, d: int, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """
    (1/n!) times the sum over two-connected graphs on n+1 vertices of the
    integral of the Mayer-bond product, with vertex n+1 pinned at the origin.
    """
    if not 1 <= n <= BETA_MAX_ORDER:
        raise ResourceLimit(f"beta_n is available for 1 <= n <= {BETA_MAX_ORDER}, got {n}")
    table = graphs.two_connected_table(n + 1)
    half_width = 2 * r * n
    metric = BoxMetric.flat(d)
    origin = np.zeros((1, 1, d))

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([points, np.broadcast_to(origin, (len(points), 1, d))], axis=1)
        return table(pair_overlap_mask(tuples, metric, 2 * r)).astype(float)

    estimate = sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (n, d)),
        samples,
        seed,
        shards,
        workers,
        volume=(2 * half_width) ** (n * d) / math.factorial(n),
        truncation={"n": n},
    )
    logger.info("beta_%d (d=%d, r=%g): %.6g +- %.2g", n, d, r, estimate.value, estimate.std_error)
    return estimate


def connected_cluster_integral(
    m: int, d: int, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """Integral of the connected-graph sum on m vertices with one vertex pinned; m=1 gives 1."""
    if m < 1:
        raise InvalidArgument(f"cluster size must be positive, got {m}")
    if m == 1:
        return CoefficientEstimate.exact(1.0, m=1)
    if m == 2:
        return CoefficientEstimate.exact(-ball_volume(d, 2 * r), m=2)
    if m > graphs.DEFAULT_N_MAX:
        raise ResourceLimit(f"connected cluster integrals are available up to {graphs.DEFAULT_N_MAX} vertices")
    table = graphs.connected_table(m)
    half_width = 2 * r * (m - 1)
    metric = BoxMetric.flat(d)

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([points, np.zeros((len(points), 1, d))], axis=1)
        return table(pair_overlap_mask(tuples, metric, 2 * r)).astype(float)

    return sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (m - 1, d)),
        samples,
        seed,
        shards,
        workers,
        volume=(2 * half_width) ** ((m - 1) * d),
        truncation={"m": m},
    )


def cluster_integral_table(
    max_size: int, d: int, r: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> Dict[int, CoefficientEstimate]:
    """Connected cluster integrals c_1..c_max_size, each from its own seed."""
    return {
        m: connected_cluster_integral(m, d, r, samples, child_seed(seed, "cluster", m), shards, workers)
        for m in range(1, max_size + 1)
    }


@functools.lru_cache(maxsize=None)
def cover_sum(k: int) -> CoverSum:
    """
    Tree-like covers of [k+1] by distinct sets, with their Ursell weights.

    Each collection is listed once, unordered. Summing ordered n-tuples
    of the same sets needs a 1/n! to give the same total; without it every
    collection of n sets would count n! times.
    """
    if k < 1:
        raise InvalidArgument(f"cover sums start at k=1, got {k}")
    if k > COVER_MAX_K:
        raise ResourceLimit(f"cover sums are available up to k={COVER_MAX_K}, got {k}")
    universe = frozenset(range(1, k + 2))
    candidates = [frozenset(c) for size in range(2, k + 2) for c in itertools.combinations(sorted(universe), size)]
    found = []

    def extend(start: int, chosen: list, budget: int) -> None:
        if budget == 0:
            if frozenset().union(*chosen) == universe:
                collection = tuple(chosen)
                found.append((collection, ursell(collection)))
            return
        for index in range(start, len(candidates)):
            cost = len(candidates[index]) - 1
            if cost <= budget:
                chosen.append(candidates[index])
                extend(index + 1, chosen, budget - cost)
                chosen.pop()

    extend(0, [], k)
    logger.debug("Cover sum k=%d: %d collections", k, len(found))
    return CoverSum(k=k, collections=tuple(found))


def A_inf(
    k: int,
    rho: float,
    d: int,
    r: float,
    samples: int,
    seed: int,
    variant: str = "printed",
    cluster_integrals: Optional[Mapping[int, CoefficientEstimate]] = None,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """
    Adjustment coefficient at order k.

    ``printed``: (1/k!) c_{k+1} times sum over tree-like covers of
    phi^T [(1-rho)^{-(k+n)} - 1], the l-sum over binomials in closed form.
    ``restricted``: (1/k!) sum over covers of phi^T [..] prod_i c_{|V_i|}.
    """
    if not 0 <= rho < 1:
        raise InvalidArgument(f"A_inf needs 0 <= rho < 1, got {rho}")
    if not 1 <= k <= A_INF_MAX_K:
        raise ResourceLimit(f"A_inf is available for 1 <= k <= {A_INF_MAX_K}, got {k}")
    covers = cover_sum(k)
    truncation = {"k": k, "variant": variant}
    if rho == 0:
        return CoefficientEstimate.exact(0.0, **truncation)
    if cluster_integrals is None:
        cluster_integrals = cluster_integral_table(k + 1, d, r, samples, seed, shards, workers)

    def bracket(collection) -> float:
        return (1 - rho) ** (-covers.total_size(collection)) - 1

    if variant == "printed":
        cover_factor = sum(phi * bracket(collection) for collection, phi in covers.collections)
        estimate = cluster_integrals[k + 1].scaled(cover_factor / math.factorial(k))
    elif variant == "restricted":
        terms = []
        for collection, phi in covers.collections:
            if phi == 0:
                continue
            product = CoefficientEstimate.exact(phi * bracket(collection) / math.factorial(k))
            for v in collection:
                product = _product(product, cluster_integrals[len(v)])
            terms.append(product)
        estimate = sum_estimates(terms)
    else:
        raise InvalidArgument(f"unknown A_inf variant {variant!r}")
    return estimate.with_truncation(**truncation)


def one_big_graph_integral(
    s: int, d: int, r: float, R: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """(1/s!) sum over two-connected graphs on one big (at the origin) and s+1 smalls."""
    if not 1 <= s <= B1_MAX_ORDER:
        raise ResourceLimit(f"one-big graph sums are available for 1 <= s <= {B1_MAX_ORDER}, got {s}")
    species = SphereSpecies(r, R)
    table = graphs.two_connected_table(s + 2)
    thresholds = _one_big_thresholds(s + 2, species)
    half_width = R + r + 2 * r * s
    metric = BoxMetric.flat(d)

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([np.zeros((len(points), 1, d)), points], axis=1)
        return table(pair_overlap_mask(tuples, metric, thresholds)).astype(float)

    return sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (s + 1, d)),
        samples,
        seed,
        shards,
        workers,
        volume=(2 * half_width) ** ((s + 1) * d) / math.factorial(s),
        truncation={"s": s},
    )


def B1_inf(
    s: int,
    d: int,
    r: float,
    R: float,
    rho_R: float,
    samples: int,
    seed: int,
    bound: str = "upper",
    beta: Optional[CoefficientEstimate] = None,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """
    One-big coefficient (1 - rho_R|B|)^{-(s+1)} [-(s+1) beta_s |B_{R+r}| + (1/s!) sum_{B_{1,s+1}} int],
    with |B| = |B_{R+r}| for the upper bound and |B_R| for the lower one.

    Each of the s+1 smalls can be the one pinned to the big by a single
    f^ls bond, whose integral is -|B_{R+r}|. Divided by s+1 the bracket is
    the sum of the slices ``one_big_term(l, k)`` over l + k = s + 1.
    """
    if not 1 <= s <= B1_MAX_ORDER:
        raise ResourceLimit(f"B1_inf is available for 1 <= s <= {B1_MAX_ORDER}, got {s}")
    radius = _bound_radius(bound, r, R)
    base = 1 - rho_R * ball_volume(d, radius)
    if base <= 0:
        raise InvalidArgument(f"prefactor base 1 - rho_R|B| = {base:.4g} must be positive")
    if beta is None:
        beta = beta_n(s, d, r, samples, child_seed(seed, "beta", s), shards, workers)
    first = beta.scaled(-(s + 1) * ball_volume(d, R + r))
    second = one_big_graph_integral(s, d, r, R, samples, child_seed(seed, "one-big", s), shards, workers)
    return (first + second).scaled(base ** (-(s + 1))).with_truncation(s=s, bound=bound)


def one_big_term(
    l: int, k: int, d: int, r: float, R: float, samples: int, seed: int, shards: int = 1, workers: int = 1
) -> CoefficientEstimate:
    """
    Slice of the one-big sum with l smalls touching the big and k further smalls.

    l = 1: -beta_k |B_{R+r}| (beta_0 = 1). l >= 2: (1/(l+k)!) times the sum
    over two-connected one-big graphs on l+k smalls whose big vertex has
    degree l.
    """
    if l < 1 or k < 0:
        raise InvalidArgument(f"need l >= 1 and k >= 0, got l={l}, k={k}")
    shell = ball_volume(d, R + r)
    if l == 1:
        if k == 0:
            return CoefficientEstimate.exact(-shell, l=1, k=0)
        return beta_n(k, d, r, samples, seed, shards, workers).scaled(-shell).with_truncation(l=1, k=k)
    n = l + k + 1
    if n > C_MAX_VERTICES + 1:
        raise ResourceLimit(f"one-big slices are available up to l+k = {C_MAX_VERTICES}")
    species = SphereSpecies(r, R)
    big_edges = [b for b, (i, _) in enumerate(graphs.pair_list(n)) if i == 0]
    masks = [m for m in graphs.two_connected_masks(n) if sum(m >> b & 1 for b in big_edges) == l]
    table = graphs.GraphSumTable(n, masks)
    thresholds = _one_big_thresholds(n, species)
    half_width = R + r + 2 * r * k
    metric = BoxMetric.flat(d)

    def integrand(points: np.ndarray) -> np.ndarray:
        tuples = np.concatenate([np.zeros((len(points), 1, d)), points], axis=1)
        return table(pair_overlap_mask(tuples, metric, thresholds)).astype(float)

    return sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (l + k, d)),
        samples,
        seed,
        shards,
        workers,
        volume=(2 * half_width) ** ((l + k) * d) / math.factorial(l + k),
        truncation={"l": l, "k": k},
    )


def C_factor_terms(
    big_positions: Sequence,
    d: int,
    r: float,
    R: float,
    l_max: int,
    k_max: int,
    samples: int,
    seed: int,
    shards: int = 1,
    workers: int = 1,
) -> Dict[Tuple[int, int], CoefficientEstimate]:
    """
    Density-free terms of the many-big factor, keyed by (l, k).

    Term (l, k) is (1/(k! l!)) times the integral over l white and k black
    smalls of the white-assignment sum (every big gets a non-empty set of
    whites it overlaps, together covering all l) times the articulation-free
    graph sum on the l+k smalls.
    """
    centers = _big_array(big_positions, d)
    m = len(centers)
    if l_max < 1 or k_max < 0:
        raise InvalidArgument(f"need l_max >= 1 and k_max >= 0, got {l_max}, {k_max}")
    if l_max + k_max > C_MAX_VERTICES:
        raise ResourceLimit(f"l_max + k_max = {l_max + k_max} exceeds the cap of {C_MAX_VERTICES}")
    species = SphereSpecies(r, R)
    metric = BoxMetric.flat(d)
    middle = (centers.max(axis=0) + centers.min(axis=0)) / 2
    spread = float(np.max(np.abs(centers - middle)))
    reach = R + r

    terms = {}
    for l in range(1, l_max + 1):
        for k in range(0, k_max + 1):
            truncation = {"l": l, "k": k, "bigs": m}
            if _max_pair_distance(centers) >= 2 * reach + 2 * r * (l + k - 1):
                terms[(l, k)] = CoefficientEstimate.exact(0.0, **truncation)
                continue
            cover = _cover_table(m, l)
            af = graphs.articulation_free_table(l, k)
            half_width = spread + reach + 2 * r * k

            def integrand(points: np.ndarray, l=l, cover=cover, af=af) -> np.ndarray:
                q = points + middle
                index = np.zeros(len(q), dtype=np.int64)
                for j, center in enumerate(centers):
                    for w in range(l):
                        touching = metric.distance(center, q[:, w]) < reach
                        index |= touching.astype(np.int64) << (l * j + w)
                values = cover[index] * af(pair_overlap_mask(q, metric, 2 * species.r))
                return values.astype(float)

            terms[(l, k)] = sample_mean(
                integrand,
                uniform_cube_sampler(half_width, (l + k, d)),
                samples,
                child_seed(seed, "C", l, k),
                shards,
                workers,
                volume=(2 * half_width) ** ((l + k) * d) / (math.factorial(k) * math.factorial(l)),
                truncation=truncation,
            )
    return terms


def C_factor(
    big_positions: Sequence,
    rho_r: float,
    rho_R: float,
    d: int,
    r: float,
    R: float,
    l_max: int,
    k_max: int,
    samples: int,
    seed: int,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """Sum over l <= l_max, k <= k_max of x^{k+l} times the (l, k) term, x = rho_r / (1 - rho_R |B_R|)."""
    _big_array(big_positions, d)
    base = 1 - rho_R * ball_volume(d, R)
    if base <= 0:
        raise InvalidArgument(f"density base 1 - rho_R|B_R| = {base:.4g} must be positive")
    truncation = {"l_max": l_max, "k_max": k_max}
    if rho_r == 0:
        return CoefficientEstimate.exact(0.0, **truncation)
    x = rho_r / base
    terms = C_factor_terms(big_positions, d, r, R, l_max, k_max, samples, seed, shards, workers)
    total = sum_estimates([term.scaled(x ** (l + k)) for (l, k), term in sorted(terms.items())])
    return CoefficientEstimate(total.value, total.std_error, total.samples, truncation)


def single_white_slice(
    big_positions: Sequence, k: int, d: int, r: float, R: float, samples: int, seed: int
) -> CoefficientEstimate:
    """beta_k times the integral over one small of prod_j f^ls(p_j, q); beta_0 = 1."""
    centers = _big_array(big_positions, d)
    metric = BoxMetric.flat(d)
    reach = R + r
    middle = (centers.max(axis=0) + centers.min(axis=0)) / 2
    half_width = float(np.max(np.abs(centers - middle))) + reach

    def integrand(points: np.ndarray) -> np.ndarray:
        q = points[:, 0] + middle
        values = np.ones(len(q))
        for center in centers:
            values *= np.where(metric.distance(center, q) < reach, -1.0, 0.0)
        return values

    lens = sample_mean(
        integrand,
        uniform_cube_sampler(half_width, (1, d)),
        samples,
        child_seed(seed, "lens"),
        volume=(2 * half_width) ** d,
    )
    if k == 0:
        return lens.with_truncation(k=0)
    return _product(lens, beta_n(k, d, r, samples, child_seed(seed, "beta", k))).with_truncation(k=k)


def B_star(
    n: int,
    rho_r: float,
    rho_R: float,
    d: int,
    r: float,
    R: float,
    k_max: int,
    cutoffs: Tuple[int, int],
    samples: int,
    seed: int,
    inner_samples: int = 2_000,
    shards: int = 1,
    workers: int = 1,
) -> CoefficientEstimate:
    """
    Big-sphere coefficient at order n.

    (1/n!) sum over k <= k_max of (1/k!) sum over graphs on n+1 bigs and k
    clouds with no big cut point, integrated over p_1..p_n with p_{n+1} at
    the origin, of the big-big bonds times one many-big factor per cloud.
    The cloud-free graphs are the big-sphere irreducible coefficient; the
    rest is sampled with a fresh inner estimate of every many-big factor.
    """
    if n not in (1, 2):
        raise ResourceLimit(f"B_star is available for n in (1, 2), got {n}")
    if not 0 <= k_max <= B_STAR_MAX_CLOUDS:
        raise ResourceLimit(f"B_star supports up to {B_STAR_MAX_CLOUDS} clouds, got {k_max}")
    l_max, c_k_max = cutoffs
    truncation = {"n": n, "cloud_max": k_max, "l_max": l_max, "k_max": c_k_max}
    big_part = beta_n(n, d, R, samples, child_seed(seed, "big", n), shards, workers)
    if rho_r == 0 or k_max == 0:
        return big_part.with_truncation(**truncation)

    n_bigs = n + 1
    big_pairs = graphs.pair_index(n_bigs)
    families = []
    for k in range(1, k_max + 1):
        for g, hyper in graphs.enum_big_two_connected(n_bigs, k):
            ll_mask = 0
            for i, j in g.edges:
                if j < n_bigs:
                    ll_mask |= 1 << big_pairs[(i, j)]
            sign = -1.0 if bin(ll_mask).count("1") % 2 else 1.0
            families.append((ll_mask, sign / math.factorial(k), tuple(tuple(sorted(J)) for J in hyper)))
    logger.info("B_star n=%d: %d cloud graphs up to %d clouds", n, len(families), k_max)

    reach = 2 * (R + r) + 2 * r * (l_max + c_k_max - 1)
    half_width = n * max(2 * R, reach)
    metric = BoxMetric.flat(d)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        positions = rng.uniform(-half_width, half_width, size=(size, n * d))
        # one inner seed per outer sample, exact in float64
        inner = rng.integers(0, 2**52, size=(size, 1)).astype(float)
        return np.concatenate([positions, inner], axis=1)

    def integrand(rows: np.ndarray) -> np.ndarray:
        values = np.zeros(len(rows))
        for index, row in enumerate(rows):
            bigs = np.vstack([row[:-1].reshape(n, d), np.zeros((1, d))])
            overlap = int(pair_overlap_mask(bigs[None], metric, 2 * R)[0])
            inner_seed = int(row[-1])
            factors: Dict[Tuple[int, ...], float] = {}
            total = 0.0
            for ll_mask, weight, hyperedges in families:
                if ll_mask & ~overlap:
                    continue
                product = weight
                for J in hyperedges:
                    if J not in factors:
                        factors[J] = C_factor(
                            bigs[list(J)], rho_r, rho_R, d, r, R, l_max, c_k_max,
                            inner_samples, child_seed(inner_seed, *J),
                        ).value
                    product *= factors[J]
                    if product == 0:
                        break
                total += product
            values[index] = total
        return values

    cloud_part = sample_mean(
        integrand,
        sampler,
        samples,
        child_seed(seed, "clouds", n),
        shards,
        workers,
        volume=(2 * half_width) ** (n * d) / math.factorial(n),
    )
    logger.info("B_star n=%d: big part %.6g, cloud part %.6g +- %.2g", n, big_part.value, cloud_part.value, cloud_part.std_error)
    return (big_part + cloud_part).with_truncation(**truncation)


def child_seed(seed: int, *keys) -> int:
    """Deterministic sub-seed for a named sub-computation."""
    entropy = [seed] + [_key_entropy(key) for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _key_entropy(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return int.from_bytes(str(key).encode("utf-8")[:8].ljust(8, b"\0"), "little")


def _product(left: CoefficientEstimate, right: CoefficientEstimate) -> CoefficientEstimate:
    value = left.value * right.value
    error = math.hypot(left.std_error * right.value, right.std_error * left.value)
    return CoefficientEstimate(value, error, max(left.samples, right.samples), dict(left.truncation))


def _bound_radius(bound: str, r: float, R: float) -> float:
    if bound == "upper":
        return R + r
    if bound == "lower":
        return R
    raise InvalidArgument(f"bound must be 'upper' or 'lower', got {bound!r}")


def _one_big_thresholds(n: int, species: SphereSpecies) -> np.ndarray:
    # vertex 0 is the big sphere
    thresholds = np.full((n, n), 2 * species.r)
    thresholds[0, :] = thresholds[:, 0] = species.R + species.r
    return thresholds


def _big_array(big_positions: Sequence, d: int) -> np.ndarray:
    centers = np.asarray(big_positions, dtype=float)
    if centers.size == 0:
        raise InvalidArgument("the many-big factor needs at least one big sphere")
    centers = centers.reshape(-1, d)
    if len(centers) > C_MAX_BIGS:
        raise ResourceLimit(f"many-big factors are available for up to {C_MAX_BIGS} bigs, got {len(centers)}")
    return centers


def _max_pair_distance(centers: np.ndarray) -> float:
    if len(centers) < 2:
        return 0.0
    return max(float(np.linalg.norm(x - y)) for x, y in itertools.combinations(centers, 2))


@functools.lru_cache(maxsize=None)
def _cover_table(m: int, l: int) -> np.ndarray:
    # Bit l*j + w: big j touches white w. Entry: sum over non-empty A_j within
    # the touching sets, jointly covering all whites, of (-1)^(sum |A_j|).
    n_bits = m * l
    table = np.zeros(1 << n_bits, dtype=np.int64)
    full = (1 << l) - 1
    for assignment in itertools.product(range(1, full + 1), repeat=m):
        union = 0
        for subset in assignment:
            union |= subset
        if union != full:
            continue
        index = sum(subset << (l * j) for j, subset in enumerate(assignment))
        table[index] += -1 if sum(bin(s).count("1") for s in assignment) % 2 else 1
    return graphs.subset_sum(table, n_bits)
