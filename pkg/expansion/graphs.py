"""
Labeled graph families used by the cluster coefficients.

Graphs on n vertices are enumerated as subsets of the candidate edge set and
filtered by connectivity, cut-point and degree constraints. Edge sets are
kept as bitmasks over the lexicographic pair order so that a whole family can
be folded into a GraphSumTable: for hard-core bonds the sum over a family of
products of Mayer functions only depends on which pairs overlap, and the table
maps that overlap mask to the signed graph count.
"""

import functools
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np

from expansion.errors import InvalidArgument, ResourceLimit

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 7
DEFAULT_BIPARTITE_MAX = 8

BIG = "big"
SMALL = "small"
CLOUD = "cloud"
_COLOR_CHARS = {BIG: "b", SMALL: "s", CLOUD: "c"}


@dataclass(frozen=True)
class ColoredGraph:
    """Labeled graph on vertices 0..n-1 with a color per vertex."""

    n_vertices: int
    colors: Tuple[str, ...]
    edges: FrozenSet[Tuple[int, int]]
    white_set: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if len(self.colors) != self.n_vertices:
            raise InvalidArgument(f"{len(self.colors)} colors given for {self.n_vertices} vertices")
        for i, j in self.edges:
            if i == j:
                raise InvalidArgument(f"self-loop at vertex {i}")
            if not (0 <= i < j < self.n_vertices):
                raise InvalidArgument(f"edge ({i}, {j}) is not an ordered pair of vertices")
        for v in self.white_set:
            if self.colors[v] != SMALL:
                raise InvalidArgument(f"white vertex {v} is not a small sphere")

    @classmethod
    def from_edges(
        cls,
        n_vertices: int,
        edges: Iterable[Tuple[int, int]],
        colors: Sequence[str] | None = None,
        white_set: Iterable[int] = (),
    ) -> "ColoredGraph":
        normalized = frozenset((min(i, j), max(i, j)) for i, j in edges)
        return cls(
            n_vertices=n_vertices,
            colors=tuple(colors) if colors is not None else (SMALL,) * n_vertices,
            edges=normalized,
            white_set=frozenset(white_set),
        )

    @classmethod
    def from_mask(cls, n_vertices: int, mask: int, colors: Sequence[str] | None = None) -> "ColoredGraph":
        pairs = pair_list(n_vertices)
        return cls.from_edges(n_vertices, [pairs[b] for b in range(len(pairs)) if mask >> b & 1], colors)

    @property
    def edge_mask(self) -> int:
        index = pair_index(self.n_vertices)
        mask = 0
        for edge in self.edges:
            mask |= 1 << index[edge]
        return mask

    def vertices_of(self, color: str) -> List[int]:
        return [v for v, c in enumerate(self.colors) if c == color]

    def neighbors(self, v: int) -> FrozenSet[int]:
        return frozenset(j if i == v else i for i, j in self.edges if v in (i, j))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_vertices))
        graph.add_edges_from(self.edges)
        return graph

    def is_connected(self) -> bool:
        return self.n_vertices <= 1 or nx.is_connected(self.to_networkx())

    def to_text(self) -> str:
        """Canonical text form: vertex count, color string, sorted edge list."""
        color_string = "".join(_COLOR_CHARS[c] for c in self.colors)
        edge_string = ",".join(f"{i}-{j}" for i, j in sorted(self.edges))
        return f"{self.n_vertices} {color_string} {edge_string}".rstrip()


@dataclass(frozen=True)
class Hyperedges:
    """Big-vertex neighbourhoods of the cloud vertices, one per cloud."""

    sets: Tuple[FrozenSet[int], ...]

    def __iter__(self):
        return iter(self.sets)

    def __len__(self):
        return len(self.sets)


# ---------------------------------------------------------------------------
# Pair indexing
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def pair_list(n: int) -> Tuple[Tuple[int, int], ...]:
    return tuple(itertools.combinations(range(n), 2))


@functools.lru_cache(maxsize=None)
def pair_index(n: int) -> Dict[Tuple[int, int], int]:
    return {pair: b for b, pair in enumerate(pair_list(n))}


# ---------------------------------------------------------------------------
# Classification predicates
# ---------------------------------------------------------------------------


def cut_points(g: ColoredGraph) -> FrozenSet[int]:
    """Vertices whose removal disconnects a connected graph."""
    _require_connected(g)
    return frozenset(nx.articulation_points(g.to_networkx()))


def articulation_vertices(g: ColoredGraph, white_set: Iterable[int]) -> FrozenSet[int]:
    """
    Vertices whose removal splits g into pieces, at least one of them with no
    white vertex. With no white vertices this is the cut-point set.
    """
    _require_connected(g)
    whites = frozenset(white_set)
    graph = g.to_networkx()
    result = set()
    for v in graph.nodes:
        rest = graph.subgraph(u for u in graph.nodes if u != v)
        pieces = list(nx.connected_components(rest))
        if len(pieces) >= 2 and any(not (piece & whites) for piece in pieces):
            result.add(v)
    return frozenset(result)


def is_bipartite_star(g: ColoredGraph, connected_only: bool = False) -> bool:
    """Every cloud has at least two big neighbours and no cloud neighbour."""
    clouds = set(g.vertices_of(CLOUD))
    for c in clouds:
        neighbors = g.neighbors(c)
        if neighbors & clouds:
            return False
        if sum(1 for v in neighbors if g.colors[v] == BIG) < 2:
            return False
    if any(g.colors[v] != BIG for v in range(g.n_vertices) if v not in clouds):
        return False
    return g.is_connected() if connected_only else True


def is_big_two_connected(g: ColoredGraph) -> bool:
    """Connected bipartite-star graph in which no big vertex is a cut point."""
    if not is_bipartite_star(g, connected_only=True):
        return False
    bigs = set(g.vertices_of(BIG))
    return not (cut_points(g) & bigs)


def hyperedges(g: ColoredGraph) -> Hyperedges:
    return Hyperedges(tuple(frozenset(v for v in g.neighbors(c) if g.colors[v] == BIG) for c in g.vertices_of(CLOUD)))


# ---------------------------------------------------------------------------
# Enumerators
# ---------------------------------------------------------------------------


def enum_connected(n: int, n_max: int = DEFAULT_N_MAX) -> List[ColoredGraph]:
    """All labeled connected graphs on n vertices."""
    _check_size(n, 1, n_max, "connected graphs")
    return [ColoredGraph.from_mask(n, m) for m in connected_masks(n)]


def enum_two_connected(n: int, n_max: int = DEFAULT_N_MAX) -> List[ColoredGraph]:
    """All labeled connected graphs on n vertices without cut points; n=2 is the single edge."""
    _check_size(n, 2, n_max, "two-connected graphs")
    return [ColoredGraph.from_mask(n, m) for m in two_connected_masks(n)]


def enum_bipartite_star(
    m: int, k: int, connected_only: bool, limit: int = DEFAULT_BIPARTITE_MAX
) -> List[ColoredGraph]:
    """
    Graphs on m big and k cloud vertices (bigs first) with no cloud-cloud
    edges and every cloud adjacent to at least two bigs.
    """
    if m + k < 1:
        raise InvalidArgument("need at least one vertex")
    if m + k > limit:
        raise ResourceLimit(f"bipartite class with m+k={m + k} exceeds the cap of {limit}")
    colors = (BIG,) * m + (CLOUD,) * k
    big_pairs = list(itertools.combinations(range(m), 2))
    neighbor_sets = [s for size in range(2, m + 1) for s in itertools.combinations(range(m), size)]

    graphs = []
    for big_bits in range(1 << len(big_pairs)):
        big_edges = [big_pairs[b] for b in range(len(big_pairs)) if big_bits >> b & 1]
        for choice in itertools.product(neighbor_sets, repeat=k):
            edges = list(big_edges)
            for c, nbrs in enumerate(choice):
                edges.extend((v, m + c) for v in nbrs)
            g = ColoredGraph.from_edges(m + k, edges, colors)
            if not connected_only or _mask_connected(m + k, g.edge_mask):
                graphs.append(g)
    return graphs


def enum_big_two_connected(
    n: int, k: int, limit: int = DEFAULT_BIPARTITE_MAX
) -> List[Tuple[ColoredGraph, Hyperedges]]:
    """Connected bipartite-star graphs on n bigs and k clouds with no big cut point."""
    if n < 1 or (n < 2 and k == 0) or k < 0:
        raise InvalidArgument(f"need n >= 2, or n >= 1 with clouds; got n={n}, k={k}")
    result = []
    for g in enum_bipartite_star(n, k, connected_only=True, limit=limit):
        if not (_mask_cut_vertices(g.n_vertices, g.edge_mask) & ((1 << n) - 1)):
            result.append((g, hyperedges(g)))
    return result


def enum_articulation_free(l: int, k: int, n_max: int = DEFAULT_N_MAX) -> List[ColoredGraph]:
    """
    Connected graphs on l white and k black small vertices (whites first)
    without articulation vertices.
    """
    if l < 1 or k < 0:
        raise InvalidArgument(f"need l >= 1 and k >= 0, got l={l}, k={k}")
    n = l + k
    _check_size(n, 1, n_max, "articulation-free graphs")
    pairs = pair_list(n)
    return [
        ColoredGraph.from_edges(
            n, [pairs[b] for b in range(len(pairs)) if mask >> b & 1], white_set=range(l)
        )
        for mask in articulation_free_masks(l, k)
    ]


def enum_one_big_two_connected(s: int, n_max: int = DEFAULT_N_MAX) -> List[ColoredGraph]:
    """Two-connected graphs on one big vertex (vertex 0) and s+1 small vertices."""
    n = s + 2
    _check_size(n, 2, n_max, "one-big two-connected graphs")
    colors = (BIG,) + (SMALL,) * (s + 1)
    return [ColoredGraph.from_mask(n, m, colors) for m in two_connected_masks(n)]


# ---------------------------------------------------------------------------
# Mask-level enumeration (cached)
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def connected_masks(n: int) -> Tuple[int, ...]:
    return tuple(m for m in range(1 << len(pair_list(n))) if _mask_connected(n, m))


@functools.lru_cache(maxsize=None)
def two_connected_masks(n: int) -> Tuple[int, ...]:
    if n == 2:
        return (1,)
    return tuple(m for m in connected_masks(n) if not _mask_cut_vertices(n, m))


@functools.lru_cache(maxsize=None)
def articulation_free_masks(l: int, k: int) -> Tuple[int, ...]:
    n = l + k
    white_bits = (1 << l) - 1
    result = []
    for mask in connected_masks(n):
        adjacency = _adjacency(n, mask)
        if not any(_splits_off_black_piece(n, adjacency, v, white_bits) for v in range(n)):
            result.append(mask)
    return tuple(result)


class GraphSumTable:
    """
    Signed graph count indexed by overlap mask.

    For a family of graphs with edge masks E(g), ``table[m]`` is the sum of
    (-1)^|E(g)| over graphs with E(g) contained in m: the value of
    sum_g prod_{e in E(g)} f_e when the pairs in m overlap and the others do not.
    """

    def __init__(self, n_vertices: int, masks: Iterable[int]):
        self.n_vertices = n_vertices
        self.n_pairs = len(pair_list(n_vertices))
        table = np.zeros(1 << self.n_pairs, dtype=np.int64)
        for mask in masks:
            table[mask] += -1 if bin(mask).count("1") % 2 else 1
        self.table = subset_sum(table, self.n_pairs)

    def __call__(self, overlap_masks) -> np.ndarray:
        return self.table[np.asarray(overlap_masks, dtype=np.int64)]


def subset_sum(table: np.ndarray, n_bits: int) -> np.ndarray:
    """In place: table[m] becomes the sum of the original entries over all submasks of m."""
    for bit in range(n_bits):
        view = table.reshape(-1, 2, 1 << bit)
        view[:, 1, :] += view[:, 0, :]
    return table


@functools.lru_cache(maxsize=None)
def connected_table(n: int) -> GraphSumTable:
    return GraphSumTable(n, connected_masks(n))


@functools.lru_cache(maxsize=None)
def two_connected_table(n: int) -> GraphSumTable:
    return GraphSumTable(n, two_connected_masks(n))


@functools.lru_cache(maxsize=None)
def articulation_free_table(l: int, k: int) -> GraphSumTable:
    return GraphSumTable(l + k, articulation_free_masks(l, k))


def overlap_mask(overlap_by_pair: Sequence[np.ndarray]) -> np.ndarray:
    """Pack per-pair boolean overlap arrays (lexicographic pair order) into masks."""
    mask = np.zeros(np.shape(overlap_by_pair[0]) if overlap_by_pair else (), dtype=np.int64)
    for bit, overlapping in enumerate(overlap_by_pair):
        mask |= np.asarray(overlapping, dtype=np.int64) << bit
    return mask


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _check_size(n: int, lowest: int, n_max: int, what: str) -> None:
    if n < lowest:
        raise InvalidArgument(f"{what} need at least {lowest} vertices, got {n}")
    if n > n_max:
        raise ResourceLimit(f"{what} on {n} vertices exceed the cap of {n_max}")


def _require_connected(g: ColoredGraph) -> None:
    if not g.is_connected():
        raise InvalidArgument(f"graph {g.to_text()!r} is not connected")


def _adjacency(n: int, mask: int) -> List[int]:
    adjacency = [0] * n
    for b, (i, j) in enumerate(pair_list(n)):
        if mask >> b & 1:
            adjacency[i] |= 1 << j
            adjacency[j] |= 1 << i
    return adjacency


def _reach(adjacency: List[int], start: int, allowed: int) -> int:
    seen = 1 << start
    frontier = seen
    while frontier:
        nxt = 0
        v = 0
        f = frontier
        while f:
            if f & 1:
                nxt |= adjacency[v]
            f >>= 1
            v += 1
        nxt &= allowed & ~seen
        seen |= nxt
        frontier = nxt
    return seen


def _mask_connected(n: int, mask: int) -> bool:
    if n <= 1:
        return True
    full = (1 << n) - 1
    return _reach(_adjacency(n, mask), 0, full) == full


def _mask_cut_vertices(n: int, mask: int) -> int:
    if n <= 2:
        return 0
    adjacency = _adjacency(n, mask)
    full = (1 << n) - 1
    cuts = 0
    for v in range(n):
        allowed = full & ~(1 << v)
        start = 0 if v != 0 else 1
        if _reach(adjacency, start, allowed) != allowed:
            cuts |= 1 << v
    return cuts


def _splits_off_black_piece(n: int, adjacency: List[int], v: int, white_bits: int) -> bool:
    remaining = ((1 << n) - 1) & ~(1 << v)
    pieces = 0
    black_piece = False
    while remaining:
        start = (remaining & -remaining).bit_length() - 1
        piece = _reach(adjacency, start, remaining)
        remaining &= ~piece
        pieces += 1
        if not piece & white_bits:
            black_piece = True
    return pieces >= 2 and black_piece
