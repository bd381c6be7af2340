"""Communication graphs, task matrices, and combinatorial graph diagnostics.

Vertices are 0-indexed agent ids. Every neighborhood N_i contains i itself and
is sorted ascending, which is also the local-index order used by the cliques.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from mtcool.domain import DomainError, DominationError, EdgeListError, GraphSizeError

logger = logging.getLogger(__name__)

DEFAULT_EXACT_LIMIT = 16
UNIT_BALL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GraphTopology:
    """Undirected graph with self-inclusive neighborhoods."""

    n: int
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"graph needs at least one vertex, got n={self.n}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise DomainError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise DomainError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @cached_property
    def neighborhoods(self) -> tuple[tuple[int, ...], ...]:
        members: list[set[int]] = [{i} for i in range(self.n)]
        for i, j in self.edges:
            members[i].add(j)
            members[j].add(i)
        return tuple(tuple(sorted(group)) for group in members)

    @property
    def n_min(self) -> int:
        return min(len(group) for group in self.neighborhoods)

    @property
    def n_max(self) -> int:
        return max(len(group) for group in self.neighborhoods)

    def degree_of(self, i: int) -> int:
        return len(self.neighborhoods[i]) - 1

    @property
    def regular_degree(self) -> int | None:
        """The common degree K when the graph is K-regular, else None."""
        degrees = {self.degree_of(i) for i in range(self.n)}
        return degrees.pop() if len(degrees) == 1 else None

    def adjacency_matrix(self) -> np.ndarray:
        adjacency = np.zeros((self.n, self.n))
        for i, j in self.edges:
            adjacency[i, j] = adjacency[j, i] = 1.0
        return adjacency

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(sorted(self.edges))
        return graph

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> GraphTopology:
        relabeled = nx.convert_node_labels_to_integers(graph, ordering="sorted")
        return cls(relabeled.number_of_nodes(), frozenset(relabeled.edges()))

    @classmethod
    def from_neighborhoods(
        cls, neighborhoods: Sequence[Iterable[int]],
    ) -> GraphTopology:
        """Rebuild a graph from self-inclusive neighborhoods, checking symmetry."""
        groups = [set(group) for group in neighborhoods]
        edges = set()
        for i, group in enumerate(groups):
            if i not in group:
                raise DomainError(f"neighborhood of {i} does not contain {i}")
            for j in group - {i}:
                if not 0 <= j < len(groups) or i not in groups[j]:
                    raise DomainError(f"asymmetric neighborhoods at ({i}, {j})")
                edges.add((min(i, j), max(i, j)))
        return cls(len(groups), frozenset(edges))

    def to_edge_list(self) -> str:
        lines = [f"n={self.n}"]
        lines.extend(f"{i} {j}" for i, j in sorted(self.edges))
        return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> GraphTopology:
    """Parse the `n=<count>` header plus `i j` lines; `#` starts a comment."""
    n = None
    edges = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            if not line.startswith("n="):
                raise EdgeListError(line_number, "expected header 'n=<count>'")
            try:
                n = int(line[2:])
            except ValueError:
                raise EdgeListError(line_number, f"bad vertex count {line[2:]!r}") from None
            if n < 1:
                raise EdgeListError(line_number, "vertex count must be positive")
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(line_number, f"expected 'i j', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(line_number, f"non-integer vertex in {line!r}") from None
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise EdgeListError(line_number, f"invalid edge ({i}, {j}) for n={n}")
        edges.append((i, j))
    if n is None:
        raise EdgeListError(1, "missing header 'n=<count>'")
    return GraphTopology(n, frozenset(edges))


def erdos_renyi(n: int, p: float, seed: int | None = None) -> GraphTopology:
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"edge probability must lie in [0, 1], got {p}")
    return GraphTopology.from_networkx(nx.gnp_random_graph(n, p, seed=seed))


def complete_graph(n: int) -> GraphTopology:
    return GraphTopology.from_networkx(nx.complete_graph(n))


def path_graph(n: int) -> GraphTopology:
    return GraphTopology.from_networkx(nx.path_graph(n))


def cycle_graph(n: int) -> GraphTopology:
    if n < 3:
        raise DomainError(f"a cycle needs at least 3 vertices, got {n}")
    return GraphTopology.from_networkx(nx.cycle_graph(n))


def empty_graph(n: int) -> GraphTopology:
    return GraphTopology(n)


def clique_union(sizes: Sequence[int]) -> GraphTopology:
    """Disjoint union of cliques; the number of cliques is len(sizes)."""
    if not sizes or min(sizes) < 1:
        raise DomainError(f"clique sizes must be positive, got {list(sizes)}")
    union = nx.disjoint_union_all([nx.complete_graph(size) for size in sizes])
    return GraphTopology.from_networkx(union)


def random_regular(k: int, n: int, seed: int | None = None) -> GraphTopology:
    if k >= n or (k * n) % 2:
        raise DomainError(f"no {k}-regular graph on {n} vertices")
    return GraphTopology.from_networkx(nx.random_regular_graph(k, n, seed=seed))


def laplacian(g: GraphTopology) -> np.ndarray:
    """Combinatorial Laplacian D - Adj; degrees exclude self-loops."""
    matrix = nx.laplacian_matrix(g.to_networkx(), nodelist=range(g.n))
    return matrix.toarray().astype(float)


@dataclass(frozen=True)
class GraphStats:
    alpha: int
    gamma: int
    alpha2: int
    is_regular: int | None
    approximate: bool
    independent_set: tuple[int, ...]
    dominating_set: tuple[int, ...]
    twice_independent_set: tuple[int, ...]


def _open_masks(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    masks = [0] * n
    for i, j in edges:
        masks[i] |= 1 << j
        masks[j] |= 1 << i
    return masks


def _as_mask(vertices: Iterable[int]) -> int:
    mask = 0
    for v in vertices:
        mask |= 1 << v
    return mask


def _exact_independent(n: int, masks: list[int]) -> tuple[int, ...]:
    # Independent sets are closed under subsets, so stop at the first empty size.
    best: tuple[int, ...] = (0,)
    for size in range(2, n + 1):
        found = None
        for combo in combinations(range(n), size):
            mask = _as_mask(combo)
            if all(masks[v] & mask == 0 for v in combo):
                found = combo
                break
        if found is None:
            break
        best = found
    return best


def _exact_dominating(n: int, masks: list[int]) -> tuple[int, ...]:
    full = (1 << n) - 1
    closed = [masks[v] | (1 << v) for v in range(n)]
    for size in range(1, n + 1):
        for combo in combinations(range(n), size):
            covered = 0
            for v in combo:
                covered |= closed[v]
            if covered == full:
                return combo
    return tuple(range(n))


def _greedy_independent(n: int, masks: list[int]) -> tuple[int, ...]:
    remaining = set(range(n))
    chosen = []
    while remaining:
        v = min(remaining, key=lambda u: (bin(masks[u] & _as_mask(remaining)).count("1"), u))
        chosen.append(v)
        remaining -= {u for u in remaining if u == v or masks[v] >> u & 1}
    return tuple(sorted(chosen))


def _greedy_dominating(n: int, masks: list[int]) -> tuple[int, ...]:
    closed = [masks[v] | (1 << v) for v in range(n)]
    uncovered = (1 << n) - 1
    chosen = []
    while uncovered:
        v = max(range(n), key=lambda u: (bin(closed[u] & uncovered).count("1"), -u))
        chosen.append(v)
        uncovered &= ~closed[v]
    return tuple(sorted(chosen))


def graph_stats(
    g: GraphTopology,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    exact: bool | None = None,
) -> GraphStats:
    """Independence, domination and twice-independence numbers of g.

    exact=None enumerates subsets when n <= exact_limit and otherwise falls
    back to greedy bounds flagged as approximate. exact=True above the limit
    is rejected. Twice-independent sets are independent sets of the square
    graph, i.e. members at pairwise distance at least 3.
    """
    if exact is None:
        exact = g.n <= exact_limit
    elif exact and g.n > exact_limit:
        raise GraphSizeError(
            f"exact graph statistics capped at n={exact_limit}, got n={g.n}")
    masks = _open_masks(g.n, g.edges)
    square = nx.power(g.to_networkx(), 2) if g.edges else g.to_networkx()
    square_masks = _open_masks(g.n, square.edges())
    if exact:
        independent = _exact_independent(g.n, masks)
        dominating = _exact_dominating(g.n, masks)
        twice = _exact_independent(g.n, square_masks)
    else:
        logger.warning("graph statistics for n=%d are greedy approximations", g.n)
        independent = _greedy_independent(g.n, masks)
        dominating = _greedy_dominating(g.n, masks)
        twice = _greedy_independent(g.n, square_masks)
    return GraphStats(
        alpha=len(independent),
        gamma=len(dominating),
        alpha2=len(twice),
        is_regular=g.regular_degree,
        approximate=not exact,
        independent_set=independent,
        dominating_set=dominating,
        twice_independent_set=twice,
    )


def is_dominating(g: GraphTopology, vertices: Iterable[int]) -> bool:
    chosen = set(vertices)
    return all(chosen.intersection(group) for group in g.neighborhoods)


def dominating_delegation(
    g: GraphTopology, dom_set: Iterable[int],
) -> tuple[int, ...]:
    """Map every vertex to the smallest-index dominator in its neighborhood."""
    chosen = set(dom_set)
    delegates = []
    for i, group in enumerate(g.neighborhoods):
        candidates = chosen.intersection(group)
        if not candidates:
            raise DominationError(i)
        delegates.append(min(candidates))
    return tuple(delegates)


@dataclass(frozen=True, eq=False)
class TaskMatrix:
    """N comparator rows in the d-dimensional unit ball."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DomainError(f"task matrix must be N x d, got shape {rows.shape}")
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms > 1.0 + UNIT_BALL_TOLERANCE):
            worst = int(np.argmax(norms))
            raise DomainError(f"row {worst} has norm {norms[worst]:.6g} > 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def task_variance(rows: np.ndarray) -> float:
    """Average squared distance of rows from their mean, with N-1 normalization."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] < 2:
        return 0.0
    centered = rows - rows.mean(axis=0)
    return float(np.sum(centered * centered) / (rows.shape[0] - 1))


@dataclass(frozen=True)
class VarianceProfile:
    sigma_global: float
    sigma_local: tuple[float, ...]
    sigma_max: float
    sigma_min: float
    sigma_bar: float
    delta_sq: float
    d: int = 1

    @property
    def sigma_bar_std(self) -> float:
        """Average local task standard deviation per coordinate, the sweep x-coordinate.

        Local variances sum over all d coordinates, hence the division by d.
        """
        return float(np.sqrt(self.sigma_bar / self.d))


def variance_profile(u: TaskMatrix, g: GraphTopology) -> VarianceProfile:
    # The pairwise form (1/(2N(N-1))) sum ||U_i - U_i'||^2 equals task_variance.
    if u.n != g.n:
        raise DomainError(f"task matrix has {u.n} rows for a graph on {g.n} vertices")
    local = tuple(task_variance(u.rows[list(group)]) for group in g.neighborhoods)
    delta_sq = max(
        (float(np.sum((u.rows[i] - u.rows[j]) ** 2)) for i, j in g.edges),
        default=0.0,
    )
    return VarianceProfile(
        sigma_global=task_variance(u.rows),
        sigma_local=local,
        sigma_max=max(local),
        sigma_min=min(local),
        sigma_bar=float(np.mean(local)),
        delta_sq=delta_sq,
        d=u.d,
    )
