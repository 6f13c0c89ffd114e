"""Undirected communication graphs.

Agents sit on the nodes of a fixed undirected graph; every edge carries
messages in both directions, so most consumers work with the list of
directed pairs (one per orientation).  Graphs are value objects: build
them once, query them everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkGraph",
    "generate_erdos_renyi",
    "neighbors",
    "directed_pairs",
    "dump_edge_list",
    "load_edge_list",
]


@dataclass(frozen=True)
class NetworkGraph:
    """Simple undirected graph on nodes 0..n-1.

    Attributes:
        n: number of nodes (at least 2).
        edges: canonical edge tuple, each entry (lo, hi) with lo < hi,
            sorted lexicographically.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"need at least 2 nodes, got n={self.n}")
        seen = set()
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for e in self.edges:
            i, j = e
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {e} out of range for n={self.n}")
            if i == j:
                raise ValueError(f"self-loop {e} not allowed")
            if i > j:
                raise ValueError(f"edge {e} not in canonical (lo, hi) order")
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            adj[i].add(j)
            adj[j].add(i)
        if list(self.edges) != sorted(self.edges):
            raise ValueError("edges must be sorted lexicographically")
        object.__setattr__(self, "_adj", tuple(tuple(sorted(s)) for s in adj))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_directed_pairs(self) -> int:
        """Directed message channels: two per undirected edge."""
        return 2 * len(self.edges)

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def has_edge(self, i: int, j: int) -> bool:
        lo, hi = (i, j) if i < j else (j, i)
        return hi in self._adj[lo]


def generate_erdos_renyi(n: int, p_edge: float, seed: int) -> NetworkGraph:
    """Sample a G(n, p) graph, deterministically under ``seed``.

    Each unordered pair {i, j} is included independently with probability
    ``p_edge``; pairs are visited in lexicographic order so the draw
    sequence (and hence the graph) is reproducible.  The result may be
    disconnected; callers that care should check.

    Args:
        n: number of nodes, at least 2.
        p_edge: edge probability in [0, 1].
        seed: RNG seed.

    Returns:
        The sampled NetworkGraph.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got n={n}")
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError(f"p_edge must lie in [0, 1], got {p_edge}")
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(n - 1):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                edges.append((i, j))
    return NetworkGraph(n=n, edges=tuple(edges))


def neighbors(g: NetworkGraph, i: int) -> tuple[int, ...]:
    """Sorted neighbors of node i."""
    if not 0 <= i < g.n:
        raise ValueError(f"node {i} out of range for n={g.n}")
    return g._adj[i]


def directed_pairs(g: NetworkGraph) -> list[tuple[int, int]]:
    """All directed pairs (i, j) with {i, j} an edge, lexicographically.

    Pair (i, j) stands for the channel delivering j's decision to agent i;
    both orientations of every edge appear.
    """
    out = []
    for i in range(g.n):
        for j in g._adj[i]:
            out.append((i, j))
    return out


def dump_edge_list(g: NetworkGraph) -> str:
    """Serialize as a text edge list: header ``n=<count>``, then ``i j`` lines."""
    lines = [f"n={g.n}"]
    lines.extend(f"{i} {j}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def load_edge_list(text: str) -> NetworkGraph:
    """Parse the edge-list format produced by dump_edge_list."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("n="):
        raise ValueError("edge list must start with an 'n=<count>' header")
    try:
        n = int(lines[0][2:])
    except ValueError as exc:
        raise ValueError(f"bad node count in header {lines[0]!r}") from exc
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"bad edge line {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if i > j:
            i, j = j, i
        edges.append((i, j))
    return NetworkGraph(n=n, edges=tuple(sorted(edges)))
