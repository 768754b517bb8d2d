"""Time-varying neighbour graphs from vehicle positions or random draws.

A neighbour of vehicle i is a vehicle whose broadcast i receives. Graphs are
immutable snapshots, directed in general (random draws), symmetric by
construction for the radius rule. Distance is the 1-D road coordinate; lane
separation is orders of magnitude below V2V range and is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NeighborGraph:
    """Adjacency lists for one round; entry i holds the ids i listens to."""

    round_index: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for i, nbrs in enumerate(self.adjacency):
            if i in nbrs:
                raise ValueError(f"vehicle {i} listed as its own neighbour")
            for j in nbrs:
                if not (0 <= j < self.size):
                    raise ValueError(f"neighbour id {j} out of range for size {self.size}")

    @property
    def size(self) -> int:
        return len(self.adjacency)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def mean_degree(self) -> float:
        if self.size == 0:
            return 0.0
        return sum(len(a) for a in self.adjacency) / self.size

    def edges(self):
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                yield (i, j)


def radius_graph(
    positions: np.ndarray,
    radius: float,
    round_index: int = 0,
    ring_length: float | None = None,
) -> NeighborGraph:
    """j is a neighbour of i iff |pos_j - pos_i| <= radius (and j != i).

    Symmetric by construction. With `ring_length` the road is circular and
    distance is taken around the ring.
    """
    if radius < 0.0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    adj: list[tuple[int, ...]] = []
    for i in range(n):
        d = np.abs(pos - pos[i])
        if ring_length is not None:
            d = np.minimum(d, ring_length - d)
        close = np.nonzero(d <= radius)[0]
        adj.append(tuple(int(j) for j in close if j != i))
    return NeighborGraph(round_index, tuple(adj))


def complete_graph(n: int, round_index: int = 0) -> NeighborGraph:
    everyone = tuple(range(n))
    adj = tuple(tuple(j for j in everyone if j != i) for i in range(n))
    return NeighborGraph(round_index, adj)


def random_graph(
    n: int,
    p_edge: float,
    rng: np.random.Generator,
    round_index: int = 0,
) -> NeighborGraph:
    """Directed graph with each edge present independently with prob p_edge."""
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError(f"p_edge must lie in [0, 1], got {p_edge}")
    draws = rng.random((n, n)) < p_edge
    np.fill_diagonal(draws, False)
    adj = tuple(tuple(int(j) for j in np.nonzero(draws[i])[0]) for i in range(n))
    return NeighborGraph(round_index, adj)


def union_strongly_connected(graphs: list[NeighborGraph]) -> bool:
    """Whether the union of the window's edge sets is strongly connected.

    Standard iterative Tarjan over the union adjacency; n = 0 or 1 counts as
    connected.
    """
    if not graphs:
        raise ValueError("empty graph window")
    n = graphs[0].size
    for g in graphs:
        if g.size != n:
            raise ValueError("all graphs in the window must share the vehicle set")
    if n <= 1:
        return True
    union: list[set[int]] = [set() for _ in range(n)]
    for g in graphs:
        for i, nbrs in enumerate(g.adjacency):
            union[i].update(nbrs)
    return len(strongly_connected_components([sorted(s) for s in union])) == 1


def strongly_connected_components(adjacency: list[list[int]]) -> list[list[int]]:
    """Tarjan's algorithm, non-recursive."""
    n = len(adjacency)
    preorder: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    found: set[int] = set()
    stack_alt: list[int] = []
    components: list[list[int]] = []
    counter = 0
    for source in range(n):
        if source in found:
            continue
        queue = [source]
        while queue:
            v = queue[-1]
            if v not in preorder:
                counter += 1
                preorder[v] = counter
            done = True
            for w in adjacency[v]:
                if w not in preorder:
                    queue.append(w)
                    done = False
                    break
            if not done:
                continue
            lowlink[v] = preorder[v]
            for w in adjacency[v]:
                if w not in found:
                    lowlink[v] = min(lowlink[v], lowlink[w] if preorder[w] > preorder[v] else preorder[w])
            queue.pop()
            if lowlink[v] == preorder[v]:
                found.add(v)
                comp = [v]
                while stack_alt and preorder[stack_alt[-1]] > preorder[v]:
                    k = stack_alt.pop()
                    found.add(k)
                    comp.append(k)
                components.append(comp)
            else:
                stack_alt.append(v)
    return components
