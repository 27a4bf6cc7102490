"""Hysteretic proximity graph and flow subgraph queries."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Optional, Set, Tuple

import numpy as np

from routeswarm.model import Params

log = logging.getLogger(__name__)

Edge = Tuple[int, int]


def _key(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class EdgeSet:
    """Immutable snapshot of undirected links, stored as ``(low, high)`` pairs.

    ``established`` maps each pair to the tick at which the link formed.
    """

    edges: FrozenSet[Edge] = frozenset()
    established: Mapping[Edge, int] = field(default_factory=dict)

    def __post_init__(self):
        for i, j in self.edges:
            if i >= j:
                raise ValueError(f"edge ({i}, {j}) is not normalised or is a self-loop")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]], tick: int = 0) -> "EdgeSet":
        es = set()
        for i, j in pairs:
            if i == j:
                raise ValueError("self-loop")
            es.add(_key(i, j))
        return cls(frozenset(es), {e: tick for e in es})

    def __contains__(self, pair) -> bool:
        i, j = pair
        return _key(i, j) in self.edges

    def __iter__(self):
        return iter(sorted(self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def adjacency(self) -> Dict[int, Set[int]]:
        adj: Dict[int, Set[int]] = {}
        for i, j in self.edges:
            adj.setdefault(i, set()).add(j)
            adj.setdefault(j, set()).add(i)
        return adj


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def initial_edges(positions: np.ndarray, p: Params, tick: int = 0) -> EdgeSet:
    """Links present when no prior graph exists: every pair within ``rho1``."""
    return update_edges(EdgeSet(), positions, p, tick)


def update_edges(
    prev: EdgeSet,
    positions: np.ndarray,
    p: Params,
    tick: int = 0,
    del_pred: Optional[Callable[[int, int], bool]] = None,
) -> EdgeSet:
    """Apply the hysteresis switching rule to ``prev`` at the given positions.

    New links form at ``d <= rho1``; existing links survive up to and
    including ``d == rho2`` and drop strictly above it. ``del_pred`` is only
    used to log removals of links that were meant to be retained.
    """
    d = pairwise_distances(positions)
    n = len(positions)
    iu, ju = np.triu_indices(n, 1)
    dd = d[iu, ju]
    close = set(zip((iu[dd <= p.rho1] + 1).tolist(), (ju[dd <= p.rho1] + 1).tolist()))
    edges = set(close)
    established = {}
    for e in prev.edges:
        i, j = e
        if i > n or j > n:
            continue
        dij = d[i - 1, j - 1]
        if dij <= p.rho2:
            edges.add(e)
            established[e] = prev.established.get(e, tick)
        elif del_pred is not None and del_pred(i, j):
            log.warning("tick %d: retained link (%d, %d) lost at d=%.6g", tick, i, j, dij)
    for e in close:
        if e not in established:
            established[e] = tick
    return EdgeSet(frozenset(edges), established)


def neighbors(es: EdgeSet, i: int, n: Optional[int] = None) -> Set[int]:
    """Neighbour set of agent ``i``; ``n`` bounds the valid ids when given."""
    if n is not None and not (1 <= i <= n):
        raise KeyError(i)
    if i < 1:
        raise KeyError(i)
    return {b if a == i else a for a, b in es.edges if i in (a, b)}


def is_connected(es: EdgeSet, vertices: Set[int]) -> bool:
    """True when ``vertices`` lie in a single component of the induced subgraph."""
    vertices = set(vertices)
    if not vertices:
        raise ValueError("vertex set must be non-empty")
    adj = es.adjacency()
    start = min(vertices)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v in vertices and v not in seen:
                seen.add(v)
                queue.append(v)
    return seen == vertices


def flow_subgraph(
    es: EdgeSet, membership: Mapping[int, FrozenSet[int]], k: int
) -> Tuple[Set[int], Set[Edge]]:
    """Members of flow ``k`` and the links of ``es`` joining two of them."""
    verts = {j for j, ms in membership.items() if k in ms}
    edges = {e for e in es.edges if e[0] in verts and e[1] in verts}
    return verts, edges


def flow_neighbors(es: EdgeSet, membership: Mapping[int, FrozenSet[int]], i: int) -> Set[int]:
    mine = membership.get(i, frozenset())
    return {j for j in neighbors(es, i) if mine & membership.get(j, frozenset())}
