"""Information control plane: flow backbones, bridges and relay migration.

The ICP is a global, sequential decision procedure run on one snapshot of
the network. Each invocation

1. routes every active flow along its minimum-ETX path (the backbone),
2. contracts the graph into a supergraph with one vertex per flow and
   marks the non-members on flow-to-flow shortest paths as bridges,
3. assigns every idle, non-bridge mobile to the flow it helps most and
   picks the one with the smallest in-flow ETX sum as detachment,
4. scores each active flow for an extra relay and, when the best score
   beats ``beta`` times the detachment score, commands the move.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from routeswarm.graph import EdgeSet, is_connected
from routeswarm.links import link_weight
from routeswarm.model import Flow, Params

EMPTY: FrozenSet[int] = frozenset()


class ConnectivityFault(RuntimeError):
    """The graph cannot support a flow or flow-to-flow connection."""


@dataclass(frozen=True)
class IcpCommand:
    agent: int
    target: int


@dataclass
class SuperGraph:
    vertices: Set[int] = field(default_factory=set)
    edges: Set[Tuple[int, int]] = field(default_factory=set)
    flow_vertices: Set[int] = field(default_factory=set)

    def add_edge(self, u: int, v: int):
        if u != v:
            self.edges.add((u, v) if u < v else (v, u))

    def adjacency(self) -> Dict[int, Set[int]]:
        adj = {v: set() for v in self.vertices}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj


@dataclass
class FlowAssignment:
    """Memberships after one ICP pass.

    ``backbone`` holds shortest-path memberships only; ``membership`` adds
    the provisional assignment of detachable agents to the flow they serve.
    """

    membership: Dict[int, FrozenSet[int]]
    backbone: Dict[int, FrozenSet[int]]
    bridges: Dict[int, bool]
    detachable: Dict[int, Set[int]]
    paths: Dict[int, List[int]] = field(default_factory=dict)


@dataclass
class IcpResult:
    assignment: FlowAssignment
    command: Optional[IcpCommand]
    cancelled: List[int]
    core: Set[int]
    core_connected: bool
    detachment: Optional[Tuple[int, float]]
    attachment: Optional[Tuple[int, float]]


def _active(flows: Iterable[Flow]) -> List[Flow]:
    return sorted((fl for fl in flows if fl.active), key=lambda fl: fl.id)


def shortest_etx_path(
    es: EdgeSet, positions: np.ndarray, p: Params, src: int, dst: int
) -> Optional[List[int]]:
    """Minimum-ETX path from ``src`` to ``dst``.

    Equal-cost paths resolve to the lexicographically smallest id sequence.
    Returns None when ``dst`` is unreachable.
    """
    adj = es.adjacency()
    best: Dict[int, Tuple[float, Tuple[int, ...]]] = {src: (0.0, (src,))}
    heap = [(0.0, (src,))]
    done = set()
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return list(path)
        for v in adj.get(u, ()):
            if v in done:
                continue
            w = link_weight(float(np.linalg.norm(positions[u - 1] - positions[v - 1])), p)
            label = (cost + w, path + (v,))
            if v not in best or label < best[v]:
                best[v] = label
                heapq.heappush(heap, label)
    return None


def flow_paths(
    es: EdgeSet, flows: Sequence[Flow], positions: np.ndarray, p: Params
) -> Dict[int, List[int]]:
    """Cheapest source-to-destination path of every active flow."""
    out = {}
    for fl in _active(flows):
        path = shortest_etx_path(es, positions, p, fl.source, fl.destination)
        if path is None:
            raise ConnectivityFault(f"flow {fl.id}: destination unreachable from source")
        out[fl.id] = path
    return out


def memberships_from_paths(paths: Mapping[int, Sequence[int]], n: int) -> Dict[int, FrozenSet[int]]:
    member: Dict[int, Set[int]] = {i: set() for i in range(1, n + 1)}
    for k, path in paths.items():
        for v in path:
            member[v].add(k)
    return {i: frozenset(ms) for i, ms in member.items()}


def initial_membership(
    es: EdgeSet, flows: Sequence[Flow], positions: np.ndarray, p: Params
) -> Dict[int, FrozenSet[int]]:
    """Backbone memberships: every vertex on each active flow's cheapest path."""
    return memberships_from_paths(flow_paths(es, flows, positions, p), len(positions))


def build_supergraph(
    es: EdgeSet,
    flows: Sequence[Flow],
    membership: Mapping[int, FrozenSet[int]],
    m: Optional[int] = None,
) -> SuperGraph:
    """Contract each active flow's members into one vertex.

    Non-members with at least two neighbours stay as their own vertices.
    When ``m`` is given, statics (ids above ``m``) outside every active flow
    are kept regardless of degree so they can be joined to the core. Adjacent non-members are
    joined, a non-member is joined once to each flow it touches, and two
    flows are joined when an agent belongs to both or when members of the
    two flows are neighbours.
    """
    active = {fl.id for fl in _active(flows)}
    adj = es.adjacency()
    sg = SuperGraph(vertices=set(active), flow_vertices=set(active))

    def flows_of(i):
        return membership.get(i, EMPTY) & active

    candidates = {i for i in adj if not flows_of(i) and len(adj[i]) >= 2}
    if m is not None:
        candidates |= {i for i in membership if i > m and not flows_of(i)}
    sg.vertices |= candidates
    for i in candidates:
        for j in adj.get(i, ()):
            if j in candidates:
                sg.add_edge(i, j)
            for k in flows_of(j):
                sg.add_edge(i, k)
    for i, ms in membership.items():
        ms = sorted(ms & active)
        for a_idx, k in enumerate(ms):
            for l in ms[a_idx + 1:]:
                sg.add_edge(k, l)
    for i, j in es.edges:
        for k in flows_of(i):
            for l in flows_of(j):
                sg.add_edge(k, l)
    return sg


def _bfs_dist(adj: Mapping[int, Set[int]], root: int) -> Dict[int, int]:
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def supergraph_path(sg: SuperGraph, u: int, v: int) -> Optional[List[int]]:
    """Lexicographically smallest minimum-hop path from ``u`` to ``v``."""
    adj = sg.adjacency()
    dist = _bfs_dist(adj, v)
    if u not in dist:
        return None
    path = [u]
    while path[-1] != v:
        here = path[-1]
        path.append(min(w for w in adj[here] if dist.get(w) == dist[here] - 1))
    return path


def detect_bridges(
    sg: SuperGraph, flows: Sequence[Flow], terminals: Iterable[int] = ()
) -> Dict[int, bool]:
    """Flag agent vertices on a shortest supergraph path between two flows.

    ``terminals`` are extra agent vertices (idle statics) that must stay
    attached; each is joined to every active flow as well and is flagged
    itself.
    """
    ids = sorted(fl.id for fl in _active(flows))
    extra = sorted(t for t in terminals if t in sg.vertices)
    bridges = {v: False for v in sg.vertices if v not in sg.flow_vertices}
    ends = ids + extra if ids else []
    for x, k in enumerate(ends):
        for l in ends[x + 1:]:
            if k in extra and l in extra:
                continue
            path = supergraph_path(sg, k, l)
            if path is None:
                raise ConnectivityFault(f"{k} and {l} are disconnected in the supergraph")
            for v in path:
                if v not in sg.flow_vertices:
                    bridges[v] = True
    return bridges


def idle_statics(flows: Sequence[Flow], membership: Mapping[int, FrozenSet[int]], m: int, n: int) -> List[int]:
    """Static agents that belong to no active flow."""
    active = {fl.id for fl in _active(flows)}
    return [i for i in range(m + 1, n + 1) if not (membership.get(i, EMPTY) & active)]


def connected_core(
    es: EdgeSet,
    flows: Sequence[Flow],
    membership: Mapping[int, FrozenSet[int]],
    bridges: Mapping[int, bool],
) -> Tuple[Set[int], bool]:
    """Flow members plus bridges, and whether they induce a connected graph."""
    active = {fl.id for fl in _active(flows)}
    core = {i for i, ms in membership.items() if ms & active}
    core |= {i for i, b in bridges.items() if b}
    if not core:
        return core, True
    return core, is_connected(es, core)


def contribution(
    i: int, k: int, backbone: Mapping[int, FrozenSet[int]], positions: np.ndarray, p: Params
) -> float:
    """Reciprocal-ETX sum from agent ``i`` to the members of flow ``k`` within ``rho2``."""
    total = 0.0
    for j, ms in backbone.items():
        if j == i or k not in ms:
            continue
        d = float(np.linalg.norm(positions[i - 1] - positions[j - 1]))
        if d <= p.rho2:
            total += 1.0 / link_weight(d, p)
    return total


def assign_detachable(
    flows: Sequence[Flow],
    backbone: Mapping[int, FrozenSet[int]],
    bridges: Mapping[int, bool],
    positions: np.ndarray,
    p: Params,
    m: int,
    exclude: Iterable[int] = (),
) -> Tuple[Dict[int, FrozenSet[int]], Dict[int, Set[int]]]:
    """Give every idle non-bridge mobile to the flow it contributes most to."""
    active = [fl.id for fl in _active(flows)]
    membership = dict(backbone)
    detachable: Dict[int, Set[int]] = {k: set() for k in active}
    if not active:
        return membership, detachable
    skip = set(exclude)
    for i in range(1, m + 1):
        if i in skip or backbone.get(i, EMPTY) or bridges.get(i, False):
            continue
        k = max(active, key=lambda k: (contribution(i, k, backbone, positions, p), -k))
        membership[i] = frozenset({k})
        detachable[k].add(i)
    return membership, detachable


def detachment_score(
    i: int, es: EdgeSet, membership: Mapping[int, FrozenSet[int]], positions: np.ndarray, p: Params
) -> float:
    mine = membership.get(i, EMPTY)
    adj = es.adjacency()
    total = 0.0
    for j in sorted(adj.get(i, ())):
        if mine & membership.get(j, EMPTY):
            total += link_weight(float(np.linalg.norm(positions[i - 1] - positions[j - 1])), p)
    return total


def best_detachment(
    es: EdgeSet,
    membership: Mapping[int, FrozenSet[int]],
    detachable: Mapping[int, Set[int]],
    positions: np.ndarray,
    p: Params,
) -> Optional[Tuple[int, float]]:
    """Detachable agent with the least in-flow ETX sum, or None."""
    pool = sorted(set().union(*detachable.values())) if detachable else []
    if not pool:
        return None
    scored = [(detachment_score(i, es, membership, positions, p), i) for i in pool]
    score, agent = min(scored)
    return agent, score


def attachment_score(
    fl: Flow, membership: Mapping[int, FrozenSet[int]], positions: np.ndarray, p: Params
) -> float:
    mid = 0.5 * (positions[fl.source - 1] + positions[fl.destination - 1])
    members = [j for j, ms in membership.items() if fl.id in ms]
    total = 0.0
    for j in members:
        total += 1.0 / max(float(np.linalg.norm(positions[j - 1] - mid)), p.eps_f)
    return (len(members) + 1) * total


def best_attachment(
    flows: Sequence[Flow], membership: Mapping[int, FrozenSet[int]], positions: np.ndarray, p: Params
) -> Tuple[int, float]:
    active = _active(flows)
    if not active:
        raise ValueError("no active flow to attach to")
    scored = [(attachment_score(fl, membership, positions, p), -fl.id) for fl in active]
    score, neg = max(scored)
    return -neg, score


def icp_step(
    es: EdgeSet,
    flows: Sequence[Flow],
    positions: np.ndarray,
    p: Params,
    m: int,
    pending: Optional[Mapping[int, int]] = None,
) -> IcpResult:
    """One full ICP pass; emits at most one reconfiguration command.

    ``pending`` maps agents already travelling under a command to their
    target flow. Those agents are treated as idle for routing. A pending
    command is cancelled when its agent turns out to be on a backbone or a
    bridge, or when its target flow is no longer active.
    """
    pending = dict(pending or {})
    active_ids = {fl.id for fl in _active(flows)}
    n = len(positions)
    paths = flow_paths(es, flows, positions, p)
    backbone = memberships_from_paths(paths, n)
    sg = build_supergraph(es, flows, backbone, m)
    orphans = idle_statics(flows, backbone, m, n)
    bridges = {i: False for i in range(1, n + 1)}
    bridges.update(detect_bridges(sg, flows, orphans))
    core, core_ok = connected_core(es, flows, backbone, bridges)

    cancelled = []
    for i, target in sorted(pending.items()):
        if backbone.get(i, EMPTY) or bridges.get(i, False) or target not in active_ids:
            cancelled.append(i)
    travelling = {i for i in pending if i not in cancelled}

    membership, detachable = assign_detachable(
        flows, backbone, bridges, positions, p, m, exclude=travelling
    )
    assignment = FlowAssignment(membership, backbone, bridges, detachable, paths)
    if not active_ids:
        return IcpResult(assignment, None, cancelled, core, core_ok, None, None)

    detach = best_detachment(es, membership, detachable, positions, p)
    attach = best_attachment(flows, membership, positions, p)
    command = None
    if detach is not None and attach[1] > p.beta * detach[1]:
        agent, _ = detach
        command = IcpCommand(agent, attach[0])
        for ds in detachable.values():
            ds.discard(agent)
        membership[agent] = EMPTY
    return IcpResult(assignment, command, cancelled, core, core_ok, detach, attach)
