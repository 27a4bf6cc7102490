"""Shared domain types: agents, flows, parameters, scenarios and world state.

Agent ids are 1-based integers. Mobile robots occupy ``1..m`` and static
nodes ``m+1..m+s``. Flow ids follow the agents at ``n+1..n+f`` with
``n = m + s``. Positions are stored in ``(n, 2)`` arrays where row ``i - 1``
holds agent ``i``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

AgentId = int
FlowId = int
Edge = Tuple[int, int]


class BehaviorState(enum.Enum):
    SWARMING = "SWARMING"
    RECONFIGURE = "RECONFIGURE"


@dataclass(frozen=True)
class Flow:
    id: FlowId
    source: AgentId
    destination: AgentId
    active: bool = True


@dataclass(frozen=True)
class Params:
    """Numeric parameters of the network and controllers.

    Radii are ordered ``rho0 < rho1 < rho2`` (collision, connection,
    interaction). ``a`` and ``b`` shape the reception sigmoid. ``beta``
    weighs detachment against attachment in the allocation plane.
    ``static_compensation`` scales the extra dispersion term applied for
    static neighbours; 0 keeps static and mobile neighbours on equal footing,
    1 doubles the static terms.
    """

    rho0: float = 0.15
    rho1: float = 0.8
    rho2: float = 1.0
    a: float = 10.0
    b: float = 0.6
    beta: float = 1.5
    eps_w: float = 0.05
    eps_f: float = 0.05
    alpha: float = 0.05
    dt: float = 0.01
    vmax: float = 0.1
    static_compensation: float = 0.0

    @classmethod
    def for_range(cls, rho2: float, **overrides) -> "Params":
        """Default parameter set scaled to an interaction radius ``rho2``."""
        base = dict(
            rho0=0.15 * rho2,
            rho1=0.8 * rho2,
            rho2=rho2,
            a=10.0 / rho2,
            b=0.6 * rho2,
            beta=1.5,
            eps_w=0.05 * rho2,
            eps_f=0.05 * rho2,
            alpha=0.05,
            dt=0.01,
            vmax=rho2 / 10.0,
        )
        base.update(overrides)
        return cls(**base)

    def violations(self) -> List[str]:
        out = []
        if not (0 < self.rho0 < self.rho1 < self.rho2):
            out.append("radius-ordering")
        for name in ("a", "b", "beta", "eps_w", "eps_f", "alpha", "dt", "vmax"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                out.append(f"non-positive-{name}")
        if self.static_compensation < 0:
            out.append("negative-static_compensation")
        return out


@dataclass(frozen=True)
class FlowEvent:
    tick: int
    flow: FlowId
    activate: bool


@dataclass
class Scenario:
    m: int
    s: int
    static_positions: np.ndarray
    initial_mobile_positions: np.ndarray
    flows: List[Flow]
    events: List[FlowEvent] = field(default_factory=list)
    params: Params = field(default_factory=Params)
    max_ticks: int = 1000
    icp_period: int = 25
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        self.static_positions = np.asarray(self.static_positions, dtype=float).reshape(-1, 2)
        self.initial_mobile_positions = np.asarray(
            self.initial_mobile_positions, dtype=float
        ).reshape(-1, 2)

    @property
    def n(self) -> int:
        return self.m + self.s

    @property
    def f(self) -> int:
        return len(self.flows)

    @property
    def mobile_ids(self) -> range:
        return range(1, self.m + 1)

    @property
    def static_ids(self) -> range:
        return range(self.m + 1, self.m + self.s + 1)

    def initial_positions(self) -> np.ndarray:
        return np.vstack([self.initial_mobile_positions, self.static_positions])

    def flow(self, fid: FlowId) -> Flow:
        for fl in self.flows:
            if fl.id == fid:
                return fl
        raise KeyError(fid)


@dataclass
class WorldState:
    """Complete simulation state at one tick.

    ``edges`` holds a :class:`routeswarm.graph.EdgeSet`. Mappings are keyed
    by agent id; only mobile agents carry behaviour, command and waypoint
    entries.
    """

    tick: int
    positions: np.ndarray
    velocities: np.ndarray
    edges: "object"
    behavior: Dict[AgentId, BehaviorState]
    membership: Dict[AgentId, FrozenSet[FlowId]]
    command: Dict[AgentId, Optional[FlowId]]
    waypoint: Dict[AgentId, Optional[np.ndarray]]
    bridges: Dict[AgentId, bool]
    m: int
    s: int
    backbone: Dict[AgentId, FrozenSet[FlowId]] = field(default_factory=dict)
    paths: Dict[FlowId, List[AgentId]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.m + self.s

    def is_static(self, i: AgentId) -> bool:
        return i > self.m

    def pos(self, i: AgentId) -> np.ndarray:
        return self.positions[i - 1]

    def copy(self) -> "WorldState":
        return replace(
            self,
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            behavior=dict(self.behavior),
            membership=dict(self.membership),
            command=dict(self.command),
            waypoint={k: (None if v is None else v.copy()) for k, v in self.waypoint.items()},
            bridges=dict(self.bridges),
            backbone=dict(self.backbone),
            paths={k: list(v) for k, v in self.paths.items()},
        )


def validate_scenario(sc: Scenario) -> List[str]:
    """Return the list of violated scenario invariants (empty when valid)."""
    from routeswarm.graph import initial_edges, is_connected

    out: List[str] = []
    out.extend(sc.params.violations())
    if sc.m < 0 or sc.s < 0:
        out.append("negative-count")
    if sc.static_positions.shape != (sc.s, 2):
        out.append("static-positions-shape")
    if sc.initial_mobile_positions.shape != (sc.m, 2):
        out.append("mobile-positions-shape")
    n = sc.n
    ids = [fl.id for fl in sc.flows]
    if len(set(ids)) != len(ids):
        out.append("duplicate-flow-id")
    for fl in sc.flows:
        if not (n < fl.id <= n + sc.f):
            out.append(f"flow-id-range:{fl.id}")
        if fl.source == fl.destination:
            out.append(f"flow-degenerate:{fl.id}")
        for end in (fl.source, fl.destination):
            if not (sc.m < end <= n):
                out.append(f"flow-endpoint-not-static:{fl.id}")
                break
    for ev in sc.events:
        if ev.flow not in ids:
            out.append(f"event-unknown-flow:{ev.flow}")
        if ev.tick < 0:
            out.append("event-negative-tick")
    if sc.max_ticks < 0:
        out.append("negative-max-ticks")
    if sc.icp_period < 1:
        out.append("icp-period")
    if out and any(v.endswith("shape") for v in out):
        return out
    pos = sc.initial_positions()
    if not np.all(np.isfinite(pos)):
        out.append("non-finite-position")
        return out
    if n > 0 and "radius-ordering" not in out:
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        if n > 1 and np.min(d[np.triu_indices(n, 1)]) <= 0.0:
            out.append("coincident-agents")
        if not is_connected(initial_edges(pos, sc.params), set(range(1, n + 1))):
            out.append("disconnected-initial-graph")
    return out
