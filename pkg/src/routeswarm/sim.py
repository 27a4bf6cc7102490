"""Tick loop orchestrating events, the ICP, the PCP and metric recording.

Within a tick the order is: flow events, ICP (on events and every
``icp_period`` ticks), PCP, integration, edge update, record.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from routeswarm.graph import EdgeSet, initial_edges, is_connected, update_edges
from routeswarm.icp import ConnectivityFault, IcpCommand, icp_step
from routeswarm.links import flow_cost
from routeswarm.model import BehaviorState, Flow, Params, Scenario, WorldState, validate_scenario
from routeswarm.pcp import (
    IntegrationFault,
    SingularConfiguration,
    deletion_predicate,
    integrate,
    pcp_step,
)

log = logging.getLogger(__name__)

SIG_DIGITS = 9
CONVERGENCE_WINDOW = 50
CONVERGENCE_TOL = 1e-3


def q(x: float) -> float:
    """Round to the precision used in exported traces."""
    return float(f"{x:.{SIG_DIGITS}g}")


_qv = np.vectorize(q, otypes=[float])


class SimulationFault(RuntimeError):
    def __init__(self, tick: int, cause: Exception):
        super().__init__(f"tick {tick}: {cause}")
        self.tick = tick
        self.cause = cause


@dataclass(eq=False)
class FlowRecord:
    cost: float
    active: bool
    spacing_err: float

    def __eq__(self, other):
        if not isinstance(other, FlowRecord):
            return NotImplemented
        same_err = self.spacing_err == other.spacing_err or (
            math.isnan(self.spacing_err) and math.isnan(other.spacing_err)
        )
        return self.cost == other.cost and self.active == other.active and same_err


@dataclass
class TickRecord:
    tick: int
    connected: bool
    flows: Dict[int, FlowRecord]
    commands: List[IcpCommand] = field(default_factory=list)
    icp_ran: bool = False
    core_connected: Optional[bool] = None


@dataclass
class Trace:
    """Per-tick metrics of one run. Floats are stored at export precision.

    ``positions[t]`` is the snapshot after tick ``t * position_stride``.
    """

    flow_ids: List[int]
    m: int
    s: int
    records: List[TickRecord] = field(default_factory=list)
    positions: List[np.ndarray] = field(default_factory=list)
    fault: Optional[str] = None
    fault_tick: Optional[int] = None
    position_stride: int = 1

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        same_pos = len(self.positions) == len(other.positions) and all(
            np.array_equal(a, b) for a, b in zip(self.positions, other.positions)
        )
        return (
            self.flow_ids == other.flow_ids
            and self.m == other.m
            and self.s == other.s
            and self.records == other.records
            and same_pos
            and self.fault == other.fault
            and self.fault_tick == other.fault_tick
            and self.position_stride == other.position_stride
        )

    def thinned(self, stride: int) -> "Trace":
        """Copy keeping every ``stride``-th position snapshot."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return replace(
            self,
            records=list(self.records),
            positions=self.positions[::stride],
            position_stride=self.position_stride * stride,
        )

    def cost_series(self, k: int) -> np.ndarray:
        return np.array([r.flows[k].cost for r in self.records])

    def active_series(self, k: int) -> np.ndarray:
        return np.array([r.flows[k].active for r in self.records])

    def spacing_series(self, k: int) -> np.ndarray:
        return np.array([r.flows[k].spacing_err for r in self.records])

    def ticks(self) -> np.ndarray:
        return np.array([r.tick for r in self.records])

    def commands(self) -> List[tuple]:
        return [(r.tick, c.agent, c.target) for r in self.records for c in r.commands]


def flow_cost_metric(k: int, state: WorldState, p: Params, routed: bool = True) -> float:
    """ETX cost of flow ``k``.

    With ``routed`` the sum runs over the hops of the flow's current path.
    Otherwise it covers every link between two members, which also counts
    retained chords that carry no traffic.
    """
    if routed:
        path = state.paths.get(k, [])
        pairs = list(zip(path, path[1:]))
    else:
        pairs = [
            (i, j) for i, j in state.edges.edges
            if k in state.membership.get(i, ()) and k in state.membership.get(j, ())
        ]
    return flow_cost(pairs, state.positions, p)


def spacing_error(fl: Flow, state: WorldState) -> float:
    """Largest relative deviation of consecutive member spacings from even spacing.

    Members are ordered by their projection onto the flow segment.
    """
    if not fl.active:
        return float("nan")
    src, dst = state.pos(fl.source), state.pos(fl.destination)
    seg = dst - src
    L = float(np.linalg.norm(seg))
    inner = [
        j for j, ms in state.membership.items()
        if fl.id in ms and j not in (fl.source, fl.destination)
    ]
    taus = sorted((float(np.dot(state.pos(j) - src, seg)) / L ** 2, j) for j in inner)
    chain = [fl.source] + [j for _, j in taus] + [fl.destination]
    gaps = [float(np.linalg.norm(state.pos(a) - state.pos(b))) for a, b in zip(chain, chain[1:])]
    ideal = L / (len(chain) - 1)
    return max(abs(g - ideal) for g in gaps) / ideal


def initial_state(sc: Scenario) -> WorldState:
    pos = sc.initial_positions()
    return WorldState(
        tick=0,
        positions=pos,
        velocities=np.zeros_like(pos),
        edges=initial_edges(pos, sc.params),
        behavior={i: BehaviorState.SWARMING for i in sc.mobile_ids},
        membership={i: frozenset() for i in range(1, sc.n + 1)},
        command={i: None for i in sc.mobile_ids},
        waypoint={i: None for i in sc.mobile_ids},
        bridges={i: False for i in range(1, sc.n + 1)},
        m=sc.m,
        s=sc.s,
    )


class Simulation:
    """Stepwise driver; :func:`run` wraps it for whole scenarios."""

    def __init__(self, sc: Scenario, record_positions: bool = True):
        problems = validate_scenario(sc)
        if problems:
            raise ValueError(f"invalid scenario: {problems}")
        self.sc = sc
        self.p = sc.params
        self.flows: List[Flow] = [replace(fl) for fl in sorted(sc.flows, key=lambda f: f.id)]
        self.state = initial_state(sc)
        self.record_positions = record_positions
        self.trace = Trace([fl.id for fl in self.flows], sc.m, sc.s)
        self.events_by_tick: Dict[int, list] = {}
        for ev in sc.events:
            self.events_by_tick.setdefault(ev.tick, []).append(ev)
        self.last_icp = None

    def _apply_events(self, tick: int) -> bool:
        evs = self.events_by_tick.get(tick, [])
        for ev in evs:
            self.flows = [replace(fl, active=ev.activate) if fl.id == ev.flow else fl for fl in self.flows]
        return bool(evs)

    def _run_icp(self, rec: TickRecord):
        st = self.state
        pending = {i: c for i, c in st.command.items() if c is not None}
        res = icp_step(st.edges, self.flows, st.positions, self.p, st.m, pending)
        self.last_icp = res
        rec.icp_ran = True
        rec.core_connected = res.core_connected
        if not res.core_connected:
            log.error("tick %d: connected core is disconnected", st.tick)
        st.membership = dict(res.assignment.membership)
        st.backbone = dict(res.assignment.backbone)
        st.paths = {k: list(v) for k, v in res.assignment.paths.items()}
        st.bridges = dict(res.assignment.bridges)
        for i in res.cancelled:
            st.command[i] = None
            st.waypoint[i] = None
            st.behavior[i] = BehaviorState.SWARMING
        for i in st.behavior:
            # uncommanded manoeuvres are re-derived from the fresh memberships
            if st.command.get(i) is None and st.behavior[i] is BehaviorState.RECONFIGURE:
                st.behavior[i] = BehaviorState.SWARMING
                st.waypoint[i] = None
        if res.command is not None:
            c = res.command
            st.command[c.agent] = c.target
            st.behavior[c.agent] = BehaviorState.RECONFIGURE
            rec.commands.append(c)

    def step(self) -> TickRecord:
        st = self.state
        tick = st.tick
        rec = TickRecord(tick=tick, connected=False, flows={})
        fired = self._apply_events(tick)
        if fired or tick % self.sc.icp_period == 0:
            self._run_icp(rec)
        out = pcp_step(st, self.flows, self.p)
        st.behavior = out.behavior
        st.waypoint = out.waypoint
        st.command = out.command
        snapshot = (dict(st.behavior), dict(st.membership), dict(st.bridges))
        st.positions, st.velocities = integrate(st.positions, out.controls, self.p, st.m)
        st.edges = update_edges(
            st.edges,
            st.positions,
            self.p,
            tick + 1,
            del_pred=lambda i, j: deletion_predicate(i, j, *snapshot),
        )
        n = st.n
        rec.connected = n == 0 or is_connected(st.edges, set(range(1, n + 1)))
        for fl in self.flows:
            cost = flow_cost_metric(fl.id, st, self.p) if fl.active else 0.0
            rec.flows[fl.id] = FlowRecord(q(cost), fl.active, q(spacing_error(fl, st)))
        self.trace.records.append(rec)
        if self.record_positions:
            self.trace.positions.append(_qv(st.positions))
        st.tick = tick + 1
        return rec


def run(sc: Scenario, record_positions: bool = True, raise_on_fault: bool = False) -> Trace:
    """Simulate ``sc.max_ticks`` ticks and return the trace.

    A module fault stops the run; the trace then carries the fault message
    and the tick it occurred on.
    """
    sim = Simulation(sc, record_positions)
    for _ in range(sc.max_ticks):
        tick = sim.state.tick
        try:
            sim.step()
        except (ConnectivityFault, SingularConfiguration, IntegrationFault) as exc:
            sim.trace.fault = str(exc)
            sim.trace.fault_tick = tick
            if raise_on_fault:
                raise SimulationFault(tick, exc) from exc
            break
    return sim.trace


def _converged_at(costs: np.ndarray, start: int, stop: int) -> Optional[int]:
    """First index in ``[start, stop)`` whose following window is flat to 0.1%."""
    w = CONVERGENCE_WINDOW
    for t in range(start, stop - w + 1):
        win = costs[:, t:t + w]
        hi = win.max(axis=1)
        lo = win.min(axis=1)
        ref = np.maximum(np.abs(lo), 1e-12)
        if np.all((hi - lo) / ref < CONVERGENCE_TOL):
            return t
    return None


def settling_index(series: Sequence[float], start: int, stop: int, band: float = 0.01) -> int:
    """First index in ``[start, stop)`` after which ``series`` stays within
    ``band`` (relative) of its mean over the last convergence window.

    Unlike :func:`summarize`'s window test this tolerates the small
    steady ripple left by agents hovering at the on-path margin.
    """
    x = np.asarray(series[start:stop], dtype=float)
    if x.size == 0:
        raise ValueError("empty range")
    ref = float(np.mean(x[-CONVERGENCE_WINDOW:]))
    outside = np.nonzero(np.abs(x - ref) > band * max(abs(ref), 1e-12))[0]
    return start if outside.size == 0 else start + int(outside[-1]) + 1


def phase_bounds(trace: Trace) -> List[tuple]:
    """Tick ranges between changes of the active flow set."""
    if not trace.records:
        return []
    bounds = [0]
    prev = None
    for idx, r in enumerate(trace.records):
        act = tuple(r.flows[k].active for k in trace.flow_ids)
        if prev is not None and act != prev:
            bounds.append(idx)
        prev = act
    bounds.append(len(trace.records))
    return list(zip(bounds[:-1], bounds[1:]))


def summarize(trace: Trace) -> dict:
    """Aggregate a trace into final costs, connectivity and convergence per phase."""
    recs = trace.records
    report = {
        "ticks": len(recs),
        "final_cost": {},
        "min_connectivity": None,
        "max_spacing_error": None,
        "command_count": len(trace.commands()),
        "phases": [],
        "fault": trace.fault,
        "fault_tick": trace.fault_tick,
    }
    if not recs:
        return report
    last = recs[-1]
    report["final_cost"] = {str(k): last.flows[k].cost for k in trace.flow_ids if last.flows[k].active}
    report["min_connectivity"] = int(min(r.connected for r in recs))
    errs = [last.flows[k].spacing_err for k in trace.flow_ids if last.flows[k].active]
    errs = [e for e in errs if not math.isnan(e)]
    report["max_spacing_error"] = max(errs) if errs else None
    for start, stop in phase_bounds(trace):
        active = [k for k in trace.flow_ids if recs[start].flows[k].active]
        conv = None
        if active:
            costs = np.array([[recs[t].flows[k].cost for t in range(len(recs))] for k in active])
            idx = _converged_at(costs, start, stop)
            conv = None if idx is None else recs[idx].tick
        elif stop - start >= CONVERGENCE_WINDOW:
            conv = recs[start].tick
        cmds = sum(len(recs[t].commands) for t in range(start, stop))
        report["phases"].append({
            "start_tick": recs[start].tick,
            "end_tick": recs[stop - 1].tick,
            "active_flows": active,
            "convergence_tick": conv,
            "commands": cmds,
            "final_cost": {str(k): recs[stop - 1].flows[k].cost for k in active},
        })
    return report
