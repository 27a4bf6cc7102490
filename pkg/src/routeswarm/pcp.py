"""Physical control plane: behaviour switching and potential-field control.

Each mobile agent runs

    u = u_e + u_o - grad(sum attract + sum repel + sum collision)

where ``u_e`` is a damped waypoint seeker used while reconfiguring and
``u_o`` an inverse-square dispersion among flow co-members used while
swarming. Links in the annulus ``(rho1, rho2]`` are retained by an
attractive barrier whenever the deletion predicate holds. The result is
saturated to ``vmax`` and integrated with explicit Euler.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from routeswarm.graph import EdgeSet
from routeswarm.model import BehaviorState, Flow, Params, WorldState

SWARMING = BehaviorState.SWARMING
RECONFIGURE = BehaviorState.RECONFIGURE
EMPTY: FrozenSet[int] = frozenset()


class ContractError(ValueError):
    """A potential was evaluated outside the distance band it is defined on."""


class SingularConfiguration(RuntimeError):
    """Two agents occupy the same point."""


@dataclass
class ControlInput:
    u: np.ndarray
    u_e: np.ndarray = field(default_factory=lambda: np.zeros(2))
    u_o: np.ndarray = field(default_factory=lambda: np.zeros(2))
    u_pot: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class NeighborClass:
    attract: Set[int] = field(default_factory=set)
    repel: Set[int] = field(default_factory=set)
    collide: Set[int] = field(default_factory=set)


# Potentials. Additive constants make each one vanish where it switches on.

def attract_potential(x_ij, p: Params) -> float:
    d2 = float(np.dot(x_ij, x_ij))
    return 1.0 / (p.rho2 ** 2 - d2) - 1.0 / (p.rho2 ** 2 - p.rho1 ** 2)


def repel_potential(x_ij, p: Params) -> float:
    d2 = float(np.dot(x_ij, x_ij))
    return 1.0 / (d2 - p.rho1 ** 2) - 1.0 / (p.rho2 ** 2 - p.rho1 ** 2)


def collision_potential(x_ij, p: Params) -> float:
    d2 = float(np.dot(x_ij, x_ij))
    return 1.0 / d2 - 1.0 / p.rho0 ** 2


def attract_gradient(x_ij, p: Params) -> np.ndarray:
    """Gradient w.r.t. ``x_i`` of ``1 / (rho2^2 - |x_ij|^2)``; defined on ``[rho1, rho2)``."""
    x_ij = np.asarray(x_ij, dtype=float)
    d2 = float(np.dot(x_ij, x_ij))
    if not (p.rho1 ** 2 <= d2 < p.rho2 ** 2):
        raise ContractError(f"attraction needs rho1 <= d < rho2, got d={np.sqrt(d2):.6g}")
    return 2.0 * x_ij / (p.rho2 ** 2 - d2) ** 2


def repel_gradient(x_ij, p: Params) -> np.ndarray:
    """Gradient w.r.t. ``x_i`` of ``1 / (|x_ij|^2 - rho1^2)``; defined on ``(rho1, rho2)``."""
    x_ij = np.asarray(x_ij, dtype=float)
    d2 = float(np.dot(x_ij, x_ij))
    if not (p.rho1 ** 2 < d2 < p.rho2 ** 2):
        raise ContractError(f"repulsion needs rho1 < d < rho2, got d={np.sqrt(d2):.6g}")
    return -2.0 * x_ij / (d2 - p.rho1 ** 2) ** 2


def collision_gradient(x_ij, p: Params) -> np.ndarray:
    """Gradient w.r.t. ``x_i`` of ``1 / |x_ij|^2``; defined on ``(0, rho0]``."""
    x_ij = np.asarray(x_ij, dtype=float)
    d2 = float(np.dot(x_ij, x_ij))
    if d2 == 0.0:
        raise SingularConfiguration("coincident agents")
    if d2 > p.rho0 ** 2:
        raise ContractError(f"collision needs d <= rho0, got d={np.sqrt(d2):.6g}")
    return -2.0 * x_ij / d2 ** 2


def inverse_square_gradient(x_ij) -> np.ndarray:
    """Gradient w.r.t. ``x_i`` of ``1 / |x_ij|^2`` with no range restriction."""
    x_ij = np.asarray(x_ij, dtype=float)
    d2 = float(np.dot(x_ij, x_ij))
    if d2 == 0.0:
        raise SingularConfiguration("coincident agents")
    return -2.0 * x_ij / d2 ** 2


def deletion_predicate(
    i: int,
    j: int,
    behavior: Mapping[int, BehaviorState],
    membership: Mapping[int, FrozenSet[int]],
    bridges: Mapping[int, bool],
) -> bool:
    """True when losing link ``(i, j)`` would violate connectivity.

    Static agents have no behaviour state and never count as swarming.
    """
    swarming = behavior.get(i) is SWARMING or behavior.get(j) is SWARMING
    if not swarming:
        return False
    shared = bool(membership.get(i, EMPTY) & membership.get(j, EMPTY))
    return shared or bridges.get(i, False) or bridges.get(j, False)


def classify_neighbors(i: int, state: WorldState, p: Params, adj=None, dist=None) -> NeighborClass:
    """Split agents around ``i`` into attraction, repulsion and collision sets.

    Link additions are never vetoed, so the repulsion set stays empty.
    """
    adj = state.edges.adjacency() if adj is None else adj
    xi = state.pos(i)
    if dist is None:
        dist = np.linalg.norm(state.positions - xi, axis=1)
    else:
        dist = dist[i - 1]
    out = NeighborClass()
    for j in adj.get(i, ()):
        if p.rho1 < dist[j - 1] <= p.rho2 and deletion_predicate(
            i, j, state.behavior, state.membership, state.bridges
        ):
            out.attract.add(j)
    close = np.nonzero(dist <= p.rho0)[0] + 1
    out.collide = {int(j) for j in close if j != i}
    return out


def waypoint_control(x, x_w, v) -> np.ndarray:
    """Unit pull toward ``x_w`` minus the current velocity."""
    diff = np.asarray(x_w, dtype=float) - np.asarray(x, dtype=float)
    dist = float(np.linalg.norm(diff))
    unit = diff / dist if dist > 0 else np.zeros(2)
    return unit - np.asarray(v, dtype=float)


def project_to_flow(x, source, destination, p: Params) -> Tuple[float, np.ndarray, bool]:
    """Saturated projection of ``x`` onto the flow segment.

    Points beyond either end map back inside the segment by ``alpha * tau``
    of its length, so an agent never targets a static endpoint.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(source, dtype=float)
    d = np.asarray(destination, dtype=float)
    seg = d - s
    L2 = float(np.dot(seg, seg))
    if L2 == 0.0:
        raise ValueError("degenerate flow: source equals destination")
    tau = float(np.dot(x - s, seg)) / L2
    if tau <= 0.0:
        point = s - p.alpha * tau * seg
    elif tau >= 1.0:
        point = d - p.alpha * tau * seg
    else:
        point = s + tau * seg
    return tau, point, bool(np.linalg.norm(point - x) <= p.eps_f)


def dispersion_sets(i: int, state: WorldState, adj=None) -> Tuple[Set[int], Set[int]]:
    """Co-members that push ``i``: swarming mobiles or statics, and the static subset."""
    adj = state.edges.adjacency() if adj is None else adj
    mine = state.membership.get(i, EMPTY)
    active_nb = set()
    for j in adj.get(i, ()):
        if not (mine & state.membership.get(j, EMPTY)):
            continue
        if state.is_static(j) or state.behavior.get(j) is SWARMING:
            active_nb.add(j)
    return active_nb, {j for j in active_nb if state.is_static(j)}


def dispersion_control(i: int, state: WorldState, p: Params, adj=None) -> np.ndarray:
    """Inverse-square dispersion among flow co-members.

    Static neighbours get an extra ``static_compensation`` share of their
    term, standing in for the reaction they cannot apply themselves.
    """
    active_nb, static_nb = dispersion_sets(i, state, adj)
    xi = state.pos(i)
    u = np.zeros(2)
    for j in sorted(active_nb):
        g = inverse_square_gradient(xi - state.pos(j))
        u -= g
        if j in static_nb:
            u -= p.static_compensation * g
    return u


def saturate(u: np.ndarray, vmax: float) -> np.ndarray:
    speed = float(np.linalg.norm(u))
    if speed > vmax:
        return u * (vmax / speed)
    return u


def at_waypoint(i: int, wp: np.ndarray, state: WorldState, p: Params, dist=None) -> bool:
    """Arrival test for a reconfiguring agent.

    Within ``eps_w`` of the waypoint counts as arrived. So does being within
    ``rho0`` of it while another agent sits inside the collision radius:
    collision avoidance would otherwise hold the agent off an occupied
    waypoint forever.
    """
    xi = state.pos(i)
    gap = float(np.linalg.norm(wp - xi))
    if gap <= p.eps_w:
        return True
    if gap > p.rho0:
        return False
    if dist is None:
        dist = np.linalg.norm(state.positions - xi, axis=1)
        row = dist
    else:
        row = dist[i - 1]
    crowd = [j for j in range(1, state.n + 1) if j != i and row[j - 1] <= p.rho0]
    return bool(crowd)


def flow_midpoint(fl: Flow, positions: np.ndarray) -> np.ndarray:
    return 0.5 * (positions[fl.source - 1] + positions[fl.destination - 1])


@dataclass
class PcpResult:
    controls: Dict[int, ControlInput]
    behavior: Dict[int, BehaviorState]
    waypoint: Dict[int, Optional[np.ndarray]]
    command: Dict[int, Optional[int]]
    arrived: Set[int] = field(default_factory=set)


def _target_flow(i: int, state: WorldState, flows: Mapping[int, Flow], p: Params):
    """Projection onto the member flow nearest to agent ``i``; None if already on one."""
    best = None
    for k in sorted(state.membership.get(i, EMPTY)):
        fl = flows.get(k)
        if fl is None or not fl.active:
            continue
        _, point, on_path = project_to_flow(
            state.pos(i), state.pos(fl.source), state.pos(fl.destination), p
        )
        if on_path:
            return None, True
        dist = float(np.linalg.norm(point - state.pos(i)))
        if best is None or dist < best[0]:
            best = (dist, point)
    if best is None:
        return None, False
    return best[1], False


def pcp_step(state: WorldState, flows: Sequence[Flow], p: Params) -> PcpResult:
    """Evaluate the switching logic and control law for every mobile agent.

    All agents read the same snapshot, so the result does not depend on the
    order in which agents are visited.
    """
    flow_map = {fl.id: fl for fl in flows}
    adj = state.edges.adjacency()
    diff = state.positions[:, None, :] - state.positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    behavior = dict(state.behavior)
    waypoint = dict(state.waypoint)
    command = dict(state.command)
    controls: Dict[int, ControlInput] = {}
    arrived = set()

    for i in range(1, state.m + 1):
        S = behavior.get(i, SWARMING)
        wp = waypoint.get(i)
        target = command.get(i)
        if target is not None:
            wp = flow_midpoint(flow_map[target], state.positions)
            S = RECONFIGURE
        if state.membership.get(i, EMPTY) and S is not RECONFIGURE:
            point, on_path = _target_flow(i, state, flow_map, p)
            if point is not None:
                wp = point
                S = RECONFIGURE
            elif on_path:
                S = SWARMING

        xi = state.pos(i)
        u_e = np.zeros(2)
        u_o = np.zeros(2)
        if S is SWARMING:
            u_o = dispersion_control(i, state, p, adj)
        if S is RECONFIGURE:
            if wp is None:
                S = SWARMING
            else:
                u_e = waypoint_control(xi, wp, state.velocities[i - 1])
                if at_waypoint(i, wp, state, p, dist):
                    S = SWARMING
                    wp = None
                    if target is not None:
                        command[i] = None
                        arrived.add(i)

        nc = classify_neighbors(i, state, p, adj, dist)
        grad = np.zeros(2)
        for j in sorted(nc.attract):
            x_ij = xi - state.pos(j)
            d = dist[i - 1, j - 1]
            if d >= p.rho2:
                # the barrier is singular at rho2; evaluate just inside it
                x_ij = x_ij * (p.rho2 * (1.0 - 1e-9) / d)
            grad += attract_gradient(x_ij, p)
        for j in sorted(nc.repel):
            grad += repel_gradient(xi - state.pos(j), p)
        for j in sorted(nc.collide):
            grad += collision_gradient(xi - state.pos(j), p)

        u = saturate(u_e + u_o - grad, p.vmax)
        controls[i] = ControlInput(u=u, u_e=u_e, u_o=u_o, u_pot=-grad)
        behavior[i] = S
        waypoint[i] = None if S is SWARMING else wp

    return PcpResult(controls, behavior, waypoint, command, arrived)


class IntegrationFault(RuntimeError):
    pass


def integrate(
    positions: np.ndarray, controls: Mapping[int, ControlInput], p: Params, m: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Explicit Euler step for the mobile agents; statics stay put."""
    new_pos = positions.copy()
    vel = np.zeros_like(positions)
    for i in range(1, m + 1):
        if i not in controls:
            raise IntegrationFault(f"no control for agent {i}")
        u = controls[i].u
        if not np.all(np.isfinite(u)):
            raise IntegrationFault(f"non-finite control for agent {i}")
        new_pos[i - 1] = positions[i - 1] + p.dt * u
        vel[i - 1] = u
    return new_pos, vel
