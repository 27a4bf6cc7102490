"""Relay swarms that keep multi-flow ad hoc networks connected and cheap.

Mobile relays place themselves between static endpoints so that every active
flow is routed over low-ETX links. A global layer (``icp``) decides which
relay serves which flow; a local layer (``pcp``) turns that into motion with
potential fields while never breaking a link that the network depends on.
"""
from routeswarm.allocation import (
    Allocation,
    brute_force_allocate,
    equidistant_positions,
    greedy_allocate,
    ideal_flow_cost,
)
from routeswarm.links import flow_cost, link_weight, reception_rate
from routeswarm.model import (
    BehaviorState,
    Flow,
    FlowEvent,
    Params,
    Scenario,
    WorldState,
    validate_scenario,
)
from routeswarm.scenarios import random_scenario, reference_scenario, single_flow_scenario
from routeswarm.sim import Simulation, Trace, run, summarize

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BehaviorState",
    "Flow",
    "FlowEvent",
    "Params",
    "Scenario",
    "Simulation",
    "Trace",
    "WorldState",
    "brute_force_allocate",
    "equidistant_positions",
    "flow_cost",
    "greedy_allocate",
    "ideal_flow_cost",
    "link_weight",
    "random_scenario",
    "reception_rate",
    "reference_scenario",
    "run",
    "single_flow_scenario",
    "summarize",
    "validate_scenario",
]
