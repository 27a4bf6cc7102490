import numpy as np
import pytest

from routeswarm.graph import initial_edges
from routeswarm.model import BehaviorState, Flow, Params, WorldState


@pytest.fixture
def p():
    return Params()


def make_state(positions, m, edges=None, membership=None, behavior=None, bridges=None, p=None):
    """WorldState around explicit positions; unspecified maps default to idle/swarming."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    p = p or Params()
    mem = {i: frozenset() for i in range(1, n + 1)}
    mem.update({i: frozenset(v) for i, v in (membership or {}).items()})
    beh = {i: BehaviorState.SWARMING for i in range(1, m + 1)}
    beh.update(behavior or {})
    br = {i: False for i in range(1, n + 1)}
    br.update(bridges or {})
    return WorldState(
        tick=0,
        positions=pos,
        velocities=np.zeros_like(pos),
        edges=edges if edges is not None else initial_edges(pos, p),
        behavior=beh,
        membership=mem,
        command={i: None for i in range(1, m + 1)},
        waypoint={i: None for i in range(1, m + 1)},
        bridges=br,
        m=m,
        s=n - m,
    )


def two_flow_layout():
    """Two horizontal three-hop flows 1.8 apart, joined by a vertical pair of idle mobiles.

    Mobiles 1-2 relay the lower flow, 3-4 the upper one, 5-6 sit between.
    Statics 7, 8 end the lower flow (id 11) and 9, 10 the upper one (id 12).
    """
    mobiles = [(0.6, 0.0), (1.2, 0.0), (0.6, 1.8), (1.2, 1.8), (0.9, 0.6), (0.9, 1.2)]
    statics = [(0.0, 0.0), (1.8, 0.0), (0.0, 1.8), (1.8, 1.8)]
    flows = [Flow(11, 7, 8), Flow(12, 9, 10)]
    return np.array(mobiles + statics), 6, flows


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=str):
        terminalreporter.write_line(RESULTS[key])
