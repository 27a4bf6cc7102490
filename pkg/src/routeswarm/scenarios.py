"""Ready-made scenarios: single flows, the three-phase reference run and random layouts."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from routeswarm.model import Flow, FlowEvent, Params, Scenario, validate_scenario


def single_flow_scenario(
    m: int,
    gaps: Optional[Sequence[float]] = None,
    params: Optional[Params] = None,
    max_ticks: int = 3000,
) -> Scenario:
    """One flow along the x axis served by ``m`` relays on the segment.

    ``gaps`` are the ``m + 1`` initial hop lengths from source to
    destination; the default alternates short and long hops around 0.6 so
    that the relays start away from even spacing.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    if gaps is None:
        pattern = [0.5, 0.7, 0.55, 0.65]
        gaps = [pattern[t % len(pattern)] for t in range(m + 1)]
    gaps = [float(g) for g in gaps]
    if len(gaps) != m + 1 or min(gaps) <= 0:
        raise ValueError("need m + 1 positive gaps")
    xs = np.cumsum(gaps)
    L = float(xs[-1])
    mobiles = [(float(x), 0.0) for x in xs[:-1]]
    return Scenario(
        m=m,
        s=2,
        static_positions=[(0.0, 0.0), (L, 0.0)],
        initial_mobile_positions=np.array(mobiles).reshape(-1, 2),
        flows=[Flow(m + 3, m + 1, m + 2)],
        params=params or Params(),
        max_ticks=max_ticks,
        name=f"single-flow-m{m}",
    )


REFERENCE_ACTIVATE = 450
REFERENCE_DEACTIVATE = 850
REFERENCE_END = 1300


def reference_scenario(scale: int = 10, params: Optional[Params] = None) -> Scenario:
    """Nine mobiles, six statics, three flows.

    Flow 1 runs horizontally from A to B with four relays. Flow 2 is a short
    diagonal C-D beside static G, served by one relay. Flow 3 (E to G,
    vertical) starts inactive; three mobiles already sit on its line as
    bridges and one more (the connector near E) is idle. Flow 3 switches on
    at ``450 * scale`` and flow 2 switches off at ``850 * scale``.
    """
    A, B = (0.0, 0.0), (3.5, 0.0)
    C, D = (0.55, 4.2), (0.7, 3.2)
    E, G = (0.0, 0.75), (0.0, 3.75)
    mobiles = [
        (0.7, 0.0), (1.4, 0.0), (2.1, 0.0), (2.8, 0.0),  # flow 1 relays
        ((C[0] + D[0]) / 2, (C[1] + D[1]) / 2),  # flow 2 relay
        (0.25, 0.75),  # connector beside E
        (0.0, 1.5), (0.0, 2.25), (0.0, 3.0),  # on flow 3's line
    ]
    statics = [A, B, C, D, E, G]
    flows = [Flow(16, 10, 11), Flow(17, 12, 13), Flow(18, 14, 15, active=False)]
    events = [
        FlowEvent(REFERENCE_ACTIVATE * scale, 18, True),
        FlowEvent(REFERENCE_DEACTIVATE * scale, 17, False),
    ]
    return Scenario(
        m=9,
        s=6,
        static_positions=statics,
        initial_mobile_positions=mobiles,
        flows=flows,
        events=events,
        params=params or Params(),
        max_ticks=REFERENCE_END * scale,
        name="reference",
    )


def random_scenario(
    seed: int,
    m_range=(3, 7),
    s_range=(2, 4),
    max_flows: int = 2,
    max_ticks: int = 1500,
    params: Optional[Params] = None,
    attempts: int = 200,
) -> Scenario:
    """Random connected layout grown outward from a single agent.

    Each new agent lands within ``0.9 * rho1`` of an already placed one and
    at least ``2 * rho0`` from all others, so the initial graph is connected
    by construction. Flows join random pairs of statics; when there are two
    flows the second switches on a third of the way through the run.
    """
    p = params or Params()
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        s = int(rng.integers(s_range[0], s_range[1] + 1))
        pts = [np.zeros(2)]
        while len(pts) < m + s:
            anchor = pts[int(rng.integers(len(pts)))]
            r = rng.uniform(0.5 * p.rho1, 0.9 * p.rho1)
            th = rng.uniform(0, 2 * np.pi)
            cand = anchor + r * np.array([np.cos(th), np.sin(th)])
            if min(np.linalg.norm(cand - q) for q in pts) >= 2 * p.rho0:
                pts.append(cand)
        pts = np.array(pts)
        order = rng.permutation(m + s)
        statics = pts[order[:s]]
        mobiles = pts[order[s:]]
        n = m + s
        pairs = [(i, j) for i in range(s) for j in range(i + 1, s)]
        rng.shuffle(pairs)
        nf = int(rng.integers(1, max_flows + 1))
        chosen = pairs[:nf]
        flows = []
        for t, (i, j) in enumerate(chosen):
            flows.append(Flow(n + 1 + t, m + 1 + i, m + 1 + j, active=(t == 0)))
        events = [FlowEvent(max_ticks // 3, fl.id, True) for fl in flows[1:]]
        sc = Scenario(
            m=m,
            s=s,
            static_positions=statics,
            initial_mobile_positions=mobiles,
            flows=flows,
            events=events,
            params=p,
            max_ticks=max_ticks,
            seed=seed,
            name=f"random-{seed}",
        )
        if not validate_scenario(sc):
            return sc
    raise RuntimeError(f"no valid layout after {attempts} attempts (seed {seed})")
