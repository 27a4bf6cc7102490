"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS or FAIL line; the lines are printed together in
the terminal summary (see ``conftest.py``). Runtime budgets are part of
the criteria and are asserted too.
"""
import contextlib
import math
import time

import networkx as nx
import numpy as np
import pytest

from routeswarm.allocation import brute_force_allocate, greedy_allocate, ideal_flow_cost
from routeswarm.cli import EXIT_OK, main
from routeswarm.graph import initial_edges
from routeswarm.icp import build_supergraph, icp_step, initial_membership
from routeswarm.io import save_scenario
from routeswarm.model import BehaviorState, Flow, Params
from routeswarm.pcp import (
    attract_gradient,
    attract_potential,
    collision_gradient,
    collision_potential,
    repel_gradient,
    repel_potential,
)
from routeswarm.scenarios import (
    REFERENCE_ACTIVATE,
    REFERENCE_DEACTIVATE,
    random_scenario,
    reference_scenario,
    single_flow_scenario,
)
from routeswarm.sim import Simulation, run, settling_index

RESULTS = {}


@contextlib.contextmanager
def criterion(n, label):
    detail = {}
    try:
        yield detail
    except BaseException:
        RESULTS[n] = f"FAIL criterion {n}: {label} {detail.get('info', '')}".rstrip()
        raise
    RESULTS[n] = f"PASS criterion {n}: {label} {detail.get('info', '')}".rstrip()


# shared reference run: trace plus the set of manoeuvring agents per tick

@pytest.fixture(scope="module")
def reference_run():
    sc = reference_scenario()
    t0 = time.perf_counter()
    sim = Simulation(sc, record_positions=False)
    reconf = []
    for _ in range(sc.max_ticks):
        sim.step()
        reconf.append(any(b is BehaviorState.RECONFIGURE for b in sim.state.behavior.values()))
    return sc, sim.trace, reconf, time.perf_counter() - t0


def test_c1_greedy_optimal():
    with criterion(1, "greedy allocation equals brute force") as d:
        rng = np.random.default_rng(2024)
        p = Params()
        t0 = time.perf_counter()
        n = 0
        for _ in range(240):
            f = int(rng.integers(1, 6))
            total = int(rng.integers(0, 13))
            lengths = {k + 1: float(rng.uniform(0.1, 15 * p.b)) for k in range(f)}
            g = greedy_allocate(lengths, total, p)
            b = brute_force_allocate(lengths, total, p)
            assert g.cost == b.cost, (lengths, total, g, b)
            n += 1
        dt = time.perf_counter() - t0
        d["info"] = f"({n} instances, {dt:.2f}s)"
        assert n >= 200 and dt < 10


def test_c2_convexity():
    with criterion(2, "ideal flow cost is discretely convex in m") as d:
        p = Params()
        t0 = time.perf_counter()
        worst = math.inf
        for mult in (2, 5, 10):
            W = [ideal_flow_cost(mult * p.b, m, p) for m in range(0, 52)]
            for m in range(1, 51):
                worst = min(worst, W[m - 1] + W[m + 1] - 2 * W[m])
        dt = time.perf_counter() - t0
        d["info"] = f"(min second difference {worst:.3g}, {dt:.3f}s)"
        assert worst >= -1e-9 and dt < 1


@pytest.mark.parametrize("m_k", [2, 3, 5])
def test_c3_equidistant(m_k):
    key = f"3/m={m_k}"
    with criterion(key, f"single flow with {m_k} relays settles equidistant") as d:
        sc = single_flow_scenario(m_k)
        p = sc.params
        t0 = time.perf_counter()
        tr = run(sc)
        dt = time.perf_counter() - t0
        assert tr.fault is None
        pos = tr.positions[-1]
        src, dst = pos[sc.m], pos[sc.m + 1]
        L = float(np.linalg.norm(dst - src))
        xs = sorted(float(x) for x in pos[: sc.m, 0])
        chain = [float(src[0])] + xs + [float(dst[0])]
        gaps = np.diff(chain)
        ideal = L / (m_k + 1)
        spacing = float(np.max(np.abs(gaps - ideal)) / ideal)
        k = sc.flows[0].id
        cost = tr.cost_series(k)[-1]
        gap = abs(cost - ideal_flow_cost(L, m_k, p)) / ideal_flow_cost(L, m_k, p)
        d["info"] = f"(spacing err {spacing:.2e}, cost err {gap:.2e}, {dt:.1f}s)"
        assert np.all(np.abs(pos[: sc.m, 1]) < 1e-9)
        assert spacing <= 0.02 and gap <= 0.01 and dt < 30


def test_c4_gradients():
    with criterion(4, "potential gradients match central differences") as d:
        p = Params()
        rng = np.random.default_rng(7)
        t0 = time.perf_counter()
        cases = [
            (attract_gradient, attract_potential, p.rho1 + 1e-3, p.rho2 - 1e-3),
            (repel_gradient, repel_potential, p.rho1 + 1e-3, p.rho2 - 1e-3),
            (collision_gradient, collision_potential, 0.1 * p.rho0, p.rho0 - 1e-4),
        ]
        n = 0
        worst = 0.0
        for grad, phi, lo, hi in cases:
            for _ in range(400):
                r = rng.uniform(lo, hi)
                th = rng.uniform(0, 2 * math.pi)
                x = r * np.array([math.cos(th), math.sin(th)])
                h = 1e-7 * r
                fd = np.array([
                    (phi(x + e, p) - phi(x - e, p)) / (2 * h) for e in (np.array([h, 0.0]), np.array([0.0, h]))
                ])
                g = grad(x, p)
                worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
                n += 1
        dt = time.perf_counter() - t0
        d["info"] = f"({n} samples, worst rel err {worst:.2e}, {dt:.2f}s)"
        assert n >= 1000 and worst <= 1e-6 and dt < 1


def test_c5_connectivity(reference_run):
    with criterion(5, "connected at every tick, core connected at every ICP run") as d:
        sc, tr, _, ref_secs = reference_run
        traces = [tr]
        t0 = time.perf_counter()
        for seed in range(25):
            traces.append(run(random_scenario(seed), record_positions=False))
        dt = ref_secs + time.perf_counter() - t0
        ticks = sum(len(t.records) for t in traces)
        icp_runs = sum(r.icp_ran for t in traces for r in t.records)
        bad_ticks = sum(not r.connected for t in traces for r in t.records)
        bad_core = sum(r.icp_ran and not r.core_connected for t in traces for r in t.records)
        faults = [t.fault for t in traces if t.fault]
        d["info"] = (
            f"({len(traces)} scenarios, {ticks} ticks, {icp_runs} ICP runs, "
            f"{bad_ticks} disconnected ticks, {bad_core} split cores, {dt:.0f}s)"
        )
        assert not faults, faults
        assert bad_ticks == 0 and bad_core == 0 and dt < 300


def test_c6_reference_phases(reference_run):
    with criterion(6, "reference run reallocates, improves and redistributes") as d:
        sc, tr, reconf, secs = reference_run
        act, off, end = REFERENCE_ACTIVATE * 10, REFERENCE_DEACTIVATE * 10, sc.max_ticks
        assert tr.fault is None and len(tr.records) == end

        # (a) an ICP reallocation in each phase that follows an event
        cmds = tr.commands()
        phase2 = [c for c in cmds if act <= c[0] < off]
        phase3 = [c for c in cmds if c[0] >= off]
        assert not [c for c in cmds if c[0] < act]
        assert phase2 and phase3
        assert any(target == 18 for _, _, target in phase2)
        start = sc.initial_positions()
        mem0 = initial_membership(initial_edges(start, sc.params), sc.flows, start, sc.params)
        relay17 = {j for j in sc.mobile_ids if 17 in mem0[j]}
        assert relay17
        assert any(agent in relay17 for _, agent, _ in phase3)

        # (b) the new flow gets cheaper until it settles
        c18 = tr.cost_series(18)
        settle = settling_index(c18, act, off)
        assert settle < off - 50
        assert c18[settle] < c18[act]
        arrived = next(t for t in range(act, off) if not reconf[t])
        seg = c18[arrived:settle + 1]
        ripple = float(np.max(seg / np.minimum.accumulate(seg)))
        assert ripple <= 1.01
        steps = np.diff(c18[act:settle + 1])
        literal = float(np.mean(steps < 0))

        # (c) the surviving flows cost less after redistribution
        survivors = tr.cost_series(16) + tr.cost_series(18)
        before = float(survivors[off - 1])
        after = float(np.mean(survivors[-50:]))
        assert after < before

        d["info"] = (
            f"(commands {[(t, a, k) for t, a, k in cmds]}; flow 18 {c18[act]:.3f} -> {c18[settle]:.3f} "
            f"settled at {settle}, ripple {100 * (ripple - 1):.2f}% after arrival at {arrived}, "
            f"{100 * literal:.0f}% of ticks strictly decreasing; survivors {before:.3f} -> {after:.3f}; {secs:.1f}s)"
        )
        assert secs < 120


def test_c7_deterministic_files(tmp_path):
    with criterion(7, "repeat runs write byte-identical trace files") as d:
        cases = [("reference", reference_scenario(), "csv"), ("reference", reference_scenario(), "json")]
        cases += [(f"random{s}", random_scenario(s), "csv") for s in range(3)]
        compared = 0
        for name, sc, kind in cases:
            path = tmp_path / f"{name}.json"
            save_scenario(sc, path)
            blobs = []
            for tag in ("a", "b"):
                out = tmp_path / f"{name}-{kind}-{tag}"
                rc = main(["run", "--scenario", str(path), "--out", str(out), "--format", kind, "--quiet"])
                assert rc == EXIT_OK
                blobs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
            assert blobs[0] == blobs[1], name
            compared += len(blobs[0])
        d["info"] = f"({len(cases)} scenario runs, {compared} file pairs identical)"


def contraction_oracle(es, flows, membership, m):
    """Supergraph by pairwise comparison of agent groups."""
    G = nx.Graph()
    G.add_edges_from(es.edges)
    active = [fl.id for fl in flows if fl.active]
    groups = {k: {i for i, ms in membership.items() if k in ms} for k in active}
    in_flow = set().union(*groups.values()) if groups else set()
    for i in membership:
        if i not in in_flow and (i > m or (i in G and G.degree(i) >= 2)):
            groups[i] = {i}
    edges = set()
    keys = sorted(groups)
    for a, u in enumerate(keys):
        for v in keys[a + 1:]:
            if groups[u] & groups[v] or any(G.has_edge(x, y) for x in groups[u] for y in groups[v]):
                edges.add((u, v))
    return set(groups), edges


def test_c8_bridge_soundness():
    with criterion(8, "connected core survives pruning; supergraph matches contraction oracle") as d:
        p = Params()
        rng = np.random.default_rng(99)
        checked = 0
        bridges_seen = 0
        while checked < 120:
            n = int(rng.integers(4, 13))
            s = int(rng.integers(2, min(n, 6) + 1))
            m = n - s
            pts = [np.zeros(2)]
            while len(pts) < n:
                base = pts[int(rng.integers(len(pts)))]
                th = rng.uniform(0, 2 * math.pi)
                q = base + rng.uniform(0.3, 0.75) * np.array([math.cos(th), math.sin(th)])
                if min(np.linalg.norm(q - x) for x in pts) > 0.2:
                    pts.append(q)
            pos = np.array(pts)
            order = rng.permutation(n)
            pos = pos[order]
            statics = list(range(m + 1, n + 1))
            f = int(rng.integers(1, min(3, len(statics) // 2) + 1))
            ends = rng.choice(statics, size=2 * f, replace=False)
            flows = [Flow(n + 1 + k, int(ends[2 * k]), int(ends[2 * k + 1])) for k in range(f)]
            es = initial_edges(pos, p)
            res = icp_step(es, flows, pos, p, m)
            G = nx.Graph()
            G.add_nodes_from(range(1, n + 1))
            G.add_edges_from(es.edges)
            core = res.core
            assert core and nx.is_connected(G.subgraph(core)), (pos, flows)
            assert res.core_connected
            mem = initial_membership(es, flows, pos, p)
            sg = build_supergraph(es, flows, mem, m)
            verts, edges = contraction_oracle(es, flows, mem, m)
            assert sg.vertices == verts and sg.edges == edges
            bridges_seen += sum(res.assignment.bridges.values())
            checked += 1
        d["info"] = f"({checked} layouts, {bridges_seen} bridge flags)"
