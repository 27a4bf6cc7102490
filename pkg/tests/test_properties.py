import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from routeswarm.allocation import (
    brute_force_allocate,
    equidistant_positions,
    greedy_allocate,
    ideal_flow_cost,
    total_cost,
)
from routeswarm.graph import EdgeSet, flow_subgraph, initial_edges, pairwise_distances, update_edges
from routeswarm.icp import build_supergraph, detect_bridges, initial_membership
from routeswarm.links import flow_cost, link_weight, reception_rate
from routeswarm.model import Flow, Params
from routeswarm.pcp import (
    attract_gradient,
    attract_potential,
    collision_gradient,
    collision_potential,
    repel_gradient,
    repel_potential,
)

P = Params()
coords = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def layout(n_min, n_max):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.lists(st.tuples(coords, coords), min_size=n, max_size=n)
    ).map(lambda pts: np.array(pts, dtype=float))


# link model

grid = st.integers(0, 3000).map(lambda k: k * 1e-3)


@given(grid, grid)
def test_weight_monotone(d1, d2):
    assume(d1 < d2)
    assert link_weight(d1, P) < link_weight(d2, P)


def test_weight_monotone_dense_grid():
    w = link_weight(np.linspace(0.0, 4.0, 40001), P)
    assert np.all(np.diff(w) > 0)


@given(st.floats(0.0, 4.0))
def test_weight_reciprocal(d):
    assert link_weight(d, P) * reception_rate(d, P) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.0, 2.5), st.floats(1e-4, 0.5))
def test_weight_discrete_convex(d, h):
    assume(d - h >= 0)
    w = lambda x: link_weight(x, P)
    lhs = w(d - h) + w(d + h) - 2 * w(d)
    assert lhs >= -1e-12 * max(w(d + h), 1.0)


# proximity graph

@settings(max_examples=60)
@given(layout(2, 9))
def test_update_idempotent(pos):
    assume(np.all(pairwise_distances(pos)[np.triu_indices(len(pos), 1)] > 1e-9))
    es = initial_edges(pos, P)
    again = update_edges(es, pos, P, tick=1)
    assert again.edges == es.edges
    assert again.established == es.established


@settings(max_examples=60)
@given(layout(2, 8), st.lists(st.tuples(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05)), min_size=8, max_size=8))
def test_no_chatter_in_band(pos, jitter):
    moved = pos + np.array(jitter[: len(pos)])
    d0, d1 = pairwise_distances(pos), pairwise_distances(moved)
    es0 = initial_edges(pos, P)
    es1 = update_edges(es0, moved, P, tick=1)
    band = lambda d: P.rho1 < d <= P.rho2
    n = len(pos)
    for i in range(n):
        for j in range(i + 1, n):
            if band(d0[i, j]) and band(d1[i, j]):
                assert ((i + 1, j + 1) in es0) == ((i + 1, j + 1) in es1)


@settings(max_examples=60)
@given(layout(3, 10), st.data())
def test_flow_subgraph_within_graph(pos, data):
    es = initial_edges(pos, P)
    n = len(pos)
    membership = {
        i: frozenset(data.draw(st.sets(st.sampled_from([20, 21]), max_size=2))) for i in range(1, n + 1)
    }
    for k in (20, 21):
        verts, edges = flow_subgraph(es, membership, k)
        assert edges <= es.edges
        assert all(k in membership[v] for e in edges for v in e)


# allocation

lengths_st = st.lists(st.floats(0.2, 8.0), min_size=1, max_size=4)


@settings(max_examples=80)
@given(lengths_st, st.integers(0, 10))
def test_greedy_matches_brute_force(ls, total):
    lengths = {k + 1: L for k, L in enumerate(ls)}
    assert greedy_allocate(lengths, total, P).cost == brute_force_allocate(lengths, total, P).cost


@settings(max_examples=60)
@given(lengths_st, st.integers(0, 10), st.data())
def test_greedy_start_invariant(ls, total, data):
    lengths = {k + 1: L for k, L in enumerate(ls)}
    cuts = sorted(data.draw(st.lists(st.integers(0, total), min_size=len(ls) - 1, max_size=len(ls) - 1)))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [total])]
    start = {k: parts[k - 1] for k in lengths}
    ref = greedy_allocate(lengths, total, P)
    got = greedy_allocate(lengths, total, P, start=start)
    assert got.cost == pytest.approx(ref.cost, rel=1e-12)
    assert got.cost <= total_cost(lengths, start, P)
    assert got.moves <= total * len(ls)


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.integers(0, 12))
def test_equidistant_cost_ideal(src, dst, m_k):
    src, dst = np.array(src), np.array(dst)
    L = float(np.linalg.norm(dst - src))
    assume(L > 1e-3)
    chain = np.vstack([src, equidistant_positions(src, dst, m_k), dst])
    edges = [(i, i + 1) for i in range(1, len(chain))]
    assert flow_cost(edges, chain, P) == pytest.approx(ideal_flow_cost(L, m_k, P), abs=1e-9)


# potentials

def central_diff(phi, x, h):
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (phi(x + e) - phi(x - e)) / (2 * h)
    return g


angles = st.floats(0.0, 2 * math.pi)


def check_grad(grad, phi, d, theta):
    x = d * np.array([math.cos(theta), math.sin(theta)])
    h = 1e-7 * d
    g = grad(x, P)
    fd = central_diff(lambda y: phi(y, P), x, h)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


@given(st.floats(0.81, 0.99), angles)
def test_attract_gradient_fd(d, theta):
    check_grad(attract_gradient, attract_potential, d, theta)


@given(st.floats(0.81, 0.99), angles)
def test_repel_gradient_fd(d, theta):
    check_grad(repel_gradient, repel_potential, d, theta)


@given(st.floats(0.02, 0.149), angles)
def test_collision_gradient_fd(d, theta):
    check_grad(collision_gradient, collision_potential, d, theta)


# bridges

def grown_layout(seed, n_min=4, n_max=10):
    """Connected layout: each agent lands within link range of an earlier one."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    pts = [np.zeros(2)]
    while len(pts) < n:
        base = pts[int(rng.integers(len(pts)))]
        r, t = rng.uniform(0.3, 0.75), rng.uniform(0, 2 * math.pi)
        q = base + r * np.array([math.cos(t), math.sin(t)])
        if min(np.linalg.norm(q - x) for x in pts) > 0.2:
            pts.append(q)
    return np.array(pts)


connected_layout = st.integers(0, 2**32 - 1).map(grown_layout)


def unique_shortest_paths(sg, ends):
    G = nx.Graph()
    G.add_nodes_from(sg.vertices)
    G.add_edges_from(sg.edges)
    for a, k in enumerate(ends):
        for l in ends[a + 1:]:
            if not nx.has_path(G, k, l):
                return False
            if sum(1 for _ in nx.all_shortest_paths(G, k, l)) != 1:
                return False
    return True


@settings(max_examples=60, deadline=None)
@given(connected_layout, st.randoms(use_true_random=False))
def test_bridges_relabel_invariant(pos, rnd):
    n = len(pos)
    es = initial_edges(pos, P)
    ids = list(range(1, n + 1))
    a, b, c, d = rnd.sample(ids, 4)
    flows = [Flow(n + 1, a, b), Flow(n + 2, c, d)]
    mem = initial_membership(es, flows, pos, P)
    sg = build_supergraph(es, flows, mem)
    assume(unique_shortest_paths(sg, [n + 1, n + 2]))
    base = detect_bridges(sg, flows)

    perm = ids[:]
    rnd.shuffle(perm)
    relabel = dict(zip(ids, perm))
    es2 = EdgeSet.from_pairs((relabel[i], relabel[j]) for i, j in es.edges)
    mem2 = {relabel[i]: ms for i, ms in mem.items()}
    flows2 = [Flow(fl.id, relabel[fl.source], relabel[fl.destination]) for fl in flows]
    got = detect_bridges(build_supergraph(es2, flows2, mem2), flows2)
    assert got == {relabel[v]: f for v, f in base.items()}
