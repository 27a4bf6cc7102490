"""Connectivity-free relay allocation across flows.

With relays spaced evenly on a flow of length ``d``, the flow cost is
``W(m) = (m + 1) * w(d / (m + 1))``, which is convex in ``m``. Moving one
relay at a time from the cheapest donor to the most grateful receiver
therefore reaches the global optimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from routeswarm.links import link_weight
from routeswarm.model import Params

BRUTE_FORCE_MAX_TOTAL = 12
BRUTE_FORCE_MAX_FLOWS = 5


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    counts: Dict[int, int]
    total: int
    cost: float = float("nan")
    moves: int = 0

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("allocation counts do not sum to total")


def equidistant_positions(src, dst, m_k: int) -> np.ndarray:
    """``m_k`` points splitting the segment ``src -> dst`` into equal hops."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if m_k < 0:
        raise ValueError("m_k must be non-negative")
    if np.allclose(src, dst, rtol=0, atol=0):
        raise ValueError("degenerate flow: source equals destination")
    t = np.arange(1, m_k + 1) / (m_k + 1)
    return src + t[:, None] * (dst - src)


def ideal_flow_cost(d_k: float, m_k: int, p: Params) -> float:
    if d_k <= 0 or m_k < 0:
        raise ValueError("need d_k > 0 and m_k >= 0")
    return (m_k + 1) * link_weight(d_k / (m_k + 1), p)


def total_cost(lengths: Mapping[int, float], counts: Mapping[int, int], p: Params) -> float:
    return math.fsum(ideal_flow_cost(lengths[k], counts[k], p) for k in sorted(lengths))


def _check(lengths, total):
    if total < 0:
        raise ValueError("total must be non-negative")
    if not lengths:
        raise ValueError("need at least one flow")
    if any(v <= 0 for v in lengths.values()):
        raise ValueError("flow lengths must be positive")


def round_robin(flows: Sequence[int], total: int) -> Dict[int, int]:
    counts = {k: 0 for k in flows}
    for t in range(total):
        counts[flows[t % len(flows)]] += 1
    return counts


def greedy_allocate(
    flow_lengths: Mapping[int, float],
    total: int,
    p: Params,
    start: Optional[Mapping[int, int]] = None,
) -> Allocation:
    """Move one relay at a time while the move strictly lowers total cost.

    The donor is the flow whose loss of a relay raises its cost least; the
    receiver is the other flow whose gain lowers its cost most. Ties go to
    the lowest flow id.
    """
    _check(flow_lengths, total)
    flows = sorted(flow_lengths)
    counts = dict(start) if start is not None else round_robin(flows, total)
    if sorted(counts) != flows or sum(counts.values()) != total or min(counts.values()) < 0:
        raise ValueError("start allocation is infeasible")
    W = lambda k, m: ideal_flow_cost(flow_lengths[k], m, p)  # noqa: E731
    moves = 0
    while True:
        donors = [k for k in flows if counts[k] > 0]
        if not donors or len(flows) < 2:
            break
        inc = {k: W(k, counts[k] - 1) - W(k, counts[k]) for k in donors}
        donor = min(donors, key=lambda k: (inc[k], k))
        others = [k for k in flows if k != donor]
        dec = {k: W(k, counts[k]) - W(k, counts[k] + 1) for k in others}
        receiver = max(others, key=lambda k: (dec[k], -k))
        if not dec[receiver] > inc[donor]:
            break
        counts[donor] -= 1
        counts[receiver] += 1
        moves += 1
    return Allocation(counts, total, total_cost(flow_lengths, counts, p), moves)


def brute_force_allocate(flow_lengths: Mapping[int, float], total: int, p: Params) -> Allocation:
    """Exhaustive minimum over all non-negative compositions of ``total``."""
    _check(flow_lengths, total)
    if total > BRUTE_FORCE_MAX_TOTAL or len(flow_lengths) > BRUTE_FORCE_MAX_FLOWS:
        raise CapacityError(
            f"brute force limited to {BRUTE_FORCE_MAX_TOTAL} relays and "
            f"{BRUTE_FORCE_MAX_FLOWS} flows"
        )
    flows = sorted(flow_lengths)
    f = len(flows)
    best = None
    # stars and bars: choose f - 1 bar positions among total + f - 1 slots
    for bars in itertools.combinations(range(total + f - 1), f - 1):
        edges = (-1,) + bars + (total + f - 1,)
        parts = [edges[t + 1] - edges[t] - 1 for t in range(f)]
        counts = dict(zip(flows, parts))
        c = total_cost(flow_lengths, counts, p)
        if best is None or c < best[0]:
            best = (c, counts)
    return Allocation(best[1], total, best[0])
