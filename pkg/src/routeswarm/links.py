"""Distance-driven link quality: reception sigmoid, ETX weight, path cost."""
from __future__ import annotations

import math
from typing import Iterable, Tuple

import numpy as np
from scipy.special import expit

from routeswarm.model import Params

ETX_CAP = 1e18
_EXP_CAP = math.log(ETX_CAP - 1.0)


def _check_distance(d):
    if np.any(np.asarray(d) < 0):
        raise ValueError(f"negative distance: {d!r}")


def reception_rate(d, p: Params):
    """Expected packet reception rate, decaying from 1 to 0 around ``p.b``."""
    _check_distance(d)
    out = expit(-p.a * (np.asarray(d, dtype=float) - p.b))
    return float(out) if np.ndim(out) == 0 else out


def link_weight(d, p: Params):
    """ETX of a link of length ``d``: ``1 + exp(a (d - b))``.

    Capped at ``ETX_CAP`` so stretched links keep a finite, ordered cost.
    """
    _check_distance(d)
    x = np.minimum(p.a * (np.asarray(d, dtype=float) - p.b), _EXP_CAP)
    out = 1.0 + np.exp(x)
    return float(out) if np.ndim(out) == 0 else out


def flow_cost(edges: Iterable[Tuple[int, int]], positions: np.ndarray, p: Params) -> float:
    """Sum of ETX over ``edges``; agent ``i`` sits at ``positions[i - 1]``."""
    edges = list(edges)
    if not edges:
        return 0.0
    n = len(positions)
    for i, j in edges:
        if not (1 <= i <= n and 1 <= j <= n):
            raise KeyError(f"no position for edge ({i}, {j})")
    idx = np.asarray(edges, dtype=int) - 1
    d = np.linalg.norm(positions[idx[:, 0]] - positions[idx[:, 1]], axis=1)
    return math.fsum(np.atleast_1d(link_weight(d, p)))
