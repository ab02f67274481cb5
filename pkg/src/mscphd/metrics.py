"""OSPA distance between finite sets of positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class OspaParams:
    c: float = 100.0
    p: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("OSPA cutoff c must be positive")
        if self.p < 1:
            raise ValueError("OSPA order p must be at least 1")


def min_cost_assignment(cost):
    """Optimal assignment of the rows of a (possibly rectangular) cost matrix.

    Returns ``(rows, cols, total)``; every row is matched when there are no
    more rows than columns, and vice versa.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("costs must be finite and nonnegative")
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, float(cost[rows, cols].sum())


def ospa(truth, est, params=None):
    """OSPA distance between two sets of points (rows), cutoff ``c`` and order ``p``."""
    params = params or OspaParams()
    X = np.asarray(truth, dtype=float).reshape(len(truth), -1) if len(truth) else np.zeros((0, 2))
    Y = np.asarray(est, dtype=float).reshape(len(est), -1) if len(est) else np.zeros((0, 2))
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(params.c)
    c, p = params.c, params.p
    D = np.minimum(cdist(X, Y), c) ** p
    _, _, total = min_cost_assignment(D)
    total += c**p * abs(m - n)
    return float((total / max(m, n)) ** (1.0 / p))
