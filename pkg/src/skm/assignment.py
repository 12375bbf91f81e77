"""Exact minimum-cost assignment via shortest augmenting paths.

O(r^2 c) for an r x c cost matrix with r <= c; k stays small here, so no
further acceleration is needed.
"""

from __future__ import annotations

import numpy as np


def solve_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Match each row to a distinct column minimizing the total cost.

    Returns ``(cols, total)`` where ``cols[i]`` is the column assigned to
    row i and ``total`` is the sum of the selected entries of the
    original matrix.  Requires rows <= columns and finite entries.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    nr, nc = cost.shape
    if nr == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    if nr > nc:
        raise ValueError(f"need rows <= columns, got {nr}x{nc}")
    if not np.isfinite(cost).all():
        raise ValueError("cost entries must be finite")

    # 1-based potentials/matching; index 0 is the virtual start column
    u = np.zeros(nr + 1)
    v = np.zeros(nc + 1)
    matched_row = np.zeros(nc + 1, dtype=np.int64)
    way = np.zeros(nc + 1, dtype=np.int64)
    for i in range(1, nr + 1):
        matched_row[0] = i
        j0 = 0
        minv = np.full(nc + 1, np.inf)
        used = np.zeros(nc + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = matched_row[j0]
            free = np.nonzero(~used[1:])[0] + 1
            reduced = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = reduced < minv[free]
            if better.any():
                upd = free[better]
                minv[upd] = reduced[better]
                way[upd] = j0
            j1 = free[int(np.argmin(minv[free]))]
            delta = minv[j1]
            u[matched_row[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if matched_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            matched_row[j0] = matched_row[j1]
            j0 = j1

    cols = np.zeros(nr, dtype=np.int64)
    for j in range(1, nc + 1):
        if matched_row[j] > 0:
            cols[matched_row[j] - 1] = j - 1
    total = float(cost[np.arange(nr), cols].sum())
    return cols, total


def brute_force_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive reference: try every injection of rows into columns."""
    from itertools import permutations

    cost = np.asarray(cost, dtype=np.float64)
    nr, nc = cost.shape
    if nr > nc:
        raise ValueError(f"need rows <= columns, got {nr}x{nc}")
    rows = np.arange(nr)
    best_cols = None
    best_total = np.inf
    for perm in permutations(range(nc), nr):
        total = float(cost[rows, list(perm)].sum())
        if total < best_total:
            best_total = total
            best_cols = np.array(perm, dtype=np.int64)
    return best_cols, best_total
