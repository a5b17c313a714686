"""Minimum-cost bipartite assignment (Kuhn-Munkres with row potentials)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total_cost(self, cost: np.ndarray) -> float:
        return float(sum(cost[r, c] for r, c in self.pairs))


def _hungarian_rows_le_cols(cost: np.ndarray) -> list[int]:
    # Shortest augmenting path with dual potentials, O(n^2 m). Rows are
    # inserted in index order and columns scanned left to right with a strict
    # comparison, so among equal-cost optima the lowest row index is settled
    # first and keeps the lowest free column.
    n, m = cost.shape
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) assigned to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = -1
            row = cost[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col


def solve(cost) -> list[tuple[int, int]]:
    """Optimal one-to-one pairs covering min(M, N) rows/cols."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")
    if c.shape[0] <= c.shape[1]:
        return [(r, col) for r, col in enumerate(_hungarian_rows_le_cols(c))]
    col_to_row = _hungarian_rows_le_cols(c.T.copy())
    return sorted((r, col) for col, r in enumerate(col_to_row))


def assign(cost, max_cost: float) -> Assignment:
    """Solve the assignment, then drop pairs whose cost exceeds `max_cost`."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        c = c.reshape(0, 0) if c.size == 0 else c
    n_rows, n_cols = c.shape if c.ndim == 2 else (0, 0)
    pairs = [(r, col) for r, col in solve(c) if c[r, col] <= max_cost]
    matched_r = {r for r, _ in pairs}
    matched_c = {col for _, col in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_rows=[r for r in range(n_rows) if r not in matched_r],
        unmatched_cols=[col for col in range(n_cols) if col not in matched_c],
    )
