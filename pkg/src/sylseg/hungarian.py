"""Kuhn-Munkres assignment on rectangular matrices.

Shortest-augmenting-path form with row/column potentials, O(n^3) on the
padded square problem. The inner scans are vectorised over columns.
"""

from __future__ import annotations

import numpy as np


def _solve_square_min(cost: np.ndarray) -> np.ndarray:
    """Return ``col_of_row`` minimising total cost of a square matrix."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    # row_of_col[j] = row (1-based) matched to column j; column 0 is the virtual root
    row_of_col = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used
            free[0] = False
            cur = cost[i0 - 1] - u[i0] - v[1:]
            cols = np.flatnonzero(free[1:]) + 1
            better = cur[cols - 1] < minv[cols]
            upd = cols[better]
            minv[upd] = cur[upd - 1]
            way[upd] = j0
            # first column with the smallest slack keeps results deterministic
            j1 = cols[np.argmin(minv[cols])]
            delta = minv[j1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def hungarian(matrix, maximize: bool = False) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment of rows to columns.

    Returns ``min(R, C)`` ``(row, col)`` pairs sorted by row. The matrix is
    zero-padded to square internally; padded pairs are dropped.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix must be finite")
    r, c = m.shape
    if r == 0 or c == 0:
        return []
    n = max(r, c)
    cost = np.zeros((n, n))
    cost[:r, :c] = -m if maximize else m
    col_of_row = _solve_square_min(cost)
    return [(i, int(col_of_row[i])) for i in range(r) if col_of_row[i] < c]


def assignment_total(matrix, pairs) -> float:
    m = np.asarray(matrix, dtype=np.float64)
    total = 0.0
    for i, j in sorted(pairs):
        total += m[i, j]
    return total
