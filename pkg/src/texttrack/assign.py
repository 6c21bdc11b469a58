"""Maximum-score one-to-one assignment (Hungarian / Kuhn-Munkres)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MIN_SCORE = 0.3


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_columns: list[int] = field(default_factory=list)
    total: float = 0.0

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def _hungarian_min(cost: np.ndarray) -> np.ndarray:
    """Min-cost assignment for ``n <= m``; returns the column of each row.

    Shortest augmenting paths with dual potentials, O(n^2 m). Rows are
    inserted in order. When several columns attain the minimum slack an
    unassigned column is taken first, then the lowest index, so earlier
    rows keep their earliest columns among equal-cost alternatives.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: 1-based row owning column j
    way = np.zeros(m + 1, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            delta = minv[free].min()
            ties = free & (minv == delta)
            open_ties = ties & (p == 0)
            j1 = int(np.argmax(open_ties)) if open_ties.any() else int(np.argmax(ties))
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            cols[p[j] - 1] = j - 1
    return cols


def solve(scores, min_score: float = DEFAULT_MIN_SCORE) -> AssignmentResult:
    """Maximum-total-score assignment on a rectangular score matrix.

    The optimum is computed over all entries; pairs scoring below
    ``min_score`` are then dropped to the unmatched lists. An empty
    matrix yields an all-unmatched result.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2:
        raise ValueError(f"scores must be 2-D, got shape {s.shape}")
    n, k = s.shape
    if n == 0 or k == 0:
        return AssignmentResult([], list(range(n)), list(range(k)), 0.0)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")

    if n <= k:
        cols = _hungarian_min(-s)
        raw = [(i, int(cols[i])) for i in range(n)]
    else:
        rows = _hungarian_min(-s.T)
        raw = sorted((int(rows[j]), j) for j in range(k))

    pairs = [(i, j) for i, j in raw if s[i, j] >= min_score]
    total = 0.0
    for i, j in pairs:
        total += float(s[i, j])
    rows_used = {i for i, _ in pairs}
    cols_used = {j for _, j in pairs}
    return AssignmentResult(
        pairs=pairs,
        unmatched_rows=[i for i in range(n) if i not in rows_used],
        unmatched_columns=[j for j in range(k) if j not in cols_used],
        total=total,
    )
