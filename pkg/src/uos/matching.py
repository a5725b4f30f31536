"""Projection onto ordered selections by dynamic programming.

Given samples ``x`` (length m) and a candidate noise-free vector ``z`` (length
n), find the order-preserving length-m subsequence of ``z`` closest to ``x`` in
squared l2 distance. The table entry ``T[r, c]`` holds the best cost of matching
``x[:r+1]`` against a subsequence of ``z[:c+1]`` (0-based), and obeys

    T[r, c] = min(T[r-1, c-1] + (x[r] - z[c])**2, T[r, c-1]).

Along a row that is a running minimum of ``T[r-1, c-1] + d[r, c]``, so each row
is filled with one ``np.minimum.accumulate`` call; the values are bit-identical
to the cell-by-cell recursion because ``min`` does not round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, OrderedSelection

__all__ = ["DpTable", "fill_table", "backtrack", "project_selection"]


@dataclass(frozen=True)
class DpTable:
    """``m x n`` table of best partial matching costs.

    Cells with ``c < r`` cannot hold a match and carry ``+inf`` (use
    :meth:`feasible` rather than comparing against a magic number).
    """

    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def feasible(self, r: int, c: int) -> bool:
        return c >= r

    @property
    def optimum(self) -> float:
        return float(self.values[-1, -1])


def _as_vectors(x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.ndim != 1 or z.ndim != 1:
        raise InvalidArgumentError("x and z must be one-dimensional")
    m, n = x.size, z.size
    if m == 0:
        raise InvalidArgumentError("x must be non-empty")
    if m > n:
        raise InvalidArgumentError(f"cannot match m={m} samples into n={n} entries")
    return x, z


def fill_table(x, z) -> DpTable:
    """Fill the matching table for samples ``x`` against ``z`` in O(mn)."""
    x, z = _as_vectors(x, z)
    m, n = x.size, z.size
    T = np.full((m, n), np.inf)
    d = (x[0] - z) ** 2
    T[0] = np.minimum.accumulate(d)
    for r in range(1, m):
        # only columns r..n-1 are reachable; T[r-1, r-1:n-1] is the diagonal predecessor
        cand = T[r - 1, r - 1:n - 1] + (x[r] - z[r:]) ** 2
        T[r, r:] = np.minimum.accumulate(cand)
    return DpTable(T)


def backtrack(table: DpTable, x, z) -> OrderedSelection:
    """Recover the matched indices, taking the smallest admissible index at each step.

    Starting from the last row, the match for ``x[r]`` is the first column at
    which the row attains its value at the current right boundary; the search
    then continues one row up, strictly left of that column.
    """
    x, z = _as_vectors(x, z)
    m, n = x.size, z.size
    T = table.values
    if T.shape != (m, n):
        raise InvalidArgumentError(f"table shape {T.shape} does not match ({m}, {n})")
    idx = np.empty(m, dtype=np.int64)
    right = n - 1
    for r in range(m - 1, -1, -1):
        row = T[r, r:right + 1]
        # exact equality: the optimum is reproduced along the same additive chain
        idx[r] = r + int(np.flatnonzero(row == row[-1])[0])
        right = idx[r] - 1
    return OrderedSelection(idx, n)


def project_selection(x, z) -> tuple[OrderedSelection, float]:
    """Best ordered selection of ``z`` for samples ``x`` and its squared cost."""
    table = fill_table(x, z)
    return backtrack(table, x, z), table.optimum
