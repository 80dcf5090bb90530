"""Row-maxima solvers over implicitly defined matrices.

Every solver returns, per row, the smallest column index attaining the row
maximum. Entries may be -inf (padding) or +inf; comparisons are strict so a tie,
including a tie between two -inf entries, always keeps the earlier column.
"""

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

NEG_INFINITY = float("-inf")
POS_INFINITY = float("inf")


class ImplicitMatrix:
    """An n_rows x n_cols matrix given by a pure entry function, with an evaluation counter."""

    def __init__(self, n_rows: int, n_cols: int, entry_fn: Callable[[int, int], float]):
        if n_rows < 1 or n_cols < 1:
            raise ValueError(f"matrix must be at least 1x1, got {n_rows}x{n_cols}")
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._entry_fn = entry_fn
        self.evaluations = 0

    @classmethod
    def from_array(cls, arr) -> "ImplicitMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[0], arr.shape[1], lambda r, c: float(arr[r, c]))

    def entry(self, row: int, col: int) -> float:
        self.evaluations += 1
        return self._entry_fn(row, col)

    def materialize(self) -> np.ndarray:
        return np.array(
            [[self.entry(r, c) for c in range(self.n_cols)] for r in range(self.n_rows)],
            dtype=np.float64,
        )


@dataclass(frozen=True, eq=False)
class RowMaxima:
    argmax: np.ndarray
    max_value: np.ndarray


def _scan(M: ImplicitMatrix, row: int, col_lo: int, col_hi: int) -> tuple[int, float]:
    best_col = col_lo
    best = M.entry(row, col_lo)
    for col in range(col_lo + 1, col_hi + 1):
        v = M.entry(row, col)
        if v > best:
            best, best_col = v, col
    return best_col, best


def brute_force_maxima(M: ImplicitMatrix) -> RowMaxima:
    argmax = np.zeros(M.n_rows, dtype=np.int64)
    values = np.empty(M.n_rows, dtype=np.float64)
    for row in range(M.n_rows):
        argmax[row], values[row] = _scan(M, row, 0, M.n_cols - 1)
    return RowMaxima(argmax, values)


def maxima_schedule(n_rows: int) -> Iterator[tuple[int, int | None, int | None]]:
    """Processing order of the middle-row recursion.

    Yields (row, lower, upper): `lower` is the nearest already-processed row above
    `row` and `upper` the nearest one below, None at the matrix edges. Parents are
    always yielded before their children.
    """
    stack: list[tuple[int, int, int | None, int | None]] = [(0, n_rows - 1, None, None)]
    while stack:
        lo, hi, lower, upper = stack.pop()
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        yield mid, lower, upper
        # push the lower half last so it is processed first
        stack.append((mid + 1, hi, mid, upper))
        stack.append((lo, mid - 1, lower, mid))


def monotone_maxima(M: ImplicitMatrix) -> RowMaxima:
    """Exact on monotone matrices; on other matrices each row is searched only inside
    the window fixed by its already-processed neighbours."""
    argmax = np.zeros(M.n_rows, dtype=np.int64)
    values = np.empty(M.n_rows, dtype=np.float64)
    for row, lower, upper in maxima_schedule(M.n_rows):
        col_lo = int(argmax[lower]) if lower is not None else 0
        col_hi = int(argmax[upper]) if upper is not None else M.n_cols - 1
        argmax[row], values[row] = _scan(M, row, col_lo, col_hi)
    return RowMaxima(argmax, values)


def _smawk(rows: list[int], cols: list[int], M: ImplicitMatrix, out: dict[int, tuple[int, float]]) -> None:
    if not rows:
        return

    # reduce: keep at most len(rows) candidate columns
    stack: list[int] = []
    for col in cols:
        while stack and M.entry(rows[len(stack) - 1], stack[-1]) < M.entry(rows[len(stack) - 1], col):
            stack.pop()
        if len(stack) < len(rows):
            stack.append(col)
    cols = stack

    _smawk(rows[1::2], cols, M, out)

    # interpolate the even rows between their odd neighbours' maxima
    j = 0
    for i in range(0, len(rows), 2):
        row = rows[i]
        last = out[rows[i + 1]][0] if i + 1 < len(rows) else cols[-1]
        best_col = cols[j]
        best = M.entry(row, best_col)
        # the bound on j only matters for matrices that are not totally monotone
        while cols[j] != last and j + 1 < len(cols):
            j += 1
            v = M.entry(row, cols[j])
            if v > best:
                best, best_col = v, cols[j]
        out[row] = (best_col, best)


def smawk(M: ImplicitMatrix) -> RowMaxima:
    out: dict[int, tuple[int, float]] = {}
    _smawk(list(range(M.n_rows)), list(range(M.n_cols)), M, out)
    argmax = np.array([out[r][0] for r in range(M.n_rows)], dtype=np.int64)
    values = np.array([out[r][1] for r in range(M.n_rows)], dtype=np.float64)
    return RowMaxima(argmax, values)


def check_total_monotonicity(arr, exhaustive: bool = False) -> bool:
    """True iff M[i][j] < M[i][j'] implies M[i'][j] < M[i'][j'] for i < i', j < j'.

    The default checks adjacent 2x2 submatrices only, which is exact for
    Monge-type matrices; `exhaustive=True` checks every row and column pair.
    """
    arr = np.asarray(arr, dtype=np.float64)
    n_rows, n_cols = arr.shape
    if n_rows < 2 or n_cols < 2:
        return True
    if not exhaustive:
        rises = arr[:, :-1] < arr[:, 1:]
        return not bool((rises[:-1] & ~rises[1:]).any())
    upper = np.triu(np.ones((n_cols, n_cols), dtype=bool), k=1)
    rises = arr[:, :, None] < arr[:, None, :]
    for i in range(n_rows - 1):
        violation = (rises[i] & upper)[None, :, :] & ~rises[i + 1:]
        if violation.any():
            return False
    return True


def random_monotone_matrix(n_rows: int, n_cols: int, rng: np.random.Generator) -> np.ndarray:
    """Row i peaks at 1.0 in column J(i) for a sorted random J; every other entry is below 1."""
    peaks = np.sort(rng.integers(0, n_cols, size=n_rows))
    arr = rng.uniform(0.0, 0.99, size=(n_rows, n_cols))
    arr[np.arange(n_rows), peaks] = 1.0
    return arr


def random_totally_monotone_matrix(
    n_rows: int, n_cols: int, rng: np.random.Generator, high: int = 10
) -> np.ndarray:
    """Inverse-Monge matrix: 2-D cumulative sums of nonnegative integers plus a per-column offset."""
    cells = rng.integers(0, high, size=(n_rows, n_cols))
    arr = cells.cumsum(axis=0).cumsum(axis=1)
    offsets = -np.cumsum(rng.integers(0, high * n_rows, size=n_cols))
    return (arr + offsets[None, :]).astype(np.float64)
