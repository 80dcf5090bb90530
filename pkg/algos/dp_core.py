"""DP_KL tables over segment histograms and threshold backtracking.

Segment and region indices are 1-indexed throughout: values[p][q] is the best
total d_KL from clustering segments 1..p into q regions, and parent[p][q] is the
first segment i of the last of those regions (0 where the cell is unreachable).
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from algos.matrix_algos import NEG_INFINITY, POS_INFINITY, ImplicitMatrix, monotone_maxima, smawk
from scores.segmentation import SegmentHistogram

logger = logging.getLogger(__name__)


class InfeasibleJError(ValueError):
    """Raised when no clustering reaches DP_KL[j-1][k-1]."""


@dataclass(eq=False)
class DPTable:
    values: np.ndarray
    parent: np.ndarray
    strategy_tag: str
    n_segments: int
    entry_evals: int = 0

    @property
    def n_regions(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["row", "col", "value", "parent"])
            rows, cols = self.values.shape
            for p in range(rows):
                for q in range(cols):
                    writer.writerow([p, q, repr(float(self.values[p, q])), int(self.parent[p, q])])


@dataclass(frozen=True, eq=False)
class Thresholds:
    t_seg: np.ndarray
    n_segments: int

    def __post_init__(self) -> None:
        t = np.asarray(self.t_seg, dtype=np.int64)
        object.__setattr__(self, "t_seg", t)
        if t[0] != 0 or t[-1] != self.n_segments:
            raise ValueError(f"thresholds must run from 0 to {self.n_segments}, got {t.tolist()}")
        if (np.diff(t) <= 0).any():
            raise ValueError(f"every region needs at least one segment, got {t.tolist()}")

    @property
    def n_regions(self) -> int:
        return len(self.t_seg) - 1

    @property
    def scores(self) -> np.ndarray:
        return self.t_seg / self.n_segments

    def regions(self) -> list[tuple[int, int]]:
        """(first, last) segment of each region, 1-indexed and inclusive."""
        return [(int(self.t_seg[q]) + 1, int(self.t_seg[q + 1])) for q in range(self.n_regions)]


def d_kl(hist: SegmentHistogram, i_l: int, i_r: int) -> float:
    g, h = hist.mass(i_l, i_r)
    if g <= 0.0:
        return 0.0
    if h <= 0.0:
        return POS_INFINITY
    return g * float(np.log2(g / h))


def d_kl_row(hist: SegmentHistogram, p: int) -> np.ndarray:
    """d_kl(i, p) for i = 1..p as a vector."""
    g, h = hist.masses_ending_at(p)
    out = np.zeros(p, dtype=np.float64)
    has_keys = g > 0.0
    finite = has_keys & (h > 0.0)
    out[finite] = g[finite] * np.log2(g[finite] / h[finite])
    out[has_keys & ~finite] = POS_INFINITY
    return out


def _empty_table(n_rows: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    values = np.full((n_rows, k), NEG_INFINITY)
    values[0, 0] = 0.0
    return values, np.zeros((n_rows, k), dtype=np.int64)


def _relax(values: np.ndarray, parent: np.ndarray, p: int, q: int, d_row: np.ndarray) -> None:
    prev = values[:p, q - 1]
    # an unreachable predecessor stays unreachable even when d is +inf
    with np.errstate(invalid="ignore"):
        cand = np.where(prev == NEG_INFINITY, NEG_INFINITY, prev + d_row)
    best = int(np.argmax(cand))
    values[p, q] = cand[best]
    parent[p, q] = best + 1 if cand[best] > NEG_INFINITY else 0


def _check_k(hist: SegmentHistogram, k: int) -> None:
    if not 2 <= k < hist.n_segments:
        raise ValueError(f"need 2 <= k < N, got k={k}, N={hist.n_segments}")


def build_dp_naive(hist: SegmentHistogram, j: int, k: int) -> DPTable:
    """Table DP_KL^j over segments 1..j-1, rebuilt from scratch for this j."""
    if k < 1 or not k <= j <= hist.n_segments:
        raise ValueError(f"need k <= j <= N, got j={j}, k={k}, N={hist.n_segments}")
    values, parent = _empty_table(j, k)
    evals = 0
    for p in range(1, j):
        d_row = d_kl_row(hist, p)
        for q in range(1, k):
            _relax(values, parent, p, q, d_row)
            evals += p
    return DPTable(values, parent, "naive", hist.n_segments, evals)


def build_dp_single(hist: SegmentHistogram, k: int) -> DPTable:
    _check_k(hist, k)
    table = build_dp_naive(hist, hist.n_segments, k)
    table.strategy_tag = "single"
    return table


def layer_matrix(hist: SegmentHistogram, values: np.ndarray, q: int) -> ImplicitMatrix:
    """A_{p,i} = values[i-1][q-1] + d_kl(i, p) for i <= p, else -inf.

    Row r stands for p = r + 1 and column c for i = c + 1, p and i in 1..N-1.
    """
    size = hist.n_segments - 1

    def entry(row: int, col: int) -> float:
        p, i = row + 1, col + 1
        if i > p:
            return NEG_INFINITY
        prev = values[i - 1, q - 1]
        if prev == NEG_INFINITY:
            return NEG_INFINITY
        return float(prev) + d_kl(hist, i, p)

    return ImplicitMatrix(size, size, entry)


def materialize_layer(hist: SegmentHistogram, values: np.ndarray, q: int) -> np.ndarray:
    size = hist.n_segments - 1
    out = np.full((size, size), NEG_INFINITY)
    prev = values[:size, q - 1]
    for p in range(1, size + 1):
        with np.errstate(invalid="ignore"):
            out[p - 1, :p] = np.where(prev[:p] == NEG_INFINITY, NEG_INFINITY, prev[:p] + d_kl_row(hist, p))
    return out


def _build_by_layers(hist: SegmentHistogram, k: int, solver, tag: str) -> DPTable:
    _check_k(hist, k)
    values, parent = _empty_table(hist.n_segments, k)
    evals = 0
    for q in range(1, k):
        matrix = layer_matrix(hist, values, q)
        maxima = solver(matrix)
        values[1:, q] = maxima.max_value
        parent[1:, q] = np.where(maxima.max_value > NEG_INFINITY, maxima.argmax + 1, 0)
        evals += matrix.evaluations
        logger.debug("%s layer %d: %d entry evaluations", tag, q, matrix.evaluations)
    return DPTable(values, parent, tag, hist.n_segments, evals)


def build_dp_mm(hist: SegmentHistogram, k: int) -> DPTable:
    return _build_by_layers(hist, k, monotone_maxima, "mm")


def build_dp_smawk(hist: SegmentHistogram, k: int) -> DPTable:
    return _build_by_layers(hist, k, smawk, "smawk")


def backtrack(dp: DPTable, j: int, k: int) -> Thresholds:
    """Regions 1..k-1 cover segments 1..j-1 along the stored transitions; region k covers j..N."""
    if k < 2 or k > dp.n_regions or not k <= j <= dp.values.shape[0]:
        raise ValueError(f"need 2 <= k <= {dp.n_regions} and k <= j <= {dp.values.shape[0]}, got j={j}, k={k}")
    if dp.values[j - 1, k - 1] == NEG_INFINITY:
        raise InfeasibleJError(f"DP_KL[{j - 1}][{k - 1}] is unreachable")
    t = np.zeros(k + 1, dtype=np.int64)
    t[k] = dp.n_segments
    t[k - 1] = j - 1
    p = j - 1
    for q in range(k - 1, 0, -1):
        i = int(dp.parent[p, q])
        t[q - 1] = i - 1
        p = i - 1
    return Thresholds(t, dp.n_segments)
