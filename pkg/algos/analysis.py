"""Ideality diagnostics and the error bound of the monotone-maxima DP.

A histogram is ideal when g_i/h_i is nondecreasing over its non-empty segments;
then every DP layer matrix is totally monotone and the accelerated builders are
exact. Otherwise the gap between the exact table and the monotone-maxima table
is at most q·δ_max in layer q, where δ_max is accumulated along the recursion
order of the row search.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from algos.dp_core import build_dp_mm, build_dp_single, d_kl_row
from algos.matrix_algos import maxima_schedule
from scores.segmentation import SegmentHistogram

logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-9


def ratio_profile(hist: SegmentHistogram) -> np.ndarray:
    """g_i/h_i per segment: +inf where h_i = 0 < g_i, NaN where both vanish."""
    g, h = hist.g, hist.h
    with np.errstate(divide="ignore", invalid="ignore"):
        return g / h


def _nonempty_ratios(hist: SegmentHistogram) -> np.ndarray:
    ratios = ratio_profile(hist)
    return ratios[(hist.g > 0) | (hist.h > 0)]


def is_ideal(hist: SegmentHistogram) -> bool:
    ratios = _nonempty_ratios(hist)
    return bool(np.all(ratios[1:] >= ratios[:-1]))


def count_ideality_violations(hist: SegmentHistogram) -> int:
    ratios = _nonempty_ratios(hist)
    return int(np.count_nonzero(ratios[1:] < ratios[:-1]))


def big_delta(hist: SegmentHistogram, p: int, p_prime: int) -> float:
    """max over 1 <= i <= i' <= p of (d(i,p') + d(i',p)) - (d(i,p) + d(i',p')).

    0 when p = 0 or p' = N; NaN when any d_KL term involved is infinite.
    """
    n = hist.n_segments
    if not 0 <= p < p_prime <= n:
        raise IndexError(f"need 0 <= p < p' <= {n}, got p={p}, p'={p_prime}")
    if p == 0 or p_prime == n:
        return 0.0
    d_p = d_kl_row(hist, p)
    d_pp = d_kl_row(hist, p_prime)[:p]
    if not (np.isfinite(d_p).all() and np.isfinite(d_pp).all()):
        return math.nan
    gain = d_pp - d_p
    # i = i' contributes exactly 0, so the result is never negative
    return float(np.max(np.maximum.accumulate(gain) - gain))


@dataclass
class DeltaReport:
    n_segments: int
    delta: dict[int, float] = field(default_factory=dict)
    pair_deltas: dict[tuple[int, int], float] = field(default_factory=dict)
    recursion_order: list[int] = field(default_factory=list)
    n_infinite_pairs: int = 0

    @property
    def delta_max(self) -> float:
        return max(self.delta.values(), default=0.0)

    @property
    def argmax_p(self) -> int | None:
        if not self.delta:
            return None
        best = self.delta_max
        return min(p for p, v in self.delta.items() if v == best)

    def to_dict(self) -> dict:
        return {
            "N": self.n_segments,
            "delta_max": self.delta_max,
            "argmax_p": self.argmax_p,
            "n_infinite_pairs": self.n_infinite_pairs,
        }


def delta_max(hist: SegmentHistogram) -> DeltaReport:
    """Evaluate δ(p) = max(δ(l) + Δ(l, p), 0, δ(r) + Δ(p, r)) in the row-search order.

    l and r are the nearest rows above and below p that the search processed
    before p, with virtual rows 0 and N at the edges where δ = 0.
    """
    n = hist.n_segments
    report = DeltaReport(n_segments=n)
    delta = {0: 0.0, n: 0.0}
    for row, lower, upper in maxima_schedule(n - 1):
        p = row + 1
        l = lower + 1 if lower is not None else 0
        r = upper + 1 if upper is not None else n
        best = 0.0
        for a, b, base in ((l, p, delta[l]), (p, r, delta[r])):
            pair = big_delta(hist, a, b)
            report.pair_deltas[(a, b)] = pair
            if math.isnan(pair):
                report.n_infinite_pairs += 1
                continue
            best = max(best, base + pair)
        delta[p] = best
        report.delta[p] = best
        report.recursion_order.append(p)
    if report.n_infinite_pairs:
        logger.warning("%d Δ pairs involve infinite d_KL terms and were excluded", report.n_infinite_pairs)
    return report


@dataclass(frozen=True)
class BoundReport:
    max_gap: float
    min_gap: float
    delta_max: float
    bound: float
    holds: bool
    power_of_two: bool


def verify_bound(hist: SegmentHistogram, k: int) -> BoundReport:
    """Compare the exact table with the monotone-maxima table cell by cell against q·δ_max."""
    exact = build_dp_single(hist, k).values
    approx = build_dp_mm(hist, k).values
    with np.errstate(invalid="ignore"):
        gap = np.where(exact == approx, 0.0, exact - approx)
    dmax = delta_max(hist).delta_max
    q = np.arange(k, dtype=np.float64)[None, :]
    holds = bool(np.all(gap >= -BOUND_TOLERANCE) and np.all(gap <= q * dmax + BOUND_TOLERANCE))
    n = hist.n_segments
    report = BoundReport(
        max_gap=float(gap.max()),
        min_gap=float(gap.min()),
        delta_max=dmax,
        bound=(k - 1) * dmax,
        holds=holds,
        power_of_two=(n & (n - 1)) == 0,
    )
    if not holds:
        logger.warning("Gap %.3g exceeds q·δ_max (δ_max=%.3g, N=%d, k=%d)", report.max_gap, dmax, n, k)
    return report
