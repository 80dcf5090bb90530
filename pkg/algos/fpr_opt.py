"""Per-region false-positive rates for a fixed partition.

Two problems share one structure. With a target FPR F the backup memory
scale·Σ G_i·log2(1/f_i) is minimized subject to Σ H_i·f_i <= F; with a memory
budget M the expected FPR Σ H_i·f_i is minimized subject to the memory being
at most M. In both, the optimum clamps the regions of largest G_i/H_i to f = 1
and gives every other region an f_i proportional to G_i/H_i.

`scale` is the product c·|S| of the Bloom filter constant and the key count.
"""

import logging
from dataclasses import dataclass

import numpy as np

from algos.dp_core import Thresholds
from scores.segmentation import SegmentHistogram

logger = logging.getLogger(__name__)

# slack on the f <= 1 test for the first unclamped region
_RATIO_SLACK = 1e-12


class InfeasibleCandidateError(ValueError):
    """Raised when a partition cannot meet the target FPR."""


@dataclass(frozen=True, eq=False)
class RegionStats:
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self) -> None:
        G = np.asarray(self.G, dtype=np.float64)
        H = np.asarray(self.H, dtype=np.float64)
        if G.shape != H.shape or G.ndim != 1 or len(G) == 0:
            raise ValueError("G and H must be nonempty 1-D vectors of equal length")
        if (G < 0).any() or (H < 0).any():
            raise ValueError("region masses must be nonnegative")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)

    @classmethod
    def from_thresholds(cls, hist: SegmentHistogram, thresholds: Thresholds) -> "RegionStats":
        masses = [hist.mass(first, last) for first, last in thresholds.regions()]
        return cls(np.array([m[0] for m in masses]), np.array([m[1] for m in masses]))

    @property
    def k(self) -> int:
        return len(self.G)

    def ratios(self) -> np.ndarray:
        """G/H with +inf where H = 0 (including empty regions)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.H > 0, self.G / np.where(self.H > 0, self.H, 1.0), np.inf)


@dataclass(frozen=True, eq=False)
class FprAssignment:
    f: np.ndarray
    clamped: np.ndarray
    objective: float

    @property
    def clamped_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.clamped))


def space_used(stats: RegionStats, f, scale: float = 1.0) -> float:
    """Total backup bits: scale·Σ G_i·log2(1/f_i); regions without keys cost nothing."""
    f = np.asarray(f, dtype=np.float64)
    keyed = stats.G > 0
    with np.errstate(divide="ignore"):
        return float(scale * np.sum(stats.G[keyed] * -np.log2(f[keyed])))


def expected_fpr(stats: RegionStats, f) -> float:
    return float(np.dot(stats.H, np.asarray(f, dtype=np.float64)))


def _check_target(target_fpr: float) -> None:
    if not 0.0 < target_fpr < 1.0:
        raise ValueError(f"target FPR must lie in (0, 1), got {target_fpr}")


def _all_pass(stats: RegionStats) -> FprAssignment:
    # key-free regions with non-key mass filter everything; the rest pass through
    f = np.where((stats.G == 0) & (stats.H > 0), 0.0, 1.0)
    logger.debug("All-pass assignment over %d regions", stats.k)
    return FprAssignment(f, f == 1.0, 0.0)


def _unclamped_rates(stats: RegionStats, clamped: np.ndarray, factor: float) -> np.ndarray:
    f = np.ones(stats.k)
    free = ~clamped
    f[free] = np.minimum(factor * stats.G[free] / stats.H[free], 1.0)
    return f


def optimal_fpr(stats: RegionStats, target_fpr: float, scale: float = 1.0) -> FprAssignment:
    """Iterative clamping: start from f = G·F/H, clamp every f > 1 and rescale the rest until none exceeds 1."""
    _check_target(target_fpr)
    G, H = stats.G, stats.H
    if H[G > 0].sum() <= target_fpr:
        return _all_pass(stats)

    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(H > 0, G * target_fpr / np.where(H > 0, H, 1.0), np.inf)
    clamped = np.zeros(stats.k, dtype=bool)
    while (f[~clamped] > 1.0).any():
        clamped |= f > 1.0
        h_clamped = H[clamped].sum()
        g_free = G[~clamped].sum()
        if target_fpr - h_clamped <= 0.0:
            raise InfeasibleCandidateError(
                f"clamped regions already carry non-key mass {h_clamped:.6g} >= F={target_fpr}"
            )
        if g_free <= 0.0:
            break
        f = np.where(clamped, np.inf, (target_fpr - h_clamped) * G / (g_free * np.where(clamped, 1.0, H)))

    f = np.where(clamped, 1.0, np.minimum(f, 1.0))
    return FprAssignment(f, clamped, space_used(stats, f, scale))


@dataclass(frozen=True)
class _Prefixes:
    """Running sums over the regions sorted by descending G/H; index c = number clamped."""

    order: np.ndarray
    ratio_sorted: np.ndarray
    g_clamped: np.ndarray
    h_clamped: np.ndarray
    g_free: np.ndarray
    log_free: np.ndarray
    first_valid: int


def _prefixes(stats: RegionStats) -> _Prefixes:
    ratio = stats.ratios()
    order = np.lexsort((np.arange(stats.k), -ratio))
    gs, hs, rs = stats.G[order], stats.H[order], ratio[order]
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where((gs > 0) & (hs > 0), gs * np.log2(gs / np.where(hs > 0, hs, 1.0)), 0.0)
    zero = np.zeros(1)
    return _Prefixes(
        order=order,
        ratio_sorted=rs,
        g_clamped=np.concatenate((zero, np.cumsum(gs))),
        h_clamped=np.concatenate((zero, np.cumsum(hs))),
        g_free=np.concatenate((np.cumsum(gs[::-1])[::-1], zero)),
        log_free=np.concatenate((np.cumsum(term[::-1])[::-1], zero)),
        # regions with H = 0 sort first and must always be clamped
        first_valid=int(np.count_nonzero(stats.H == 0)),
    )


def _clamp_mask(pre: _Prefixes, n_clamped: int) -> np.ndarray:
    mask = np.zeros(len(pre.order), dtype=bool)
    mask[pre.order[:n_clamped]] = True
    return mask


def fast_optimal_fpr(stats: RegionStats, target_fpr: float, scale: float = 1.0) -> FprAssignment:
    """Sort regions by G/H once and sweep the prefix clamp sets, each scored in O(1)."""
    _check_target(target_fpr)
    if stats.H[stats.G > 0].sum() <= target_fpr:
        return _all_pass(stats)

    pre = _prefixes(stats)
    best_c, best_obj = -1, np.inf
    for c in range(pre.first_valid, stats.k):
        g_free = pre.g_free[c]
        slack = target_fpr - pre.h_clamped[c]
        if g_free <= 0.0 or slack <= 0.0:
            continue
        if pre.ratio_sorted[c] * slack > g_free * (1.0 + _RATIO_SLACK):
            continue
        obj = g_free * np.log2(g_free / slack) - pre.log_free[c]
        if obj < best_obj:
            best_c, best_obj = c, obj
    if best_c < 0:
        raise InfeasibleCandidateError(f"no clamp set meets F={target_fpr}")

    clamped = _clamp_mask(pre, best_c)
    f = _unclamped_rates(stats, clamped, (target_fpr - pre.h_clamped[best_c]) / pre.g_free[best_c])
    logger.debug("Clamped %d of %d regions (closed-form bits/scale %.6g)", best_c, stats.k, best_obj)
    return FprAssignment(f, clamped, space_used(stats, f, scale))


def optimal_fpr_budget(stats: RegionStats, budget_bits: float, scale: float) -> FprAssignment:
    """Minimize the expected FPR under a backup memory budget.

    For a clamp set, β = M/(scale·(1 - G1)) + Σ_free G·log2(G/H)/(1 - G1), the free
    regions get f = 2^-β·G/H and the expected FPR is H1 + 2^-β·(1 - G1).
    """
    if budget_bits <= 0:
        raise ValueError(f"memory budget must be positive, got {budget_bits}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")

    pre = _prefixes(stats)
    zero_memory = _all_pass(stats)
    best_c = -1
    best_fpr = expected_fpr(stats, zero_memory.f)
    best_factor = 0.0
    for c in range(pre.first_valid, stats.k):
        g_free = pre.g_free[c]
        if g_free <= 0.0:
            continue
        beta = budget_bits / (scale * g_free) + pre.log_free[c] / g_free
        factor = 2.0 ** -beta
        if factor * pre.ratio_sorted[c] > 1.0 + _RATIO_SLACK:
            continue
        fpr = pre.h_clamped[c] + factor * g_free
        if fpr < best_fpr:
            best_c, best_fpr, best_factor = c, fpr, factor
    if best_c < 0:
        return FprAssignment(zero_memory.f, zero_memory.clamped, best_fpr)

    clamped = _clamp_mask(pre, best_c)
    f = _unclamped_rates(stats, clamped, best_factor)
    logger.debug("Budget %.1f bits: clamped %d of %d regions", budget_bits, best_c, stats.k)
    return FprAssignment(f, clamped, expected_fpr(stats, f))
