import math

import numpy as np
import pytest

from algos.dp_core import Thresholds
from algos.fpr_opt import (
    InfeasibleCandidateError,
    RegionStats,
    expected_fpr,
    fast_optimal_fpr,
    optimal_fpr,
    optimal_fpr_budget,
    space_used,
)
from scores.segmentation import SegmentHistogram

SOLVERS = [optimal_fpr, fast_optimal_fpr]


def _random_instance(rng: np.random.Generator) -> tuple[RegionStats, float]:
    k = int(rng.integers(2, 9))
    G = rng.dirichlet(np.full(k, 0.7))
    H = rng.dirichlet(np.full(k, 0.7))
    return RegionStats(G, H), float(rng.uniform(0.001, 0.5))


def _assert_threshold_structure(stats: RegionStats, f: np.ndarray, clamped: np.ndarray, target: float) -> None:
    G, H = stats.G, stats.H
    ratios = stats.ratios()
    g_free = G[~clamped].sum()
    slack = target - H[clamped].sum()
    assert slack > 0
    threshold = g_free / slack
    finite_clamped = ratios[clamped & np.isfinite(ratios)]
    if finite_clamped.size:
        assert finite_clamped.min() >= threshold * (1 - 1e-6)
    if (~clamped).any():
        assert ratios[~clamped].max() <= threshold * (1 + 1e-6)


@pytest.mark.parametrize("solve", SOLVERS)
def test_worked_example(solve):
    stats = RegionStats([0.5, 0.5], [0.9, 0.1])
    result = solve(stats, 0.5)
    assert result.f == pytest.approx([0.4 * 0.5 / (0.5 * 0.9), 1.0])
    assert result.clamped_set == frozenset({1})
    assert expected_fpr(stats, result.f) == pytest.approx(0.5)


def test_worked_example_beats_grid():
    stats = RegionStats([0.5, 0.5], [0.9, 0.1])
    f1 = np.linspace(1e-4, 1.0, 20001)
    f2 = np.minimum((0.5 - 0.9 * f1) / 0.1, 1.0)
    ok = f2 > 0
    grid = 0.5 * -np.log2(f1[ok]) + 0.5 * -np.log2(f2[ok])
    assert space_used(stats, optimal_fpr(stats, 0.5).f) <= grid.min() + 1e-9


@pytest.mark.parametrize("solve", SOLVERS)
def test_uniform_regions_get_target(solve):
    stats = RegionStats([0.25] * 4, [0.25] * 4)
    result = solve(stats, 0.1)
    assert result.f == pytest.approx([0.1] * 4)
    assert not result.clamped.any()


@pytest.mark.parametrize("solve", SOLVERS)
def test_region_without_nonkeys_passes_through(solve):
    stats = RegionStats([0.3, 0.3, 0.4], [0.5, 0.5, 0.0])
    result = solve(stats, 0.05)
    assert result.f[2] == 1.0
    assert 2 in result.clamped_set


@pytest.mark.parametrize("solve", SOLVERS)
def test_all_pass_when_keyed_regions_fit_target(solve):
    stats = RegionStats([0.0, 0.5, 0.5], [0.95, 0.05, 0.0])
    result = solve(stats, 0.1)
    assert result.f.tolist() == [0.0, 1.0, 1.0]
    assert result.objective == 0.0


@pytest.mark.parametrize("solve", SOLVERS)
def test_no_nonkey_mass_at_all(solve):
    result = solve(RegionStats([0.5, 0.5], [0.0, 0.0]), 0.2)
    assert result.f.tolist() == [1.0, 1.0]
    assert result.objective == 0.0


@pytest.mark.parametrize("solve", SOLVERS)
@pytest.mark.parametrize("target", [0.0, 1.0, -0.1])
def test_rejects_bad_target(solve, target):
    with pytest.raises(ValueError):
        solve(RegionStats([0.5, 0.5], [0.5, 0.5]), target)


def test_infeasible_candidate_is_a_value_error():
    assert issubclass(InfeasibleCandidateError, ValueError)


def test_solvers_agree_on_random_instances(rng):
    for _ in range(1000):
        stats, target = _random_instance(rng)
        slow = optimal_fpr(stats, target, scale=1000.0)
        fast = fast_optimal_fpr(stats, target, scale=1000.0)
        assert fast.objective == pytest.approx(slow.objective, rel=1e-9, abs=1e-9)
        for result in (slow, fast):
            assert np.all((result.f >= 0) & (result.f <= 1))
            assert expected_fpr(stats, result.f) <= target + 1e-9
            if result.objective > 0:
                _assert_threshold_structure(stats, result.f, result.clamped, target)


def test_objective_matches_closed_form(rng):
    for _ in range(200):
        stats, target = _random_instance(rng)
        result = fast_optimal_fpr(stats, target)
        if result.objective == 0.0:
            continue
        free = ~result.clamped
        G, H = stats.G[free], stats.H[free]
        g_free, slack = G.sum(), target - stats.H[result.clamped].sum()
        keyed = G > 0
        closed = g_free * math.log2(g_free / slack) - float(np.sum(G[keyed] * np.log2(G[keyed] / H[keyed])))
        assert result.objective == pytest.approx(closed, rel=1e-9, abs=1e-9)


def test_space_used_examples():
    stats = RegionStats([1.0], [1.0])
    assert space_used(stats, [0.5], scale=100.0) == pytest.approx(100.0)
    assert space_used(RegionStats([0.4, 0.6], [0.5, 0.5]), [1.0, 1.0], scale=50.0) == 0.0


def test_expected_fpr_examples():
    stats = RegionStats([0.2, 0.8], [0.3, 0.7])
    assert expected_fpr(stats, [0.1, 0.1]) == pytest.approx(0.1)
    assert expected_fpr(stats, [1.0, 1.0]) == pytest.approx(1.0)


def test_region_stats_from_thresholds():
    hist = SegmentHistogram.from_counts([1, 1, 2, 4], [4, 2, 1, 1])
    stats = RegionStats.from_thresholds(hist, Thresholds([0, 2, 4], 4))
    assert stats.G == pytest.approx([0.25, 0.75])
    assert stats.H == pytest.approx([0.75, 0.25])
    assert stats.k == 2


def test_region_stats_validation():
    with pytest.raises(ValueError):
        RegionStats([0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        RegionStats([-0.1, 1.1], [0.5, 0.5])


# ── memory budget ────────────────────────────────────────────────────────────

def test_budget_symmetric_case():
    stats = RegionStats([0.5, 0.5], [0.5, 0.5])
    result = optimal_fpr_budget(stats, budget_bits=1000.0, scale=1000.0)
    assert result.f == pytest.approx([0.5, 0.5])
    assert result.objective == pytest.approx(0.5)


def test_budget_spends_everything_when_unclamped(rng):
    checked = 0
    for _ in range(500):
        stats, _ = _random_instance(rng)
        budget = float(rng.uniform(500, 5000))
        result = optimal_fpr_budget(stats, budget, scale=1000.0)
        if result.clamped.any():
            continue
        checked += 1
        assert space_used(stats, result.f, 1000.0) == pytest.approx(budget, abs=1e-6)
    assert checked > 0


def test_budget_never_overspends(rng):
    for _ in range(300):
        stats, _ = _random_instance(rng)
        budget = float(rng.uniform(10, 5000))
        result = optimal_fpr_budget(stats, budget, scale=1000.0)
        assert space_used(stats, result.f, 1000.0) <= budget + 1e-6
        assert result.objective == pytest.approx(expected_fpr(stats, result.f))
        assert result.objective == pytest.approx(
            stats.H[result.clamped].sum() + expected_fpr(stats, np.where(result.clamped, 0.0, result.f))
        )


def _grid_minimum(G: np.ndarray, H: np.ndarray, bits: float) -> float:
    """Expected FPR minimized over x = log2(1/f_1) on a refined grid, for two regions."""
    lo, hi = 0.0, bits / G[0]
    best = math.inf
    for _ in range(4):
        x = np.linspace(lo, hi, 20_001)
        y = np.maximum((bits - G[0] * x) / G[1], 0.0)
        fpr = H[0] * 2.0 ** -x + H[1] * 2.0 ** -y
        i = int(np.argmin(fpr))
        best = min(best, float(fpr[i]))
        step = x[1] - x[0]
        lo, hi = max(x[i] - step, 0.0), min(x[i] + step, bits / G[0])
    return best


def _check_against_grid(rng, instances: int) -> None:
    for _ in range(instances):
        G = rng.dirichlet([1.0, 1.0])
        H = rng.dirichlet([1.0, 1.0])
        scale = 1000.0
        budget = float(rng.uniform(100, 4000))
        result = optimal_fpr_budget(RegionStats(G, H), budget, scale)
        grid = _grid_minimum(G, H, budget / scale)
        assert result.objective <= grid + 1e-9
        assert result.objective == pytest.approx(grid, rel=1e-6, abs=1e-9)


def test_budget_matches_grid_minimizer(rng):
    _check_against_grid(rng, 100)


@pytest.mark.slow
def test_budget_matches_grid_minimizer_on_many_instances(rng):
    _check_against_grid(rng, 500)


def test_budget_monotone_in_memory(rng):
    for _ in range(50):
        stats, _ = _random_instance(rng)
        fprs = [optimal_fpr_budget(stats, budget, 1000.0).objective for budget in np.linspace(6000, 50, 40)]
        assert all(later >= earlier - 1e-12 for earlier, later in zip(fprs, fprs[1:]))


def test_budget_keeps_key_free_regions_at_zero():
    stats = RegionStats([0.0, 0.4, 0.6], [0.6, 0.3, 0.1])
    result = optimal_fpr_budget(stats, 2000.0, 1000.0)
    assert result.f[0] == 0.0


@pytest.mark.parametrize("budget, scale", [(0.0, 1.0), (-5.0, 1.0), (10.0, 0.0)])
def test_budget_rejects_bad_arguments(budget, scale):
    with pytest.raises(ValueError):
        optimal_fpr_budget(RegionStats([0.5, 0.5], [0.5, 0.5]), budget, scale)
