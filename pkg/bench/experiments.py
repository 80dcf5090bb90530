"""Experiment drivers behind the CLI subcommands.

Each driver returns plain dict rows; every row carries its seed and the
parameters needed to rerun that cell on its own.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor

from algos.analysis import count_ideality_violations, delta_max
from bench.report import ExperimentResult, canonical_order
from filters.bloom import BloomFilter
from filters.plbf_builder import (
    BuildConfig,
    Framework,
    PlbfFilter,
    Strategy,
    build,
    empirical_fpr,
    false_negatives,
    optimize,
)
from scores.datagen import SyntheticSpec, generate, split_holdout
from scores.segmentation import ScoredDataset, SegmentHistogram, build_histogram

logger = logging.getLogger(__name__)

ALL_STRATEGIES = (Strategy.PLBF, Strategy.FAST, Strategy.FAST_PP, Strategy.FAST_SHARP)
FAST_STRATEGIES = (Strategy.FAST, Strategy.FAST_PP, Strategy.FAST_SHARP)


def _ms_since(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def _ratio(value: float, reference: float) -> float:
    if reference == 0.0:
        return 1.0 if value == 0.0 else math.inf
    return value / reference


def _map(fn, cells: list, workers: int) -> list:
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(cell) for cell in cells]


def _flatten(nested: list[list[dict]]) -> list[dict]:
    return [row for rows in nested for row in rows]


def with_updates(cfg: BuildConfig, **update) -> BuildConfig:
    """Copy of `cfg` with `update` applied, validated again."""
    return BuildConfig(**{**cfg.model_dump(), **update})


def _budget(cfg: BuildConfig, n_keys: int, bits_per_key: float) -> BuildConfig:
    return with_updates(cfg, framework=Framework.MEMORY_BUDGET, memory_budget_bits=bits_per_key * n_keys)


def build_row(filt: PlbfFilter, cfg: BuildConfig, wall_ms: float) -> dict:
    opt = filt.optimization
    return {
        "strategy": cfg.strategy.value,
        "N": cfg.n_segments,
        "k": cfg.n_regions,
        "framework": cfg.framework.value,
        "parameter": cfg.framework_parameter,
        "objective": opt.objective if opt else None,
        "entry_evals": opt.entry_evals if opt else None,
        "wall_ms": wall_ms,
        "memory_bits": filt.memory_bits,
        "expected_fpr": filt.expected_fpr(),
        "seed": cfg.seed,
    }


# ── single builds ─────────────────────────────────────────────────────────────

def run_build(data: ScoredDataset, cfg: BuildConfig, held_out: ScoredDataset | None = None) -> tuple[PlbfFilter, dict]:
    start = time.perf_counter()
    filt = build(data, cfg)
    row = build_row(filt, cfg, _ms_since(start))
    row["j"] = filt.optimization.j
    row["thresholds"] = filt.thresholds.scores.tolist()
    row["f"] = filt.f.tolist()
    row["realized_f"] = filt.realized_fprs().tolist()
    if held_out is not None:
        row["empirical_fpr"] = empirical_fpr(filt, held_out)
    return filt, row


def query_bench(data: ScoredDataset, cfg: BuildConfig, holdout_fraction: float) -> dict:
    train, held_out = split_holdout(data, holdout_fraction, cfg.seed)
    filt, row = run_build(train, cfg)

    start = time.perf_counter()
    missed = false_negatives(filt, train)
    key_s = max(time.perf_counter() - start, 1e-12)

    start = time.perf_counter()
    fpr = empirical_fpr(filt, held_out)
    nonkey_s = max(time.perf_counter() - start, 1e-12)

    n_keys, n_probes = len(train.keys), len(held_out.nonkeys)
    row.update(
        false_negatives=missed,
        empirical_fpr=fpr,
        key_queries_per_s=n_keys / key_s,
        nonkey_queries_per_s=n_probes / nonkey_s,
        n_key_queries=n_keys,
        n_nonkey_queries=n_probes,
    )
    if missed:
        logger.error("%d keys answered negatively", missed)
    return row


# ── construction time ─────────────────────────────────────────────────────────

def _time_cell(cell: tuple) -> list[dict]:
    sweep, spec, cfg, bits_per_key = cell
    hist = build_histogram(generate(spec), spec.n_segments)
    cfg = _budget(cfg, spec.n_keys, bits_per_key)
    start = time.perf_counter()
    result = optimize(hist, cfg)
    wall_ms = _ms_since(start)
    logger.info("%s N=%d k=%d: %.1f ms, %d entry evals", cfg.strategy.value, cfg.n_segments, cfg.n_regions, wall_ms, result.entry_evals)
    return [{
        "sweep": sweep,
        "strategy": cfg.strategy.value,
        "N": cfg.n_segments,
        "k": cfg.n_regions,
        "parameter": cfg.framework_parameter,
        "objective": result.objective,
        "entry_evals": result.entry_evals,
        "wall_ms": wall_ms,
        "seed": spec.seed,
    }]


def bench_time(
    spec: SyntheticSpec,
    cfg: BuildConfig,
    n_values: list[int],
    k_values: list[int],
    k_sweep_n: int,
    bits_per_key: float,
    strategies=ALL_STRATEGIES,
    plbf_max_n: int | None = None,
    workers: int = 1,
) -> ExperimentResult:
    """Construction time and entry evaluations over N at fixed k, then over k at fixed N."""
    cells = []
    for n in n_values:
        for strategy in strategies:
            if strategy is Strategy.PLBF and plbf_max_n is not None and n > plbf_max_n:
                continue
            cells.append(("N", spec.model_copy(update={"n_segments": n}),
                          with_updates(cfg, n_segments=n, strategy=strategy), bits_per_key))
    for k in k_values:
        for strategy in strategies:
            if strategy is Strategy.PLBF and plbf_max_n is not None and k_sweep_n > plbf_max_n:
                continue
            cells.append(("k", spec.model_copy(update={"n_segments": k_sweep_n}),
                          with_updates(cfg, n_segments=k_sweep_n, n_regions=k, strategy=strategy), bits_per_key))
    rows = _flatten(_map(_time_cell, cells, workers))
    return ExperimentResult("bench-time", canonical_order(rows, ("sweep", "N", "k", "strategy")))


# ── memory / FPR trade-off ────────────────────────────────────────────────────

def _bloom_baseline(train: ScoredDataset, held_out: ScoredDataset, budget_bits: float, seed: int) -> float:
    m = max(1, int(budget_bits))
    n = len(train.keys)
    bloom = BloomFilter(m, max(1, round(m / n * math.log(2))), seed)
    for payload in train.key_payloads:
        bloom.insert(payload)
    hits = sum(bloom.query(p) for p in held_out.nonkey_payloads)
    return hits / len(held_out.nonkey_payloads)


def _tradeoff_cell(cell: tuple) -> list[dict]:
    spec, cfg, bits_per_key, holdout_fraction, strategies = cell
    train, held_out = split_holdout(generate(spec), holdout_fraction, spec.seed)
    rows = []
    for strategy in strategies:
        run_cfg = with_updates(_budget(cfg, spec.n_keys, bits_per_key), strategy=strategy, seed=spec.seed)
        _, row = run_build(train, run_cfg, held_out)
        rows.append({**_summary(row), "bits_per_key": bits_per_key})
    budget = bits_per_key * spec.n_keys
    rows.append({
        "strategy": "bloom",
        "N": cfg.n_segments,
        "k": None,
        "parameter": budget,
        "memory_bits": int(budget),
        "empirical_fpr": _bloom_baseline(train, held_out, budget, spec.seed),
        "seed": spec.seed,
        "bits_per_key": bits_per_key,
    })
    return rows


def _summary(row: dict) -> dict:
    drop = ("thresholds", "f", "realized_f", "j")
    return {key: value for key, value in row.items() if key not in drop}


def tradeoff(
    spec: SyntheticSpec,
    cfg: BuildConfig,
    bits_per_key: list[float],
    holdout_fraction: float,
    strategies=FAST_STRATEGIES,
    workers: int = 1,
) -> ExperimentResult:
    spec = spec.model_copy(update={"n_segments": cfg.n_segments})
    cells = [(spec, cfg, b, holdout_fraction, tuple(strategies)) for b in bits_per_key]
    rows = _flatten(_map(_tradeoff_cell, cells, workers))
    return ExperimentResult("tradeoff", canonical_order(rows, ("bits_per_key", "strategy")))


# ── swap robustness ───────────────────────────────────────────────────────────

def _relative_cell(cell: tuple) -> list[dict]:
    spec, cfg, bits_per_key, holdout_fraction = cell
    data = generate(spec)
    violations = count_ideality_violations(build_histogram(data, spec.n_segments))
    train, held_out = split_holdout(data, holdout_fraction, spec.seed)

    measured = {}
    for strategy in FAST_STRATEGIES:
        run_cfg = with_updates(_budget(cfg, spec.n_keys, bits_per_key), strategy=strategy, seed=spec.seed)
        _, row = run_build(train, run_cfg, held_out)
        measured[strategy] = row

    exact = measured[Strategy.FAST]
    rows = []
    for strategy in FAST_STRATEGIES:
        row = measured[strategy]
        rows.append({
            **_summary(row),
            "n_swaps": spec.n_swaps,
            "bits_per_key": bits_per_key,
            "ideality_violations": violations,
            "relative_fpr": _ratio(row["empirical_fpr"], exact["empirical_fpr"]),
            "relative_expected_fpr": _ratio(row["expected_fpr"], exact["expected_fpr"]),
        })
    return rows


def relative_fpr(
    spec: SyntheticSpec,
    cfg: BuildConfig,
    swap_counts: list[int],
    seeds: list[int],
    bits_per_key: list[float],
    holdout_fraction: float,
    workers: int = 1,
) -> ExperimentResult:
    """FPR of the accelerated builders relative to the exact one as swaps make the scores less ideal."""
    cells = [
        (spec.model_copy(update={"n_swaps": swaps, "seed": seed, "n_segments": cfg.n_segments}), cfg, bpk, holdout_fraction)
        for swaps in swap_counts
        for seed in seeds
        for bpk in bits_per_key
    ]
    rows = _flatten(_map(_relative_cell, cells, workers))
    return ExperimentResult(
        "relative-fpr", canonical_order(rows, ("n_swaps", "seed", "bits_per_key", "strategy"))
    )


# ── hyper-parameter ablation ─────────────────────────────────────────────────

def ablation(
    spec: SyntheticSpec,
    cfg: BuildConfig,
    n_values: list[int],
    k_values: list[int],
    bits_per_key: float,
    holdout_fraction: float,
    workers: int = 1,
) -> ExperimentResult:
    """Empirical FPR over N at the configured k, then over k at the configured N."""
    cells = [
        (spec.model_copy(update={"n_segments": n}), with_updates(cfg, n_segments=n), bits_per_key, holdout_fraction, FAST_STRATEGIES)
        for n in n_values
    ] + [
        (spec.model_copy(update={"n_segments": cfg.n_segments}), with_updates(cfg, n_regions=k), bits_per_key, holdout_fraction, FAST_STRATEGIES)
        for k in k_values
    ]
    sweeps = ["N"] * len(n_values) + ["k"] * len(k_values)
    nested = _map(_tradeoff_cell, cells, workers)
    rows = [
        {**row, "sweep": sweep}
        for sweep, cell_rows in zip(sweeps, nested)
        for row in cell_rows
        if row["strategy"] != "bloom"
    ]
    return ExperimentResult("ablation", canonical_order(rows, ("sweep", "N", "k", "strategy")))


# ── δ_max ─────────────────────────────────────────────────────────────────────

def delta_max_report(hist: SegmentHistogram, **meta) -> dict:
    report = delta_max(hist)
    logger.info("δ_max=%.4g at p=%s (N=%d)", report.delta_max, report.argmax_p, hist.n_segments)
    return {**report.to_dict(), **meta}
