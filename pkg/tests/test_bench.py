import csv
import json
import math

import numpy as np
import pytest

from bench import experiments
from bench.report import ExperimentResult, _jsonable, canonical_order, write_csv, write_json, write_result
from filters.plbf_builder import BuildConfig
from scores.datagen import SyntheticSpec, generate
from tests.histograms import zipf_hist


def _spec(n: int = 32, **update) -> SyntheticSpec:
    return SyntheticSpec(**{"n_segments": n, "n_keys": 3000, "n_nonkeys": 6000, "seed": 2, **update})


def _cfg(n: int = 32, k: int = 4) -> BuildConfig:
    return BuildConfig(n_segments=n, n_regions=k, memory_budget_bits=1.0)


def test_canonical_order_uses_strategy_rank():
    rows = [
        {"N": 2, "strategy": "fast"},
        {"N": 1, "strategy": "bloom"},
        {"N": 1, "strategy": "fast_sharp"},
        {"N": 1, "strategy": "plbf"},
        {"N": None, "strategy": "fast"},
    ]
    ordered = canonical_order(rows, ("N", "strategy"))
    assert [(r["N"], r["strategy"]) for r in ordered] == [
        (1, "plbf"), (1, "fast_sharp"), (1, "bloom"), (2, "fast"), (None, "fast"),
    ]


def test_jsonable():
    assert _jsonable(np.float64(0.5)) == 0.5
    assert isinstance(_jsonable(np.int64(3)), int)
    assert _jsonable(math.inf) == "inf"
    assert _jsonable(math.nan) == "nan"
    assert _jsonable("fast") == "fast"


def test_write_csv_takes_column_union(tmp_path):
    path = write_csv([{"a": 1, "b": 2.5}, {"a": 3, "c": math.inf}], tmp_path / "nested" / "rows.csv")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ["a", "b", "c"]
    assert rows[1] == {"a": "3", "b": "", "c": "inf"}


def test_write_json_and_result(tmp_path):
    write_json({"delta_max": np.float64(1.5), "argmax_p": None}, tmp_path / "d.json")
    assert json.loads((tmp_path / "d.json").read_text()) == {"delta_max": 1.5, "argmax_p": None}
    result = ExperimentResult("tradeoff", [{"strategy": "fast", "empirical_fpr": 0.1}])
    write_result(result, tmp_path / "t.json", "json")
    assert json.loads((tmp_path / "t.json").read_text())[0]["strategy"] == "fast"
    with pytest.raises(ValueError):
        write_result(result, tmp_path / "t.xml", "xml")


def test_with_updates_revalidates():
    cfg = _cfg()
    assert experiments.with_updates(cfg, n_regions=6).n_regions == 6
    with pytest.raises(ValueError):
        experiments.with_updates(cfg, n_regions=40)


def test_run_build_row():
    data = generate(_spec())
    cfg = BuildConfig(n_segments=32, n_regions=4, memory_budget_bits=4.0 * 3000)
    filt, row = experiments.run_build(data, cfg)
    assert row["strategy"] == "fast"
    assert row["j"] == filt.optimization.j
    assert len(row["thresholds"]) == 5
    assert row["memory_bits"] == filt.memory_bits
    assert "empirical_fpr" not in row


def test_query_bench():
    cfg = BuildConfig(n_segments=32, n_regions=4, memory_budget_bits=4.0 * 3000)
    row = experiments.query_bench(generate(_spec()), cfg, 0.5)
    assert row["false_negatives"] == 0
    assert row["n_nonkey_queries"] == 3000
    assert row["n_key_queries"] == 3000
    assert 0.0 <= row["empirical_fpr"] <= 1.0
    assert row["key_queries_per_s"] > 0


def test_bench_time_cells():
    result = experiments.bench_time(
        _spec(),
        _cfg(),
        n_values=[16, 32],
        k_values=[3],
        k_sweep_n=16,
        bits_per_key=4.0,
        plbf_max_n=16,
    )
    cells = [(r["sweep"], r["N"], r["k"], r["strategy"]) for r in result.rows]
    assert ("N", 32, 4, "plbf") not in cells
    assert len(cells) == 4 + 3 + 4
    assert cells[0] == ("N", 16, 4, "plbf")
    small = {r["strategy"]: r for r in result.rows if (r["sweep"], r["N"]) == ("N", 16)}
    assert small["plbf"]["objective"] == small["fast"]["objective"]
    assert small["plbf"]["entry_evals"] > small["fast"]["entry_evals"]


def test_tradeoff_includes_bloom_baseline():
    result = experiments.tradeoff(_spec(), _cfg(), bits_per_key=[2.0, 5.0], holdout_fraction=0.5)
    assert len(result.rows) == 2 * 4
    for bits in (2.0, 5.0):
        rows = {r["strategy"]: r for r in result.rows if r["bits_per_key"] == bits}
        assert set(rows) == {"fast", "fast_pp", "fast_sharp", "bloom"}
        assert rows["fast"]["empirical_fpr"] <= rows["bloom"]["empirical_fpr"]
    fprs = [r["empirical_fpr"] for r in result.rows if r["strategy"] == "fast"]
    assert fprs[1] <= fprs[0]


def test_relative_fpr_is_one_without_swaps():
    spec = SyntheticSpec(n_segments=32, n_keys=20_000, n_nonkeys=20_000)
    result = experiments.relative_fpr(
        spec, _cfg(k=5), swap_counts=[0], seeds=[0], bits_per_key=[3.0], holdout_fraction=0.5
    )
    assert [r["strategy"] for r in result.rows] == ["fast", "fast_pp", "fast_sharp"]
    for row in result.rows:
        assert row["ideality_violations"] == 0
        assert row["n_swaps"] == 0
        assert row["relative_expected_fpr"] == pytest.approx(1.0, rel=1e-6)
        assert row["relative_fpr"] == 1.0


def test_relative_fpr_with_swaps_counts_violations():
    result = experiments.relative_fpr(
        _spec(), _cfg(), swap_counts=[0, 50], seeds=[1], bits_per_key=[3.0], holdout_fraction=0.5
    )
    swapped = [r for r in result.rows if r["n_swaps"] == 50]
    assert len(swapped) == 3
    assert swapped[0]["ideality_violations"] > 0


def test_ablation_sweeps():
    result = experiments.ablation(_spec(), _cfg(), n_values=[16, 32], k_values=[2, 3], bits_per_key=4.0, holdout_fraction=0.5)
    assert {r["sweep"] for r in result.rows} == {"N", "k"}
    assert "bloom" not in {r["strategy"] for r in result.rows}
    assert len(result.rows) == (2 + 2) * 3
    assert sorted({r["k"] for r in result.rows if r["sweep"] == "k"}) == [2, 3]


def test_delta_max_report_meta():
    payload = experiments.delta_max_report(zipf_hist(16, n_swaps=5, seed=2), seed=2, n_swaps=5)
    assert payload["N"] == 16
    assert payload["n_swaps"] == 5
    assert payload["delta_max"] >= 0.0
