#!/usr/bin/env python3
"""CLI entry point for the partitioned learned Bloom filter benchmarks."""

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from bench import experiments
from bench.report import write_json, write_result
from filters.plbf_builder import BuildConfig, ConstructionError, Framework, Strategy, build_dp_table
from scores.datagen import SyntheticSpec, generate, split_holdout
from scores.datagen import write_csv as write_dataset
from scores.segmentation import ScoredDataset, build_histogram, read_csv
from storage.recorder import finish_run, record_rows, start_run

load_dotenv()
logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "config"
RESULTS = Path("results")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_INTERRUPTED = 130


# ── helpers ──────────────────────────────────────────────────────────────────

def _setup_logging(verbose: bool) -> None:
    log_dir = Path(os.getenv("PLBF_LOG_DIR", "logs"))
    log_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s – %(message)s",
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(log_dir / "bench.log"),
        ],
        force=True,
    )


def _load_yaml(path: Path) -> dict:
    with open(path) as f:
        return yaml.safe_load(f) or {}


def _pick(flag, section: dict, key: str, default=None):
    return flag if flag is not None else section.get(key, default)


def _seed(args, conf: dict) -> int:
    return _pick(args.seed, conf, "seed", 0)


def _spec(args, conf: dict, n_segments: int, n_swaps: int | None = None) -> SyntheticSpec:
    data = conf.get("data", {})
    return SyntheticSpec(
        n_segments=n_segments,
        n_keys=_pick(args.keys, data, "n_keys"),
        n_nonkeys=_pick(args.nonkeys, data, "n_nonkeys"),
        zipf_exponent=_pick(args.zipf_s, data, "zipf_exponent"),
        n_swaps=n_swaps if n_swaps is not None else _pick(args.swaps, data, "n_swaps", 0),
        seed=_seed(args, conf),
    )


def _dataset(args, conf: dict, n_segments: int, n_swaps: int | None = None) -> ScoredDataset:
    if args.data is not None:
        return read_csv(args.data)
    return generate(_spec(args, conf, n_segments, n_swaps))


def _holdout_fraction(args, conf: dict) -> float:
    return _pick(getattr(args, "holdout", None), conf, "holdout_fraction", 0.5)


def _base_config(n_segments: int, n_regions: int, seed: int) -> BuildConfig:
    # the budget is set per cell from bits-per-key
    return BuildConfig(n_segments=n_segments, n_regions=n_regions, memory_budget_bits=1.0, seed=seed)


def _build_config(args, conf: dict, n_keys: int) -> BuildConfig:
    sec = conf.get("build", {})
    fields = dict(
        n_segments=_pick(args.n_segments, sec, "n_segments"),
        n_regions=_pick(args.k, sec, "n_regions"),
        strategy=_pick(args.strategy, sec, "strategy", Strategy.FAST.value),
        budget_scope=_pick(args.budget_scope, sec, "budget_scope", "backup"),
        model_bits=_pick(args.model_bits, sec, "model_bits", 0),
        seed=_seed(args, conf),
    )
    target = _pick(args.target_fpr, sec, "target_fpr")
    if target is not None:
        return BuildConfig(framework=Framework.TARGET_FPR, target_fpr=target, **fields)
    if args.budget_bits is not None:
        budget = args.budget_bits
    else:
        budget = _pick(args.bits_per_key, sec, "bits_per_key") * n_keys
    return BuildConfig(framework=Framework.MEMORY_BUDGET, memory_budget_bits=budget, **fields)


def _out_path(args, command: str, suffix: str) -> Path:
    return args.out if args.out is not None else RESULTS / f"{command}.{suffix}"


def _write_sweep(args, result) -> None:
    write_result(result, _out_path(args, result.command, args.format), args.format)


# ── subcommands ───────────────────────────────────────────────────────────────

def _cmd_gen_data(args, conf: dict) -> list[dict]:
    sec = conf.get("gen_data", {})
    spec = _spec(args, conf, _pick(args.n_segments, sec, "n_segments"))
    path = args.out if args.out is not None else Path(sec.get("out", "data/synthetic.csv"))
    write_dataset(generate(spec), path)
    return [{**spec.model_dump(), "path": str(path)}]


def _cmd_build(args, conf: dict) -> list[dict]:
    sec = conf.get("build", {})
    data = _dataset(args, conf, _pick(args.n_segments, sec, "n_segments"))
    fraction = _holdout_fraction(args, conf)
    held_out = None
    if fraction > 0:
        data, held_out = split_holdout(data, fraction, _seed(args, conf))
    cfg = _build_config(args, conf, len(data.keys))
    filt, row = experiments.run_build(data, cfg, held_out)
    if args.save_filter is not None:
        args.save_filter.parent.mkdir(parents=True, exist_ok=True)
        args.save_filter.write_bytes(filt.to_bytes())
        logger.info("Saved filter to %s", args.save_filter)
    if args.dump_dp is not None:
        build_dp_table(build_histogram(data, cfg.n_segments), cfg).to_csv(args.dump_dp)
        logger.info("Dumped DP table to %s", args.dump_dp)
    write_json(row, _out_path(args, "build", "json"))
    return [row]


def _cmd_query_bench(args, conf: dict) -> list[dict]:
    sec = conf.get("build", {})
    data = _dataset(args, conf, _pick(args.n_segments, sec, "n_segments"))
    fraction = _holdout_fraction(args, conf)
    if not 0 < fraction < 1:
        raise ValueError(f"query-bench needs a held-out fraction in (0, 1), got {fraction}")
    cfg = _build_config(args, conf, len(data.keys))
    row = experiments.query_bench(data, cfg, fraction)
    write_json(row, _out_path(args, "query-bench", "json"))
    return [row]


def _cmd_bench_time(args, conf: dict) -> list[dict]:
    sec = conf.get("bench_time", {})
    n_values = _pick(args.n_values, sec, "n_values")
    k_sweep_n = _pick(args.k_sweep_n, sec, "k_sweep_n")
    cfg = _base_config(max([*n_values, k_sweep_n]), _pick(args.k, sec, "n_regions"), _seed(args, conf))
    result = experiments.bench_time(
        _spec(args, conf, cfg.n_segments),
        cfg,
        n_values=n_values,
        k_values=_pick(args.k_values, sec, "k_values"),
        k_sweep_n=k_sweep_n,
        bits_per_key=_pick(args.bits_per_key, sec, "bits_per_key"),
        strategies=[Strategy(s) for s in _pick(args.strategies, sec, "strategies")],
        plbf_max_n=_pick(args.plbf_max_n, sec, "plbf_max_n"),
        workers=args.workers,
    )
    _write_sweep(args, result)
    return result.rows


def _cmd_tradeoff(args, conf: dict) -> list[dict]:
    sec = conf.get("tradeoff", {})
    cfg = _base_config(_pick(args.n_segments, sec, "n_segments"), _pick(args.k, sec, "n_regions"), _seed(args, conf))
    result = experiments.tradeoff(
        _spec(args, conf, cfg.n_segments),
        cfg,
        bits_per_key=_pick(args.bits_per_key, sec, "bits_per_key"),
        holdout_fraction=_holdout_fraction(args, conf),
        strategies=[Strategy(s) for s in _pick(args.strategies, sec, "strategies")],
        workers=args.workers,
    )
    _write_sweep(args, result)
    return result.rows


def _cmd_relative_fpr(args, conf: dict) -> list[dict]:
    sec = conf.get("relative_fpr", {})
    cfg = _base_config(_pick(args.n_segments, sec, "n_segments"), _pick(args.k, sec, "n_regions"), _seed(args, conf))
    result = experiments.relative_fpr(
        _spec(args, conf, cfg.n_segments),
        cfg,
        swap_counts=_pick(args.swap_counts, sec, "swaps"),
        seeds=_pick(args.seeds, sec, "seeds", [_seed(args, conf)]),
        bits_per_key=_pick(args.bits_per_key, sec, "bits_per_key"),
        holdout_fraction=_holdout_fraction(args, conf),
        workers=args.workers,
    )
    _write_sweep(args, result)
    return result.rows


def _cmd_ablation(args, conf: dict) -> list[dict]:
    sec = conf.get("ablation", {})
    cfg = _base_config(_pick(args.n_segments, sec, "n_segments"), _pick(args.k, sec, "n_regions"), _seed(args, conf))
    result = experiments.ablation(
        _spec(args, conf, cfg.n_segments),
        cfg,
        n_values=_pick(args.n_values, sec, "n_values"),
        k_values=_pick(args.k_values, sec, "k_values"),
        bits_per_key=_pick(args.bits_per_key, sec, "bits_per_key"),
        holdout_fraction=_holdout_fraction(args, conf),
        workers=args.workers,
    )
    _write_sweep(args, result)
    return result.rows


def _cmd_delta_max(args, conf: dict) -> list[dict]:
    sec = conf.get("delta_max", {})
    n_segments = _pick(args.n_segments, sec, "n_segments")
    n_swaps = _pick(args.swaps, sec, "n_swaps", 0)
    hist = build_histogram(_dataset(args, conf, n_segments, n_swaps), n_segments)
    meta = {"seed": _seed(args, conf)}
    if args.data is None:
        meta["n_swaps"] = n_swaps
    payload = experiments.delta_max_report(hist, **meta)
    write_json(payload, _out_path(args, "delta-max", "json"))
    return [payload]


# ── argument parsing ──────────────────────────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _list_of(kind):
    def parse(text: str) -> list:
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from exc

    return parse


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Base seed (default from config)")
    common.add_argument("--out", type=Path, default=None, help="Output file")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="Format of sweep outputs")
    common.add_argument("--workers", type=int, default=1, help="Worker processes for independent cells")
    common.add_argument("--no-record", action="store_true", help="Do not record the run in the database")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    common.add_argument("--config", type=Path, default=CONFIG_DIR / "experiments.yaml", help="YAML defaults")
    return common


def _synthetic_flags() -> argparse.ArgumentParser:
    synthetic = _Parser(add_help=False)
    synthetic.add_argument("--keys", type=int, default=None, help="Synthetic key count")
    synthetic.add_argument("--nonkeys", type=int, default=None, help="Synthetic non-key count")
    synthetic.add_argument("--zipf-s", type=float, default=None, help="Zipf exponent of the synthetic scores")
    synthetic.add_argument("--swaps", type=int, default=None, help="Adjacent-segment swaps")
    return synthetic


def _data_flags() -> argparse.ArgumentParser:
    data = _Parser(add_help=False)
    data.add_argument("--data", type=Path, default=None, help="CSV with score,label[,payload] rows")
    return data


def _build_flags() -> argparse.ArgumentParser:
    build = _Parser(add_help=False)
    build.add_argument("--n-segments", type=int, default=None)
    build.add_argument("--k", type=int, default=None, help="Number of regions")
    build.add_argument("--strategy", choices=[s.value for s in Strategy], default=None)
    build.add_argument("--target-fpr", type=float, default=None, help="Minimize memory for this FPR instead")
    build.add_argument("--bits-per-key", type=float, default=None)
    build.add_argument("--budget-bits", type=float, default=None, help="Absolute memory budget")
    build.add_argument("--budget-scope", choices=("backup", "total"), default=None)
    build.add_argument("--model-bits", type=int, default=None)
    build.add_argument("--holdout", type=float, default=None, help="Fraction of non-keys held out for FPR")
    return build


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description="Partitioned learned Bloom filter construction benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    common, synthetic, data, build = _common_flags(), _synthetic_flags(), _data_flags(), _build_flags()
    # sweeps regenerate scores per cell; --data is for single-dataset commands

    p = sub.add_parser("gen-data", parents=[common, synthetic], help="Write a synthetic scored dataset")
    p.add_argument("--n-segments", type=int, default=None)
    p.set_defaults(handler=_cmd_gen_data)

    p = sub.add_parser("build", parents=[common, synthetic, data, build], help="Build one filter and report it")
    p.add_argument("--save-filter", type=Path, default=None)
    p.add_argument("--dump-dp", type=Path, default=None, help="CSV dump of the DP table")
    p.set_defaults(handler=_cmd_build)

    p = sub.add_parser("query-bench", parents=[common, synthetic, data, build], help="Query throughput and FPR")
    p.set_defaults(handler=_cmd_query_bench)

    p = sub.add_parser("bench-time", parents=[common, synthetic], help="Construction time over N and k")
    p.add_argument("--n-values", type=_list_of(int), default=None)
    p.add_argument("--k", type=int, default=None, help="Regions in the N sweep")
    p.add_argument("--k-values", type=_list_of(int), default=None)
    p.add_argument("--k-sweep-n", type=int, default=None, help="Segments in the k sweep")
    p.add_argument("--bits-per-key", type=float, default=None)
    p.add_argument("--strategies", type=_list_of(str), default=None)
    p.add_argument("--plbf-max-n", type=int, default=None, help="Skip the per-j rebuild above this N")
    p.set_defaults(handler=_cmd_bench_time)

    p = sub.add_parser("tradeoff", parents=[common, synthetic], help="Empirical FPR over memory budgets")
    p.add_argument("--n-segments", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--bits-per-key", type=_list_of(float), default=None)
    p.add_argument("--strategies", type=_list_of(str), default=None)
    p.add_argument("--holdout", type=float, default=None)
    p.set_defaults(handler=_cmd_tradeoff)

    p = sub.add_parser("relative-fpr", parents=[common, synthetic], help="Accelerated vs exact FPR over swap counts")
    p.add_argument("--n-segments", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--swap-counts", type=_list_of(int), default=None)
    p.add_argument("--seeds", type=_list_of(int), default=None)
    p.add_argument("--bits-per-key", type=_list_of(float), default=None)
    p.add_argument("--holdout", type=float, default=None)
    p.set_defaults(handler=_cmd_relative_fpr)

    p = sub.add_parser("ablation", parents=[common, synthetic], help="Empirical FPR over N and over k")
    p.add_argument("--n-segments", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n-values", type=_list_of(int), default=None)
    p.add_argument("--k-values", type=_list_of(int), default=None)
    p.add_argument("--bits-per-key", type=float, default=None)
    p.add_argument("--holdout", type=float, default=None)
    p.set_defaults(handler=_cmd_ablation)

    p = sub.add_parser("delta-max", parents=[common, synthetic, data], help="δ_max of a score histogram")
    p.add_argument("--n-segments", type=int, default=None)
    p.set_defaults(handler=_cmd_delta_max)
    return parser


# ── entry point ───────────────────────────────────────────────────────────────

def _flags(args) -> dict:
    return {
        key: str(value) if isinstance(value, Path) else value
        for key, value in vars(args).items()
        if key != "handler"
    }


def _fail(run_id: int | None, error: str) -> None:
    if run_id is not None:
        finish_run(run_id, status="error", error=error)


def _run(args, conf: dict) -> int:
    run_id = None if args.no_record else start_run(args.command, flags=_flags(args), seed=_seed(args, conf))
    if run_id is not None:
        logger.info("Starting run #%d (%s)", run_id, args.command)
    try:
        rows = args.handler(args, conf)
    except ConstructionError as exc:
        logger.error("Construction failed: %s", exc)
        _fail(run_id, str(exc))
        return EXIT_INFEASIBLE
    except (ValidationError, ValueError, FileNotFoundError) as exc:
        logger.error("Invalid input: %s", exc)
        _fail(run_id, str(exc))
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        _fail(run_id, "KeyboardInterrupt")
        return EXIT_INTERRUPTED
    except Exception as exc:
        logger.exception("%s failed: %s", args.command, exc)
        _fail(run_id, str(exc))
        return EXIT_USAGE

    if run_id is not None:
        record_rows(run_id, rows)
        finish_run(run_id, status="success")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        conf = _load_yaml(args.config)
    except (OSError, yaml.YAMLError) as exc:
        logger.error("Cannot read config %s: %s", args.config, exc)
        return EXIT_USAGE
    return _run(args, conf)


if __name__ == "__main__":
    sys.exit(main())
