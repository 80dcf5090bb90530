"""CSV / JSON emission of experiment results."""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

STRATEGY_ORDER = {"plbf": 0, "fast": 1, "fast_pp": 2, "fast_sharp": 3, "bloom": 4}


@dataclass(frozen=True)
class ExperimentResult:
    command: str
    rows: list[dict]
    flags: dict = field(default_factory=dict)


def canonical_order(rows: list[dict], keys: tuple[str, ...]) -> list[dict]:
    """Sort rows by `keys` (strategies in construction order) so output is independent of scheduling."""

    def sort_key(row: dict):
        out = []
        for key in keys:
            value = row.get(key)
            if key == "strategy":
                value = STRATEGY_ORDER.get(value, len(STRATEGY_ORDER))
            out.append((value is None, value if value is not None else 0))
        return out

    return sorted(rows, key=sort_key)


def _jsonable(value):
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _columns(rows: list[dict]) -> list[str]:
    columns: list[str] = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    return columns


def write_csv(rows: list[dict], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_columns(rows))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _jsonable(v) for k, v in row.items()})
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def write_json(payload, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, list):
        payload = [{k: _jsonable(v) for k, v in row.items()} for row in payload]
    elif isinstance(payload, dict):
        payload = {k: _jsonable(v) for k, v in payload.items()}
    path.write_text(json.dumps(payload, indent=2))
    logger.info("Wrote %s", path)
    return path


def write_result(result: ExperimentResult, path: Path, fmt: str) -> Path:
    if fmt == "csv":
        return write_csv(result.rows, path)
    if fmt == "json":
        return write_json(result.rows, path)
    raise ValueError(f"unknown output format {fmt!r}")
