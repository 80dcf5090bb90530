from datetime import datetime, timezone

from storage.db import ResultRow, Run, Session, init_db

# row keys with a dedicated column; anything else lands in `extra`
_COLUMNS = {
    "strategy": "strategy",
    "N": "n_segments",
    "k": "n_regions",
    "parameter": "parameter",
    "objective": "objective",
    "empirical_fpr": "empirical_fpr",
    "memory_bits": "memory_bits",
    "wall_ms": "wall_ms",
    "entry_evals": "entry_evals",
    "seed": "seed",
}


def _plain(value):
    # numpy scalars do not bind to SQLite columns or serialize to JSON
    return value.item() if hasattr(value, "item") else value


def start_run(command: str, flags: dict | None = None, seed: int | None = None) -> int:
    init_db()
    with Session() as session:
        run = Run(command=command, flags=flags, seed=seed)
        session.add(run)
        session.commit()
        return run.id


def record_rows(run_id: int, rows: list[dict]) -> int:
    with Session() as session:
        for row in rows:
            fields = {col: _plain(row[key]) for key, col in _COLUMNS.items() if key in row}
            extra = {key: _plain(value) for key, value in row.items() if key not in _COLUMNS}
            session.add(ResultRow(run_id=run_id, extra=extra or None, **fields))
        session.commit()
    return len(rows)


def finish_run(run_id: int, status: str = "success", error: str | None = None) -> None:
    with Session() as session:
        run = session.get(Run, run_id)
        if run:
            run.finished_at = datetime.now(timezone.utc)
            run.status = status
            run.error = error
            session.commit()
