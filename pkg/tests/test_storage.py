import numpy as np
import pytest
from sqlalchemy import select

from storage import db
from storage.recorder import finish_run, record_rows, start_run


@pytest.fixture
def database(tmp_path):
    db.configure(f"sqlite:///{tmp_path / 'db' / 'runs.db'}")
    db.init_db()
    yield
    db.configure("sqlite:///:memory:")


def test_run_lifecycle(database):
    run_id = start_run("tradeoff", flags={"k": 5, "out": "results/t.csv"}, seed=3)
    rows = [
        {"strategy": "fast", "N": 64, "k": 5, "empirical_fpr": np.float64(0.01), "memory_bits": np.int64(4000)},
        {"strategy": "bloom", "N": 64, "k": None, "bits_per_key": 4.0},
    ]
    assert record_rows(run_id, rows) == 2
    finish_run(run_id, status="success")

    with db.Session() as session:
        run = session.get(db.Run, run_id)
        assert run.status == "success"
        assert run.finished_at is not None
        assert run.flags == {"k": 5, "out": "results/t.csv"}
        stored = session.scalars(select(db.ResultRow).where(db.ResultRow.run_id == run_id)).all()
    assert {r.strategy for r in stored} == {"fast", "bloom"}
    fast = next(r for r in stored if r.strategy == "fast")
    assert fast.empirical_fpr == pytest.approx(0.01)
    assert fast.memory_bits == 4000
    assert fast.extra is None
    bloom = next(r for r in stored if r.strategy == "bloom")
    assert bloom.extra == {"bits_per_key": 4.0}


def test_failed_run(database):
    run_id = start_run("build")
    finish_run(run_id, status="error", error="no feasible partition")
    with db.Session() as session:
        run = session.get(db.Run, run_id)
        assert run.status == "error"
        assert run.error == "no feasible partition"


def test_env_url(tmp_path, monkeypatch):
    path = tmp_path / "env" / "runs.db"
    monkeypatch.setenv("PLBF_DB_URL", f"sqlite:///{path}")
    db.configure()
    db.init_db()
    assert path.exists()
    db.configure("sqlite:///:memory:")
