import os
from datetime import datetime, timezone
from pathlib import Path

from sqlalchemy import Column, DateTime, Engine, Float, ForeignKey, Integer, JSON, String, Text, create_engine
from sqlalchemy.orm import DeclarativeBase, sessionmaker

DEFAULT_DB_URL = "sqlite:///storage/runs.db"

Session = sessionmaker()
_engine: Engine | None = None


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Base(DeclarativeBase):
    pass


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    started_at = Column(DateTime, default=_utcnow)
    finished_at = Column(DateTime, nullable=True)
    command = Column(String(64), nullable=False)
    flags = Column(JSON, nullable=True)
    seed = Column(Integer, nullable=True)
    status = Column(String(32), default="running")  # running | success | error
    error = Column(Text, nullable=True)


class ResultRow(Base):
    __tablename__ = "result_rows"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    strategy = Column(String(32))
    n_segments = Column(Integer)
    n_regions = Column(Integer)
    parameter = Column(Float, nullable=True)
    objective = Column(Float, nullable=True)
    empirical_fpr = Column(Float, nullable=True)
    memory_bits = Column(Integer, nullable=True)
    wall_ms = Column(Float, nullable=True)
    entry_evals = Column(Integer, nullable=True)
    seed = Column(Integer, nullable=True)
    extra = Column(JSON, nullable=True)


def configure(url: str | None = None) -> Engine:
    """Bind the session factory to `url`, falling back to PLBF_DB_URL and then the default file."""
    global _engine
    url = url or os.getenv("PLBF_DB_URL", DEFAULT_DB_URL)
    if url.startswith("sqlite:///") and url != "sqlite:///:memory:":
        Path(url.removeprefix("sqlite:///")).parent.mkdir(parents=True, exist_ok=True)
    _engine = create_engine(url, echo=False)
    Session.configure(bind=_engine)
    return _engine


def init_db() -> None:
    engine = _engine if _engine is not None else configure()
    Base.metadata.create_all(engine)
