"""Partitioned learned Bloom filter construction and queries.

The score space is cut into N segments and the segments are grouped into k
regions, each backed by its own Bloom filter with its own false-positive rate.
For every candidate start j of the last region, the best clustering of segments
1..j-1 into k-1 regions is read off a DP_KL table, the regional FPRs are
optimized, and the best (thresholds, FPRs) pair over all j is kept.
"""

import logging
import struct
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from algos.dp_core import (
    DPTable,
    InfeasibleJError,
    Thresholds,
    backtrack,
    build_dp_mm,
    build_dp_naive,
    build_dp_single,
    build_dp_smawk,
)
from algos.fpr_opt import (
    FprAssignment,
    InfeasibleCandidateError,
    RegionStats,
    expected_fpr,
    fast_optimal_fpr,
    optimal_fpr,
    optimal_fpr_budget,
)
from filters.bloom import LOG2_E, BloomFilter
from scores.segmentation import (
    ScoreDomainError,
    ScoredDataset,
    SegmentHistogram,
    build_histogram,
    segment_of,
)

logger = logging.getLogger(__name__)

MAGIC = b"PLBF"
VERSION = 1
# magic, version, k, N, model_bits
_HEADER = struct.Struct("<4sBIIQ")
_BLOB_LEN = struct.Struct("<Q")
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ConstructionError(ValueError):
    """Raised when no candidate partition yields a feasible filter."""


class Strategy(str, Enum):
    PLBF = "plbf"
    FAST = "fast"
    FAST_PP = "fast_pp"
    FAST_SHARP = "fast_sharp"


class Framework(str, Enum):
    TARGET_FPR = "target_fpr"
    MEMORY_BUDGET = "memory_budget"


class BuildConfig(BaseModel):
    n_segments: int = Field(default=1000, ge=3, description="Number of score segments N")
    n_regions: int = Field(default=5, ge=2, description="Number of regions k, 2 <= k < N")
    framework: Framework = Field(default=Framework.MEMORY_BUDGET, description="Which quantity is fixed")
    target_fpr: float | None = Field(default=None, gt=0.0, lt=1.0, description="Target FPR F")
    memory_budget_bits: float | None = Field(default=None, gt=0.0, description="Memory budget M in bits")
    budget_scope: Literal["backup", "total"] = Field(
        default="backup", description="Whether M covers the backup filters only or also the model"
    )
    model_bits: int = Field(default=0, ge=0, description="Model size added to reported total memory")
    c: float = Field(default=LOG2_E, gt=0.0, description="Bloom filter memory constant")
    strategy: Strategy = Field(default=Strategy.FAST, description="Construction algorithm")
    seed: int = Field(default=0, ge=0, description="Seed for the backup filter hashes")

    @model_validator(mode="after")
    def _check(self) -> "BuildConfig":
        if self.n_regions >= self.n_segments:
            raise ValueError(f"need k < N, got k={self.n_regions}, N={self.n_segments}")
        if self.framework is Framework.TARGET_FPR and self.target_fpr is None:
            raise ValueError("framework target_fpr needs target_fpr")
        if self.framework is Framework.MEMORY_BUDGET:
            if self.memory_budget_bits is None:
                raise ValueError("framework memory_budget needs memory_budget_bits")
            if self.backup_budget_bits <= 0:
                raise ValueError(
                    f"model_bits={self.model_bits} leaves no backup memory in a total budget "
                    f"of {self.memory_budget_bits} bits"
                )
        return self

    @property
    def backup_budget_bits(self) -> float:
        if self.memory_budget_bits is None:
            return 0.0
        if self.budget_scope == "total":
            return self.memory_budget_bits - self.model_bits
        return self.memory_budget_bits

    @property
    def framework_parameter(self) -> float:
        if self.framework is Framework.TARGET_FPR:
            return float(self.target_fpr)
        return float(self.memory_budget_bits)


@dataclass
class OptimizationResult:
    thresholds: Thresholds
    assignment: FprAssignment
    stats: RegionStats
    j: int
    objective: float
    entry_evals: int
    strategy: Strategy
    n_skipped: int = 0


_DP_BUILDERS = {
    Strategy.FAST: build_dp_single,
    Strategy.FAST_PP: build_dp_mm,
    Strategy.FAST_SHARP: build_dp_smawk,
}


def build_dp_table(hist: SegmentHistogram, cfg: BuildConfig) -> DPTable:
    """The DP table the configured strategy works from; PLBF's per-j tables end in the j = N one."""
    if cfg.strategy is Strategy.PLBF:
        return build_dp_naive(hist, hist.n_segments, cfg.n_regions)
    return _DP_BUILDERS[cfg.strategy](hist, cfg.n_regions)


def _fpr_solver(cfg: BuildConfig, scale: float):
    if cfg.framework is Framework.MEMORY_BUDGET:
        budget = cfg.backup_budget_bits
        return lambda stats: optimal_fpr_budget(stats, budget, scale)
    solve = fast_optimal_fpr if cfg.strategy in (Strategy.FAST_PP, Strategy.FAST_SHARP) else optimal_fpr
    return lambda stats: solve(stats, cfg.target_fpr, scale)


def optimize(hist: SegmentHistogram, cfg: BuildConfig, n_keys: int | None = None) -> OptimizationResult:
    """Search j = k..N for the thresholds and FPRs with the best objective.

    The objective is backup memory under a target FPR and expected FPR under a
    memory budget. Candidates whose DP cell is unreachable or whose FPRs are
    infeasible are skipped; the first j reaching the best objective wins.
    """
    if hist.n_segments != cfg.n_segments:
        raise ValueError(f"histogram has N={hist.n_segments}, config expects {cfg.n_segments}")
    n_keys = n_keys if n_keys is not None else hist.n_keys
    if n_keys < 1:
        raise ValueError("the key count is needed to size the backup filters")
    k, n = cfg.n_regions, cfg.n_segments
    solve = _fpr_solver(cfg, cfg.c * n_keys)

    shared: DPTable | None = None
    entry_evals = 0
    if cfg.strategy is not Strategy.PLBF:
        shared = build_dp_table(hist, cfg)
        entry_evals = shared.entry_evals

    best: OptimizationResult | None = None
    skipped = 0
    for j in range(k, n + 1):
        if shared is None:
            table = build_dp_naive(hist, j, k)
            entry_evals += table.entry_evals
        else:
            table = shared
        try:
            thresholds = backtrack(table, j, k)
            stats = RegionStats.from_thresholds(hist, thresholds)
            assignment = solve(stats)
        except (InfeasibleJError, InfeasibleCandidateError) as exc:
            logger.debug("Skipping j=%d: %s", j, exc)
            skipped += 1
            continue
        if best is None or assignment.objective < best.objective:
            best = OptimizationResult(
                thresholds, assignment, stats, j, assignment.objective, 0, cfg.strategy
            )

    if best is None:
        raise ConstructionError(
            f"no feasible partition for N={n}, k={k} under {cfg.framework.value}={cfg.framework_parameter}"
        )
    best.entry_evals = entry_evals
    best.n_skipped = skipped
    return best


def _region_seed(seed: int, region: int) -> int:
    return (seed * _GOLDEN + region) & _MASK64


@dataclass(eq=False)
class PlbfFilter:
    thresholds: Thresholds
    f: np.ndarray
    backups: list[BloomFilter | None]
    stats: RegionStats
    model_bits: int = 0
    optimization: OptimizationResult | None = field(default=None, repr=False)

    @property
    def n_regions(self) -> int:
        return self.thresholds.n_regions

    def regions_of(self, scores) -> np.ndarray:
        """0-based region index per score, using the segment boundary convention."""
        seg = segment_of(scores, self.thresholds.n_segments)
        return np.searchsorted(self.thresholds.t_seg, seg, side="right") - 1

    def region_of(self, score: float) -> int:
        return int(self.regions_of([score])[0])

    def query(self, element: bytes, score: float) -> bool:
        if not 0.0 <= score <= 1.0:
            raise ScoreDomainError(f"score {score!r} is outside [0, 1]")
        backup = self.backups[self.region_of(score)]
        if backup is None:
            return True
        return backup.query(element)

    def query_many(self, elements: list[bytes], scores) -> np.ndarray:
        regions = self.regions_of(scores)
        out = np.empty(len(elements), dtype=bool)
        for idx, (element, region) in enumerate(zip(elements, regions.tolist())):
            backup = self.backups[region]
            out[idx] = True if backup is None else backup.query(element)
        return out

    @property
    def backup_bits(self) -> int:
        return sum(b.memory_bits for b in self.backups if b is not None)

    @property
    def memory_bits(self) -> int:
        return self.backup_bits + self.model_bits

    def realized_fprs(self) -> np.ndarray:
        """Per-region rates of the filters as built: 1 for pass-through regions."""
        return np.array([1.0 if b is None else b.estimated_fpr() for b in self.backups])

    def expected_fpr(self) -> float:
        return expected_fpr(self.stats, self.f)

    def realized_expected_fpr(self) -> float:
        return expected_fpr(self.stats, self.realized_fprs())

    def report(self) -> dict:
        return {
            "k": self.n_regions,
            "N": self.thresholds.n_segments,
            "thresholds": self.thresholds.scores.tolist(),
            "f": self.f.tolist(),
            "realized_f": self.realized_fprs().tolist(),
            "expected_fpr": self.expected_fpr(),
            "realized_expected_fpr": self.realized_expected_fpr(),
            "backup_bits": self.backup_bits,
            "memory_bits": self.memory_bits,
        }

    def to_bytes(self) -> bytes:
        k, n = self.n_regions, self.thresholds.n_segments
        parts = [
            _HEADER.pack(MAGIC, VERSION, k, n, self.model_bits),
            self.thresholds.t_seg.astype("<u4").tobytes(),
            self.f.astype("<f8").tobytes(),
            self.stats.G.astype("<f8").tobytes(),
            self.stats.H.astype("<f8").tobytes(),
        ]
        for backup in self.backups:
            blob = b"" if backup is None else backup.to_bytes()
            parts.append(_BLOB_LEN.pack(len(blob)))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PlbfFilter":
        magic, version, k, n, model_bits = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError(f"not a PLBF blob (magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported PLBF version {version}")
        pos = _HEADER.size

        def take(dtype: str, count: int) -> np.ndarray:
            nonlocal pos
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr

        t_seg = take("<u4", k + 1).astype(np.int64)
        f = take("<f8", k).copy()
        G = take("<f8", k).copy()
        H = take("<f8", k).copy()
        backups: list[BloomFilter | None] = []
        for _ in range(k):
            (length,) = _BLOB_LEN.unpack_from(blob, pos)
            pos += _BLOB_LEN.size
            backups.append(BloomFilter.from_bytes(blob[pos:pos + length]) if length else None)
            pos += length
        return cls(Thresholds(t_seg, n), f, backups, RegionStats(G, H), model_bits)


def build(data: ScoredDataset, cfg: BuildConfig) -> PlbfFilter:
    if data.key_payloads is None:
        raise ValueError("building a filter needs key payloads")
    start = time.perf_counter()
    hist = build_histogram(data, cfg.n_segments)
    result = optimize(hist, cfg, n_keys=len(data.keys))

    f = result.assignment.f
    shell = PlbfFilter(result.thresholds, f, [], result.stats, cfg.model_bits, result)
    key_regions = shell.regions_of(data.keys)
    counts = np.bincount(key_regions, minlength=cfg.n_regions)
    for region in range(cfg.n_regions):
        seed = _region_seed(cfg.seed, region)
        if f[region] >= 1.0:
            shell.backups.append(None)
        elif counts[region] == 0:
            # nothing stored; a 1-bit filter answers every query negatively
            shell.backups.append(BloomFilter(1, 1, seed))
        else:
            shell.backups.append(BloomFilter.for_capacity(int(counts[region]), float(f[region]), seed, cfg.c))

    for payload, region in zip(data.key_payloads, key_regions.tolist()):
        backup = shell.backups[region]
        if backup is not None:
            backup.insert(payload)

    logger.info(
        "Built %s filter (N=%d, k=%d, j=%d): %d backup bits, expected FPR %.4g in %.1f ms",
        cfg.strategy.value, cfg.n_segments, cfg.n_regions, result.j,
        shell.backup_bits, shell.expected_fpr(), (time.perf_counter() - start) * 1000,
    )
    return shell


def empirical_fpr(filt: PlbfFilter, held_out: ScoredDataset) -> float:
    """Fraction of non-keys answered positively."""
    if held_out.nonkey_payloads is None:
        raise ValueError("measuring the FPR needs non-key payloads")
    if len(held_out.nonkeys) == 0:
        raise ValueError("no non-keys to probe")
    hits = filt.query_many(held_out.nonkey_payloads, held_out.nonkeys)
    return float(hits.mean())


def false_negatives(filt: PlbfFilter, data: ScoredDataset) -> int:
    if data.key_payloads is None:
        raise ValueError("checking keys needs key payloads")
    return int(np.count_nonzero(~filt.query_many(data.key_payloads, data.keys)))
