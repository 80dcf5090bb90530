"""Bin scored keys / non-keys into N equal-width segments."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LABEL_KEY = "key"
LABEL_NONKEY = "nonkey"


class EmptyClassError(ValueError):
    """Raised when the key or the non-key side of a dataset is empty."""


class ScoreDomainError(ValueError):
    """Raised for scores outside the closed interval [0, 1]."""


def _check_scores(scores: np.ndarray, what: str) -> None:
    bad = ~((scores >= 0.0) & (scores <= 1.0))  # also catches NaN
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ScoreDomainError(f"{what} score {scores[idx]!r} at position {idx} is outside [0, 1]")


@dataclass(frozen=True, eq=False)
class ScoredDataset:
    keys: np.ndarray
    nonkeys: np.ndarray
    key_payloads: list[bytes] | None = None
    nonkey_payloads: list[bytes] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", np.asarray(self.keys, dtype=np.float64))
        object.__setattr__(self, "nonkeys", np.asarray(self.nonkeys, dtype=np.float64))
        _check_scores(self.keys, "key")
        _check_scores(self.nonkeys, "non-key")
        if self.key_payloads is not None and len(self.key_payloads) != len(self.keys):
            raise ValueError("key_payloads must align with key scores")
        if self.nonkey_payloads is not None and len(self.nonkey_payloads) != len(self.nonkeys):
            raise ValueError("nonkey_payloads must align with non-key scores")
        if self.key_payloads is not None and self.nonkey_payloads is not None:
            overlap = set(self.key_payloads).intersection(self.nonkey_payloads)
            if overlap:
                raise ValueError(f"{len(overlap)} payload(s) are labelled both key and non-key")

    @property
    def has_payloads(self) -> bool:
        return self.key_payloads is not None and self.nonkey_payloads is not None


def segment_of(scores, n_segments: int) -> np.ndarray:
    """0-based segment index; segments are [i/N, (i+1)/N) and the last one also holds 1.0."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.floor(scores * n_segments).astype(np.int64)
    return np.minimum(idx, n_segments - 1)


@dataclass(frozen=True, eq=False)
class SegmentHistogram:
    n_segments: int
    g: np.ndarray
    h: np.ndarray
    g_prefix: np.ndarray = field(repr=False)
    h_prefix: np.ndarray = field(repr=False)
    n_keys: int = 0
    n_nonkeys: int = 0

    @classmethod
    def from_counts(
        cls, key_counts, nonkey_counts, n_keys: int | None = None, n_nonkeys: int | None = None
    ) -> "SegmentHistogram":
        key_counts = np.asarray(key_counts, dtype=np.float64)
        nonkey_counts = np.asarray(nonkey_counts, dtype=np.float64)
        if key_counts.shape != nonkey_counts.shape or key_counts.ndim != 1:
            raise ValueError("key and non-key counts must be 1-D vectors of equal length")
        if len(key_counts) < 2:
            raise ValueError("a histogram needs at least 2 segments")
        if (key_counts < 0).any() or (nonkey_counts < 0).any():
            raise ValueError("segment masses must be nonnegative")
        key_total = key_counts.sum()
        nonkey_total = nonkey_counts.sum()
        if key_total <= 0:
            raise EmptyClassError("key masses are all zero")
        if nonkey_total <= 0:
            raise EmptyClassError("non-key masses are all zero")
        g = key_counts / key_total
        h = nonkey_counts / nonkey_total
        return cls(
            n_segments=len(g),
            g=g,
            h=h,
            g_prefix=np.concatenate(([0.0], np.cumsum(g))),
            h_prefix=np.concatenate(([0.0], np.cumsum(h))),
            n_keys=n_keys if n_keys is not None else _count_or_zero(key_counts, key_total),
            n_nonkeys=n_nonkeys if n_nonkeys is not None else _count_or_zero(nonkey_counts, nonkey_total),
        )

    def mass(self, i_l: int, i_r: int) -> tuple[float, float]:
        """(Σ g, Σ h) over segments i_l..i_r, 1-indexed and inclusive."""
        if not 1 <= i_l <= i_r <= self.n_segments:
            raise IndexError(f"segment range ({i_l}, {i_r}) outside 1..{self.n_segments}")
        return (
            float(self.g_prefix[i_r] - self.g_prefix[i_l - 1]),
            float(self.h_prefix[i_r] - self.h_prefix[i_l - 1]),
        )

    def masses_ending_at(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectors of mass(i, p) for i = 1..p."""
        if not 1 <= p <= self.n_segments:
            raise IndexError(f"segment {p} outside 1..{self.n_segments}")
        return self.g_prefix[p] - self.g_prefix[:p], self.h_prefix[p] - self.h_prefix[:p]

    def permuted(self, order) -> "SegmentHistogram":
        order = np.asarray(order)
        return SegmentHistogram.from_counts(
            self.g[order], self.h[order], n_keys=self.n_keys, n_nonkeys=self.n_nonkeys
        )


def _count_or_zero(values: np.ndarray, total: float) -> int:
    # element counts are only known when the histogram was built from integer counts
    return int(round(total)) if np.all(values == np.floor(values)) else 0


def build_histogram(data: ScoredDataset, n_segments: int) -> SegmentHistogram:
    if n_segments < 2:
        raise ValueError(f"n_segments must be >= 2, got {n_segments}")
    if len(data.keys) == 0:
        raise EmptyClassError("dataset has no keys")
    if len(data.nonkeys) == 0:
        raise EmptyClassError("dataset has no non-keys")
    key_counts = np.bincount(segment_of(data.keys, n_segments), minlength=n_segments)
    nonkey_counts = np.bincount(segment_of(data.nonkeys, n_segments), minlength=n_segments)
    hist = SegmentHistogram.from_counts(key_counts, nonkey_counts)
    logger.debug(
        "Histogram N=%d from %d keys / %d non-keys", n_segments, len(data.keys), len(data.nonkeys)
    )
    return hist


def read_csv(path: Path) -> ScoredDataset:
    """Load `score,label[,payload]` rows; labels are `key` or `nonkey`."""
    keys: list[float] = []
    nonkeys: list[float] = []
    key_payloads: list[bytes] = []
    nonkey_payloads: list[bytes] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["score", "label"]:
            raise ValueError(f"{path}: expected header 'score,label[,payload]'")
        has_payload = len(header) > 2 and header[2].strip() == "payload"
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{line_no}: expected at least score and label, got {row!r}")
            try:
                score = float(row[0])
            except ValueError as exc:
                raise ScoreDomainError(f"{path}:{line_no}: unparseable score {row[0]!r}") from exc
            if not 0.0 <= score <= 1.0:
                raise ScoreDomainError(f"{path}:{line_no}: score {score} outside [0, 1]")
            label = row[1].strip()
            payload = row[2].encode("utf-8") if has_payload and len(row) > 2 else None
            if label == LABEL_KEY:
                keys.append(score)
                if payload is not None:
                    key_payloads.append(payload)
            elif label == LABEL_NONKEY:
                nonkeys.append(score)
                if payload is not None:
                    nonkey_payloads.append(payload)
            else:
                raise ValueError(f"{path}:{line_no}: unknown label {label!r}")
    logger.info("Read %d keys and %d non-keys from %s", len(keys), len(nonkeys), path)
    return ScoredDataset(
        keys=np.array(keys),
        nonkeys=np.array(nonkeys),
        key_payloads=key_payloads if has_payload else None,
        nonkey_payloads=nonkey_payloads if has_payload else None,
    )
