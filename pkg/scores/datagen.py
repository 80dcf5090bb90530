"""Synthetic Zipfian key / non-key score datasets and the adjacent-segment swap perturbation."""

import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from scores.segmentation import LABEL_KEY, LABEL_NONKEY, ScoredDataset, segment_of

logger = logging.getLogger(__name__)

# keeps generated scores off segment boundaries
_MARGIN = 1e-6


class SyntheticSpec(BaseModel):
    n_segments: int = Field(default=1000, ge=2, description="Number of equal-width score segments N")
    n_keys: int = Field(default=10_000, ge=1, description="Number of key elements")
    n_nonkeys: int = Field(default=10_000, ge=1, description="Number of non-key elements")
    zipf_exponent: float = Field(default=1.0, ge=0.0, description="Zipf exponent s of the segment masses")
    n_swaps: int = Field(default=0, ge=0, description="Adjacent-segment swaps applied after generation")
    seed: int = Field(default=0, ge=0, description="Seed for positions, element order and swaps")


def zipf_counts(n_items: int, n_segments: int, exponent: float, peak_at_top: bool) -> np.ndarray:
    """Integer per-segment counts proportional to rank^-s.

    Rank 1 sits at the last segment when `peak_at_top` (keys) and at the first one
    otherwise (non-keys). The floor of each expected count is taken and the leftover
    units go to the densest segments, so counts stay monotone in the segment index.
    """
    ranks = np.arange(1, n_segments + 1, dtype=np.float64)
    weights = ranks ** (-exponent)
    weights /= weights.sum()
    if peak_at_top:
        weights = weights[::-1]
    counts = np.floor(weights * n_items).astype(np.int64)
    remainder = int(n_items - counts.sum())
    if remainder:
        if peak_at_top:
            counts[n_segments - remainder:] += 1
        else:
            counts[:remainder] += 1
    return counts


def _scores_from_counts(counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n_segments = len(counts)
    seg = np.repeat(np.arange(n_segments), counts)
    offsets = rng.uniform(_MARGIN, 1.0 - _MARGIN, size=len(seg))
    return rng.permutation((seg + offsets) / n_segments)


def generate(spec: SyntheticSpec) -> ScoredDataset:
    rng = np.random.default_rng(spec.seed)
    key_counts = zipf_counts(spec.n_keys, spec.n_segments, spec.zipf_exponent, peak_at_top=True)
    nonkey_counts = zipf_counts(spec.n_nonkeys, spec.n_segments, spec.zipf_exponent, peak_at_top=False)
    data = ScoredDataset(
        keys=_scores_from_counts(key_counts, rng),
        nonkeys=_scores_from_counts(nonkey_counts, rng),
        key_payloads=[b"key-%d" % i for i in range(spec.n_keys)],
        nonkey_payloads=[b"nonkey-%d" % i for i in range(spec.n_nonkeys)],
    )
    logger.info(
        "Generated %d keys / %d non-keys over N=%d (s=%.2f, seed=%d)",
        spec.n_keys, spec.n_nonkeys, spec.n_segments, spec.zipf_exponent, spec.seed,
    )
    if spec.n_swaps:
        data = apply_swaps(data, spec.n_swaps, spec.n_segments, spec.seed)
    return data


def swap_positions(n_swaps: int, n_segments: int, seed: int) -> np.ndarray:
    """The 1-indexed i of each swap (i, i+1), drawn uniformly from 1..N-1."""
    rng = np.random.default_rng([seed, 0x5A])
    return rng.integers(1, n_segments, size=n_swaps)


def swap_permutation(n_swaps: int, n_segments: int, seed: int) -> np.ndarray:
    """content[pos] = original segment whose elements end up at `pos` after all swaps."""
    content = np.arange(n_segments)
    for i in swap_positions(n_swaps, n_segments, seed).tolist():
        content[i - 1], content[i] = content[i], content[i - 1]
    return content


def _pin_to_segment(scores: np.ndarray, target: np.ndarray, n_segments: int) -> np.ndarray:
    # rounding in (seg + offset) / N can leave a score one ulp across a boundary
    for _ in range(8):
        actual = segment_of(scores, n_segments)
        high = actual > target
        low = actual < target
        if not (high.any() or low.any()):
            return scores
        scores[high] = np.nextafter(scores[high], 0.0)
        scores[low] = np.nextafter(scores[low], 1.0)
    raise RuntimeError("could not place remapped scores inside their target segments")


def _remap(scores: np.ndarray, dest: np.ndarray, n_segments: int) -> np.ndarray:
    if len(scores) == 0:
        return scores.copy()
    seg = segment_of(scores, n_segments)
    offset = scores * n_segments - seg
    target = dest[seg]
    moved = np.clip((target + offset) / n_segments, 0.0, 1.0)
    return _pin_to_segment(moved, target, n_segments)


def apply_swaps(data: ScoredDataset, n_swaps: int, n_segments: int, seed: int) -> ScoredDataset:
    """Exchange the contents of adjacent segments `n_swaps` times.

    Within-segment offsets are kept, so the histogram effect of one swap at i is
    exactly (g_i, h_i) <-> (g_{i+1}, h_{i+1}).
    """
    if n_swaps == 0:
        return data
    content = swap_permutation(n_swaps, n_segments, seed)
    dest = np.empty_like(content)
    dest[content] = np.arange(n_segments)
    logger.debug("Applying %d swaps over N=%d", n_swaps, n_segments)
    return ScoredDataset(
        keys=_remap(data.keys, dest, n_segments),
        nonkeys=_remap(data.nonkeys, dest, n_segments),
        key_payloads=data.key_payloads,
        nonkey_payloads=data.nonkey_payloads,
    )


def split_holdout(
    data: ScoredDataset, fraction: float, seed: int
) -> tuple[ScoredDataset, ScoredDataset]:
    """Split non-keys into a construction part and a disjoint held-out query part.

    The construction dataset keeps every key; the held-out dataset has no keys.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(data.nonkeys)
    if n < 2:
        raise ValueError("need at least 2 non-keys to hold some out")
    n_test = min(max(1, round(fraction * n)), n - 1)
    order = np.random.default_rng([seed, 0x40]).permutation(n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    payloads = data.nonkey_payloads
    train = ScoredDataset(
        keys=data.keys,
        nonkeys=data.nonkeys[train_idx],
        key_payloads=data.key_payloads,
        nonkey_payloads=[payloads[i] for i in train_idx] if payloads is not None else None,
    )
    held_out = ScoredDataset(
        keys=np.empty(0),
        nonkeys=data.nonkeys[test_idx],
        key_payloads=[] if payloads is not None else None,
        nonkey_payloads=[payloads[i] for i in test_idx] if payloads is not None else None,
    )
    return train, held_out


def write_csv(data: ScoredDataset, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if data.has_payloads:
            writer.writerow(["score", "label", "payload"])
            for score, payload in zip(data.keys.tolist(), data.key_payloads):
                writer.writerow([repr(score), LABEL_KEY, payload.decode("utf-8")])
            for score, payload in zip(data.nonkeys.tolist(), data.nonkey_payloads):
                writer.writerow([repr(score), LABEL_NONKEY, payload.decode("utf-8")])
        else:
            writer.writerow(["score", "label"])
            writer.writerows([repr(s), LABEL_KEY] for s in data.keys.tolist())
            writer.writerows([repr(s), LABEL_NONKEY] for s in data.nonkeys.tolist())
    logger.info("Wrote %d rows to %s", len(data.keys) + len(data.nonkeys), path)
