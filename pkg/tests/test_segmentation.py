import numpy as np
import pytest

from scores.segmentation import (
    EmptyClassError,
    ScoreDomainError,
    ScoredDataset,
    SegmentHistogram,
    build_histogram,
    read_csv,
    segment_of,
)


def test_direct_counting():
    hist = build_histogram(ScoredDataset(keys=[0.1, 0.9], nonkeys=[0.1, 0.4]), 2)
    assert hist.g.tolist() == [0.5, 0.5]
    assert hist.h.tolist() == [1.0, 0.0]


def test_score_one_lands_in_last_segment():
    hist = build_histogram(ScoredDataset(keys=[1.0], nonkeys=[0.0]), 4)
    assert hist.g.tolist() == [0.0, 0.0, 0.0, 1.0]
    assert hist.h.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_half_open_boundaries():
    assert segment_of([0.0, 0.25, 0.2499999, 0.5, 1.0], 4).tolist() == [0, 1, 0, 2, 3]


def test_uniform_scores_concentrate(rng):
    n, N = 10_000, 100
    hist = build_histogram(ScoredDataset(keys=rng.uniform(size=n), nonkeys=rng.uniform(size=n)), N)
    sigma = np.sqrt(0.01 * 0.99 / n)
    assert np.all(np.abs(hist.g - 0.01) < 5 * sigma)
    assert np.all(np.abs(hist.h - 0.01) < 5 * sigma)


def test_histogram_invariants(rng):
    hist = build_histogram(ScoredDataset(keys=rng.beta(5, 1, 500), nonkeys=rng.beta(1, 5, 800)), 37)
    assert hist.g.sum() == pytest.approx(1.0, abs=1e-9)
    assert hist.h.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(np.diff(hist.g_prefix), hist.g, rtol=0, atol=1e-15)
    assert hist.n_keys == 500
    assert hist.n_nonkeys == 800


@pytest.mark.parametrize(
    "keys, nonkeys, error",
    [
        ([], [0.5], EmptyClassError),
        ([0.5], [], EmptyClassError),
        ([1.5], [0.5], ScoreDomainError),
        ([0.5], [-0.1], ScoreDomainError),
        ([float("nan")], [0.5], ScoreDomainError),
    ],
)
def test_rejects_bad_input(keys, nonkeys, error):
    with pytest.raises(error):
        build_histogram(ScoredDataset(keys=keys, nonkeys=nonkeys), 4)


def test_overlapping_payloads_rejected():
    with pytest.raises(ValueError):
        ScoredDataset(keys=[0.1], nonkeys=[0.2], key_payloads=[b"a"], nonkey_payloads=[b"a"])


def test_mass_examples():
    hist = SegmentHistogram.from_counts([0.5, 0.5], [0.3, 0.7])
    assert hist.mass(1, 2) == pytest.approx((1.0, 1.0))
    hist = SegmentHistogram.from_counts([0.2, 0.3, 0.5], [0.6, 0.3, 0.1])
    g, h = hist.mass(2, 3)
    assert g == pytest.approx(0.8)
    assert h == pytest.approx(0.4)


@pytest.mark.parametrize("i_l, i_r", [(0, 2), (3, 2), (1, 6), (-1, 1)])
def test_mass_out_of_range(i_l, i_r):
    hist = SegmentHistogram.from_counts([1, 2, 3, 4, 5], [5, 4, 3, 2, 1])
    with pytest.raises(IndexError):
        hist.mass(i_l, i_r)


def test_mass_matches_summation(rng):
    hist = SegmentHistogram.from_counts(rng.integers(0, 50, 24), rng.integers(1, 50, 24))
    for i_l in range(1, 25):
        for i_r in range(i_l, 25):
            g, h = hist.mass(i_l, i_r)
            assert g == hist.g_prefix[i_r] - hist.g_prefix[i_l - 1]
            assert g == pytest.approx(sum(hist.g[i_l - 1:i_r]), abs=1e-12)
            assert h == pytest.approx(sum(hist.h[i_l - 1:i_r]), abs=1e-12)


def test_masses_ending_at_matches_mass(rng):
    hist = SegmentHistogram.from_counts(rng.integers(1, 9, 10), rng.integers(1, 9, 10))
    g, h = hist.masses_ending_at(7)
    for i in range(1, 8):
        assert (g[i - 1], h[i - 1]) == hist.mass(i, 7)


def test_rebinning_invariance(rng):
    data = ScoredDataset(keys=rng.uniform(size=3000), nonkeys=rng.uniform(size=3000) ** 2)
    fine = build_histogram(data, 64)
    coarse = build_histogram(data, 32)
    assert np.allclose(fine.g.reshape(-1, 2).sum(axis=1), coarse.g, atol=1e-12)
    assert np.allclose(fine.h.reshape(-1, 2).sum(axis=1), coarse.h, atol=1e-12)


def test_permuted_reorders_segments():
    hist = SegmentHistogram.from_counts([1, 2, 3], [3, 2, 1])
    swapped = hist.permuted([0, 2, 1])
    assert swapped.g.tolist() == pytest.approx([hist.g[0], hist.g[2], hist.g[1]])
    assert swapped.n_keys == 6


def test_read_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("score,label,payload\n0.9,key,alpha\n0.1,nonkey,beta\n1.0,key,gamma\n")
    data = read_csv(path)
    assert data.keys.tolist() == [0.9, 1.0]
    assert data.key_payloads == [b"alpha", b"gamma"]
    assert data.nonkey_payloads == [b"beta"]


def test_read_csv_without_payloads(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("score,label\n0.9,key\n0.1,nonkey\n")
    data = read_csv(path)
    assert not data.has_payloads


@pytest.mark.parametrize(
    "body, error, fragment",
    [
        ("score,label\n0.5,key\n1.2,nonkey\n", ScoreDomainError, ":3:"),
        ("score,label\nabc,key\n", ScoreDomainError, ":2:"),
        ("score,label\n0.5,maybe\n", ValueError, "unknown label"),
        ("value,kind\n0.5,key\n", ValueError, "header"),
        ("score,label\n0.5,key\n0.7\n", ValueError, ":3: expected at least score and label"),
    ],
)
def test_read_csv_errors(tmp_path, body, error, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(error, match=fragment):
        read_csv(path)
