"""Stream determinism, disjointness, and distributional sanity."""

import itertools
from collections import Counter

import numpy as np
import pytest

from harmonize_mcmc.rng import StreamFamily, StreamKey, derangement, stream


def test_same_key_identical_draws():
    a = stream(StreamKey(42, 7, 3)).standard_normal(1000)
    b = stream(StreamKey(42, 7, 3)).standard_normal(1000)
    assert np.array_equal(a, b)


def test_distinct_keys_differ():
    base = stream(StreamKey(42, 7, 3)).standard_normal(32)
    for key in (StreamKey(43, 7, 3), StreamKey(42, 8, 3), StreamKey(42, 7, 4)):
        assert not np.array_equal(base, stream(key).standard_normal(32))


def test_family_matches_fresh_streams():
    family = StreamFamily(99)
    for step, lane in [(0, 0), (5, 17), (1, 2**64 - 1), (2**40, 3)]:
        got = family.stream(step, lane).standard_normal(16)
        want = stream(StreamKey(99, step, lane)).standard_normal(16)
        assert np.array_equal(got, want)


def test_stream_key_rejects_out_of_range():
    with pytest.raises(ValueError):
        StreamKey(-1, 0, 0)
    with pytest.raises(ValueError):
        StreamKey(0, 2**64, 0)


def test_permutation_frequencies_uniform():
    # 24 images of permutation(4); each frequency within 4 SE of 1/24
    gen = stream(StreamKey(7, 0, 0))
    n = 240_000
    counts = Counter(tuple(gen.permutation(4)) for _ in range(n))
    assert len(counts) == 24
    p = 1 / 24
    se = np.sqrt(p * (1 - p) / n)
    for perm in itertools.permutations(range(4)):
        assert abs(counts[perm] / n - p) < 4 * se


def test_derangement_of_three_hits_both_cycles():
    gen = stream(StreamKey(11, 0, 0))
    n = 20_000
    counts = Counter(tuple(derangement(gen, 3)) for _ in range(n))
    assert set(counts) == {(1, 2, 0), (2, 0, 1)}
    se = np.sqrt(0.25 / n)
    for perm, c in counts.items():
        assert abs(c / n - 0.5) < 3 * se


def test_derangement_never_has_fixed_points():
    gen = stream(StreamKey(13, 0, 0))
    for m in (2, 3, 5, 8):
        for _ in range(200):
            perm = derangement(gen, m)
            assert not np.any(perm == np.arange(m))
            assert np.array_equal(np.sort(perm), np.arange(m))


def test_derangement_rejects_m_below_two():
    gen = stream(StreamKey(0, 0, 0))
    with pytest.raises(ValueError):
        derangement(gen, 1)
    with pytest.raises(ValueError):
        derangement(gen, 0)


def test_lane_adjacent_streams_uncorrelated():
    n = 10_000
    u = np.array([stream(StreamKey(3, 0, k)).uniform() for k in range(n)])
    v = np.array([stream(StreamKey(3, 0, k + 1)).uniform() for k in range(n)])
    corr = np.corrcoef(u, v)[0, 1]
    assert abs(corr) < 4.0 / np.sqrt(n)


def test_standard_normal_moments():
    draws = stream(StreamKey(5, 0, 0)).standard_normal(1_000_000)
    n = draws.size
    assert abs(draws.mean()) < 4.0 / np.sqrt(n)
    assert abs(draws.var(ddof=1) - 1.0) < 4.0 * np.sqrt(2.0 / (n - 1))
