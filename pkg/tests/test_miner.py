import numpy as np
import pytest

from daemon_ngram.entropy import EntropyThresholds, entropy_of
from daemon_ngram.exceptions import MiningError
from daemon_ngram.miner import (Stage2Config, file_presence_grams, min_presence, mine_family,
                                one_gram_histogram)
from oracles import naive_mine, naive_onegram, random_bytes


def test_zero_threshold_keeps_every_distinct_window():
    assert file_presence_grams(b"abcabc", 2, 0.0) == {b"ab", b"bc", b"ca"}


def test_constant_windows_fail_positive_threshold():
    assert file_presence_grams(b"aaaaab", 4, 0.5) == {b"aaab"}


def test_short_file_contributes_nothing():
    assert file_presence_grams(b"abc", 4, 0.0) == set()


def test_length_one_is_rejected():
    with pytest.raises(ValueError):
        file_presence_grams(b"abc", 1, 0.0)


def test_presence_counts_files_not_occurrences():
    th = EntropyThresholds.fixed({4: 0.0})
    files = [b"abcd" * 50, b"abcdxyzw", b"qqqq"]
    reps = mine_family(files, th, Stage2Config(gamma=0.7), family="f")
    assert reps.per_length[4][b"abcd"].count == 2
    assert b"xyzw" not in reps.per_length[4]


def test_min_presence_floor():
    assert min_presence(0.1, 5) == 1
    assert min_presence(0.1, 50) == 5
    assert min_presence(0.3, 10) == 3


def test_matches_naive_enumeration_on_random_family():
    rng = np.random.default_rng(8)
    files = [random_bytes(rng, int(rng.integers(10, 300)), alphabet=6) for _ in range(15)]
    th = EntropyThresholds.fixed({4: 1.5, 8: 2.0})
    reps = mine_family(files, th, Stage2Config(gamma=0.2), family="f")
    for n in (4, 8):
        want = naive_mine(files, n, th[n], entropy_of, min_presence(0.2, 15))
        assert {g: r.count for g, r in reps.per_length[n].items()} == want


def test_entropy_recorded_with_each_representative():
    th = EntropyThresholds.fixed({4: 0.0})
    reps = mine_family([b"aabc", b"aabc"], th, family="f")
    assert reps.per_length[4][b"aabc"].entropy == entropy_of(b"aabc")


def test_memory_cap_raises_with_advice():
    rng = np.random.default_rng(0)
    files = [random_bytes(rng, 2000) for _ in range(3)]
    with pytest.raises(MiningError, match="memory cap"):
        mine_family(files, EntropyThresholds.fixed({8: 0.0}),
                    Stage2Config(memory_cap_bytes=1000), family="f")


def test_empty_family_rejected():
    with pytest.raises(MiningError):
        mine_family([], EntropyThresholds.fixed({4: 0.0}))


def test_one_gram_histogram():
    data = random_bytes(np.random.default_rng(1), 5000)
    h = one_gram_histogram(data)
    assert np.array_equal(h.counts, naive_onegram(data))
    assert h.counts.sum() == len(data)
    assert one_gram_histogram(b"").counts.sum() == 0


def test_dump_is_sorted_and_deterministic():
    th = EntropyThresholds.fixed({4: 0.0})
    files = [b"zyxwvu", b"abcdzyxw"]
    a = mine_family(files, th, family="f").dump_lines()
    b = mine_family(list(reversed(files)), th, family="f").dump_lines()
    assert a == b
    assert a == sorted(a)
