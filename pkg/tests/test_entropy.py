import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daemon_ngram.entropy import (EntropyThresholds, Stage1Config, compute_thresholds,
                                  entropy_of, window_entropies)
from daemon_ngram.exceptions import ThresholdError
from oracles import direct_entropy, random_bytes, stage1_oracle


def test_single_symbol_is_zero():
    assert entropy_of(b"\x00" * 8) == 0.0


def test_four_distinct_symbols_is_two_bits():
    assert entropy_of(bytes([0, 1, 2, 3])) == 2.0


def test_three_to_one_split():
    expected = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert expected == pytest.approx(0.8112781244591328, abs=1e-15)
    assert entropy_of(bytes([0, 0, 0, 1])) == pytest.approx(expected, abs=1e-12)


def test_empty_gram_is_a_domain_error():
    with pytest.raises(ValueError):
        entropy_of(b"")


@given(st.binary(min_size=1, max_size=64))
def test_matches_direct_definition_and_bounds(gram):
    h = entropy_of(gram)
    assert h == pytest.approx(direct_entropy(gram), abs=1e-12)
    assert 0.0 <= h <= min(8.0, math.log2(len(gram))) + 1e-12


@given(st.binary(min_size=1, max_size=40), st.randoms(use_true_random=False))
def test_permutation_invariant(gram, rnd):
    shuffled = bytearray(gram)
    rnd.shuffle(shuffled)
    assert entropy_of(bytes(shuffled)) == pytest.approx(entropy_of(gram), abs=1e-12)


@given(st.binary(min_size=1, max_size=16), st.integers(1, 6))
def test_repetition_invariant(gram, m):
    assert entropy_of(gram * m) == pytest.approx(entropy_of(gram), abs=1e-12)


def test_random_32_grams_stay_below_five_bits():
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert entropy_of(random_bytes(rng, 32)) <= 5.0


@settings(max_examples=50)
@given(st.binary(min_size=0, max_size=300), st.sampled_from([2, 3, 4, 8, 16, 32]))
def test_window_entropies_bit_identical_to_scalar(data, n):
    got = window_entropies(data, n)
    assert len(got) == max(0, len(data) - n + 1)
    for i, h in enumerate(got):
        assert h == entropy_of(data[i:i + n])


def test_window_entropies_chunking_is_transparent():
    data = random_bytes(np.random.default_rng(5), 70_000, alphabet=20)
    full = window_entropies(data, 8)
    assert full[40_000] == entropy_of(data[40_000:40_008])
    assert full[-1] == entropy_of(data[-8:])


def test_config_invariants():
    with pytest.raises(ValueError):
        Stage1Config(lengths=(8, 4))
    with pytest.raises(ValueError):
        Stage1Config(lengths=(1, 4), factors={1: 1.0, 4: 1.0})
    with pytest.raises(ValueError):
        Stage1Config(alpha=0.0)
    with pytest.raises(ValueError):
        Stage1Config(beta=0)
    with pytest.raises(ValueError):
        Stage1Config(lengths=(4,), factors={4: 0.9})


def test_all_zero_corpus_has_zero_thresholds():
    files = [b"\x00" * 100] * 5
    th = compute_thresholds(files, Stage1Config(alpha=1.0, beta=8))
    for n in (4, 8, 16, 32):
        assert th.per_length[n].avg_entropy == 0.0
        assert th[n] == 0.0


def test_thresholds_deterministic_and_product_exact():
    rng = np.random.default_rng(1)
    files = [random_bytes(rng, 500, alphabet=30) for _ in range(20)]
    cfg = Stage1Config(alpha=0.3, beta=16, seed=99)
    a = compute_thresholds(files, cfg)
    b = compute_thresholds(files, cfg)
    assert a == b
    for n, t in a.per_length.items():
        assert t.threshold == t.avg_entropy * t.factor
        assert 0.0 <= t.avg_entropy <= 8.0


def test_ten_file_corpus_matches_oracle_reimplementation():
    rng = np.random.default_rng(2024)
    files = [random_bytes(rng, int(rng.integers(20, 400)), alphabet=int(rng.integers(2, 60)))
             for _ in range(10)]
    factors = {4: 1.05, 8: 1.05, 16: 1.15, 32: 1.15}
    cfg = Stage1Config(alpha=0.5, beta=4, factors=factors, seed=7)
    got = compute_thresholds(files, cfg)
    want = stage1_oracle(files, (4, 8, 16, 32), 0.5, 4, factors, 7)
    assert got.sampled_file_count == 5
    for n, (avg, t) in want.items():
        assert got.per_length[n].avg_entropy == pytest.approx(avg, abs=1e-12)
        assert got[n] == pytest.approx(t, abs=1e-12)


def test_short_files_are_skipped():
    files = [b"ab", bytes(range(64))]
    th = compute_thresholds(files, Stage1Config(lengths=(4,), factors={4: 1.0}, alpha=1.0,
                                                beta=10))
    assert th[4] == 2.0


def test_no_long_enough_file_names_length():
    with pytest.raises(ThresholdError, match="32"):
        compute_thresholds([bytes(range(20))] * 3, Stage1Config(alpha=1.0))


def test_raising_factor_never_admits_more_grams():
    rng = np.random.default_rng(3)
    files = [random_bytes(rng, 300, alphabet=12) for _ in range(8)]
    lo = compute_thresholds(files, Stage1Config(lengths=(8,), factors={8: 1.0}, alpha=1.0))
    hi = compute_thresholds(files, Stage1Config(lengths=(8,), factors={8: 1.1}, alpha=1.0))
    ent = np.concatenate([window_entropies(f, 8) for f in files])
    assert np.sum(ent >= hi[8]) <= np.sum(ent >= lo[8])


def test_text_round_trip():
    rng = np.random.default_rng(4)
    files = [random_bytes(rng, 200) for _ in range(6)]
    th = compute_thresholds(files, Stage1Config(alpha=1.0, beta=5))
    back = EntropyThresholds.from_text(th.to_text(), th.config_digest, th.sampled_file_count)
    assert back == th
    assert th.to_text().splitlines()[0].count("\t") == 3
