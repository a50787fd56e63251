import os

import numpy as np
import pytest

from daemon_ngram.corpus import load_corpus
from daemon_ngram.entropy import EntropyThresholds
from daemon_ngram.exceptions import SynthSpecError
from daemon_ngram.miner import mine_family
from daemon_ngram.selector import PairSplit, info_gain
from daemon_ngram.synthgen import (FamilySpec, Signature, SynthSpec, generate,
                                   injection_count, read_ground_truth)


def two_family_spec(seed=0):
    return SynthSpec((FamilySpec("x", 5, (Signature(bytes(range(10, 18)), 1.0),)),
                      FamilySpec("y", 5, (Signature(bytes(range(40, 48)), 1.0),))),
                     file_size_bytes=256, seed=seed)


def test_probability_one_signatures_are_exclusive(tmp_path):
    manifest = generate(two_family_spec(), tmp_path)
    corpus = load_corpus(tmp_path, manifest)
    sig = {"x": bytes(range(10, 18)), "y": bytes(range(40, 48))}
    for s in corpus:
        other = "y" if s.family == "x" else "x"
        assert sig[s.family] in s.bytes
        assert sig[other] not in s.bytes


def test_same_seed_same_bytes(tmp_path):
    spec = SynthSpec.standard(n_families=2, files_per_family=4, file_size_bytes=512, seed=7)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    for root, _, names in os.walk(tmp_path / "a"):
        for n in names:
            p = os.path.join(root, n)
            q = p.replace(str(tmp_path / "a"), str(tmp_path / "b"))
            assert open(p, "rb").read() == open(q, "rb").read()


def test_ground_truth_counts_match_substring_scan(small_corpus_dir, small_corpus):
    root, _ = small_corpus_dir
    for fam, gram, hits in read_ground_truth(os.path.join(root, "ground_truth.tsv")):
        pool = small_corpus.samples if fam == "*" else small_corpus.by_family()[fam]
        assert hits == sum(gram in s.bytes for s in pool)
        if fam != "*":
            assert hits == injection_count(0.8, 12, 0.1)


def test_injection_count_respects_gamma_floor():
    assert injection_count(0.8, 50, 0.1) == 40
    assert injection_count(0.05, 50, 0.1) == 6


def test_decoys_carry_little_pairwise_signal(acceptance_corpus_dir, acceptance_corpus):
    root, _ = acceptance_corpus_dir
    groups = acceptance_corpus.by_family()
    names = sorted(groups)
    for fam, gram, _ in read_ground_truth(os.path.join(root, "ground_truth.tsv")):
        if fam != "*":
            continue
        present = {f: sum(gram in s.bytes for s in groups[f]) for f in names}
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                split = PairSplit((a, b), present[a], present[b], len(groups[a]), len(groups[b]))
                assert info_gain(split) < 0.05


def test_mining_recovers_planted_signatures(acceptance_corpus_dir, acceptance_corpus):
    root, _ = acceptance_corpus_dir
    from daemon_ngram.entropy import Stage1Config, compute_thresholds
    files = [s.bytes for s in acceptance_corpus]
    th = compute_thresholds(files, Stage1Config(factors={4: 1.0, 8: 1.0, 16: 1.0, 32: 1.0}))
    truth = read_ground_truth(os.path.join(root, "ground_truth.tsv"))
    groups = acceptance_corpus.by_family()
    for fam in ("A", "D"):
        reps = mine_family(groups[fam], th, family=fam)
        for f, gram, _ in truth:
            if f == fam:
                assert gram in reps.per_length[len(gram)]


@pytest.mark.parametrize("mutate, msg", [
    (lambda s: SynthSpec(s.families + s.families[:1], s.file_size_bytes), "duplicate"),
    (lambda s: SynthSpec(s.families, 4), "longer"),
    (lambda s: SynthSpec((FamilySpec("x", 5, (Signature(b"\x00" * 8, 1.0),)),)), "entropy"),
    (lambda s: SynthSpec((FamilySpec("x", 5, (Signature(bytes(range(5)), 1.0),)),)), "length"),
])
def test_invalid_specs(mutate, msg):
    with pytest.raises(SynthSpecError, match=msg):
        mutate(two_family_spec()).validate()


def test_json_round_trip():
    spec = SynthSpec.standard(n_families=3, files_per_family=5, seed=2)
    assert SynthSpec.from_json(spec.to_json()) == spec
    short = SynthSpec.from_json('{"n_families": 3, "files_per_family": 5, "seed": 2}')
    assert short == spec


def test_json_random_signature_is_seeded():
    text = ('{"seed": 4, "families": [{"name": "q", "files": 3, '
            '"signatures": [{"random": 8, "probability": 1.0}]}]}')
    a, b = SynthSpec.from_json(text), SynthSpec.from_json(text)
    assert a == b
    assert len(a.families[0].signatures[0].gram) == 8
    assert len(np.unique(np.frombuffer(a.families[0].signatures[0].gram, np.uint8))) == 8
