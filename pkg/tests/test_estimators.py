import numpy as np
import pytest
from sklearn.base import clone

from daemon_ngram.pipeline import (DaemonClassifier, NGramFeatureMiner, check_byte_samples,
                                   collapse_duplicate_columns)
from conftest import SMALL_PARAMS


def test_get_params_and_clone():
    clf = DaemonClassifier(n_trees=7, budget=12)
    params = clf.get_params()
    assert params["n_trees"] == 7 and params["budget"] == 12
    twin = clone(clf)
    assert twin.get_params() == params and twin is not clf
    clf.set_params(seed=5)
    assert clf.seed == 5


def test_input_validation():
    with pytest.raises(TypeError):
        check_byte_samples(b"abc")
    with pytest.raises(TypeError):
        check_byte_samples([b"ok", 3])
    assert check_byte_samples([bytearray(b"a"), np.array([1, 2], dtype=np.uint8)]) == [b"a",
                                                                                         b"\x01\x02"]
    with pytest.raises(ValueError):
        NGramFeatureMiner().fit([b"a", b"b"], ["x"])


def test_miner_transform_shape_and_names(small_corpus):
    X = [s.bytes for s in small_corpus]
    y = [s.family for s in small_corpus]
    m = NGramFeatureMiner(factors=SMALL_PARAMS["factors"], alpha=0.5, beta=64, budget=30)
    Z = m.fit_transform(X, y)
    names = m.get_feature_names_out()
    assert Z.shape == (len(X), len(m.features_) + 256) == (len(X), len(names))
    assert np.array_equal(Z, m.transform(X))
    assert set(m.timings_) == {"stage1", "stage2", "stage3", "stage4"}


def test_classifier_predicts_training_families(small_model, small_corpus):
    X = [s.bytes for s in small_corpus]
    pred = small_model.predict(X)
    assert np.mean(pred == np.array([s.family for s in small_corpus])) == 1.0
    assert small_model.score(X, [s.family for s in small_corpus]) == 1.0


def test_classifier_is_deterministic(small_corpus, small_model):
    clf = DaemonClassifier(**SMALL_PARAMS, n_jobs=3)
    clf.fit([s.bytes for s in small_corpus], [s.family for s in small_corpus])
    a, b = clf.bundle_.file_contents(), small_model.bundle_.file_contents()
    assert a == b


def test_collapse_keeps_longest_duplicate():
    presence = np.array([[1, 1, 0], [0, 0, 1]], dtype=bool)
    assert collapse_duplicate_columns(presence, [b"ab", b"abcd", b"xy"]).tolist() == [1, 2]
