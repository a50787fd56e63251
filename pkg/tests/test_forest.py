import numpy as np
import pytest
from sklearn.ensemble import RandomForestClassifier

from daemon_ngram.bundle import ModelBundle
from daemon_ngram.exceptions import BundleError, CalibrationError, TrainingError
from daemon_ngram.forest import (Calibrator, ForestConfig, RandomForest, TrainedForest,
                                 fit_calibrator, prune_and_retrain, top_columns, train_initial)


def separable(n=60, noise_cols=5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.integers(0, 2, size=(n, noise_cols + 1)).astype(float)
    X[:, 2] = y
    return X, y


def test_separable_feature_dominates():
    X, y = separable()
    f = train_initial(X, y, ForestConfig(n_trees=50, seed=3))
    assert np.array_equal(f.predict_proba(X).argmax(axis=1), y)
    assert f.importances[2] > 0.9
    assert f.importances.sum() == pytest.approx(1.0, abs=1e-9)


def test_same_seed_same_forest():
    X, y = separable(seed=1)
    a = train_initial(X, y, ForestConfig(n_trees=20, seed=9))
    b = train_initial(X, y, ForestConfig(n_trees=20, seed=9))
    assert a.to_bytes() == b.to_bytes()
    assert np.array_equal(a.importances, b.importances)


def test_thread_count_does_not_change_model():
    X, y = separable(seed=2)
    a = train_initial(X, y, ForestConfig(n_trees=16, seed=4), n_jobs=1)
    b = train_initial(X, y, ForestConfig(n_trees=16, seed=4), n_jobs=4)
    assert a.to_bytes() == b.to_bytes()


def test_shuffled_labels_give_chance_oob_accuracy():
    rng = np.random.default_rng(0)
    k = 4
    X = rng.normal(size=(400, 10))
    y = rng.integers(0, k, size=400)
    rf = RandomForest(n_trees=100, seed=0, oob_score=True).fit(X, y)
    assert abs(rf.oob_score_ - 1 / k) < 0.1


def test_flat_trees_match_sklearn_leaf_fractions():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 5, size=(80, 6)).astype(float)
    y = (X[:, 0] + X[:, 1] > 4).astype(int)
    f = train_initial(X, y, ForestConfig(n_trees=10, seed=0))
    p = f.predict_proba(X)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.mean(p.argmax(axis=1) == y) > 0.95


def test_single_class_rejected():
    with pytest.raises(TrainingError):
        train_initial(np.zeros((5, 2)), np.zeros(5, dtype=int), ForestConfig(n_trees=2))


def test_top_columns_ties_favour_lower_index():
    imp = np.array([0.1, 0.3, 0.3, 0.2, 0.1])
    assert top_columns(imp, 2).tolist() == [1, 2]
    assert top_columns(imp, 4).tolist() == [0, 1, 2, 3]


def test_pruning_cap_equal_to_dim_is_noop():
    X, y = separable()
    cfg = ForestConfig(n_trees=10, feature_cap_C=X.shape[1], seed=0)
    keep, f = prune_and_retrain(train_initial(X, y, cfg), X, y, cfg)
    assert keep.tolist() == list(range(X.shape[1]))
    assert f.importances.sum() == pytest.approx(1.0)


def test_pruning_to_one_keeps_separator():
    X, y = separable()
    cfg = ForestConfig(n_trees=20, feature_cap_C=1, seed=0)
    names = [f"c{j}" for j in range(X.shape[1])]
    keep, f = prune_and_retrain(train_initial(X, y, cfg), X, y, cfg, feature_names=names)
    assert keep == ["c2"]
    assert f.n_features == 1


def test_sklearn_reference_importance_agrees_on_separator():
    X, y = separable(seed=4)
    ours = train_initial(X, y, ForestConfig(n_trees=100, seed=0)).importances
    ref = RandomForestClassifier(n_estimators=100, random_state=0).fit(X, y).feature_importances_
    assert ours.argmax() == ref.argmax() == 2


def test_calibration_none_is_pass_through():
    raw = np.array([[0.2, 0.8], [1.0, 0.0]])
    assert np.array_equal(Calibrator("none").transform(raw), raw)


def test_sigmoid_calibration_preserves_argmax_on_separable_data():
    X, y = separable(n=90)
    cfg = ForestConfig(n_trees=30, seed=2)
    forest = train_initial(X, y, cfg)
    cal = fit_calibrator(cfg, X, y, folds=3)
    p = cal.transform(forest.predict_proba(X))
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.array_equal(p.argmax(axis=1), y)
    back = Calibrator.from_text(cal.to_text(["a", "b"]))
    assert np.array_equal(back.a, cal.a) and np.array_equal(back.b, cal.b)


def test_calibration_with_too_few_members_advises_fewer_folds():
    X = np.arange(8, dtype=float).reshape(-1, 1)
    y = np.array([0, 0, 0, 0, 0, 0, 1, 1])
    with pytest.raises(CalibrationError, match="fewer folds"):
        fit_calibrator(ForestConfig(n_trees=3), X, y, folds=3)


def test_forest_serialization_round_trip():
    X, y = separable()
    f = train_initial(X, y, ForestConfig(n_trees=5, seed=0))
    g = TrainedForest.from_bytes(f.to_bytes())
    assert np.array_equal(f.predict_proba(X), g.predict_proba(X))
    with pytest.raises(BundleError):
        TrainedForest.from_bytes(b"XXXX" + f.to_bytes()[4:])


def test_bundle_round_trip_and_corruption(small_model, small_corpus, tmp_path):
    b = small_model.bundle_
    b.save(tmp_path / "m")
    loaded = ModelBundle.load(tmp_path / "m")
    files = [s.bytes for s in small_corpus]
    assert np.array_equal(loaded.predict_proba(files), b.predict_proba(files))
    target = tmp_path / "m" / "features"
    target.write_bytes(target.read_bytes() + b"\n")
    with pytest.raises(BundleError):
        ModelBundle.load(tmp_path / "m")


def test_predict_simplex_and_empty_file(small_model, small_corpus):
    b = small_model.bundle_
    p, fam = b.predict(b"")
    assert p.sum() == pytest.approx(1.0) and fam in b.families
    s = small_corpus.samples[0]
    p, fam = b.predict(s.bytes)
    assert fam == s.family
    assert p.max() >= 0.9
