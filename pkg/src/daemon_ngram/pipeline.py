"""scikit-learn style estimators for the five-stage mining and classification pipeline."""

from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bundle import ModelBundle
from .config import RunConfig
from .entropy import PAPER_FACTORS, PAPER_LENGTHS, Stage1Config, compute_thresholds
from .exceptions import TrainingError
from .featurizer import _map, build_automaton, feature_matrix
from .forest import ForestConfig, fit_calibrator, prune_and_retrain, train_initial
from .miner import Stage2Config, mine_family
from .selector import Stage3Config, select_pairwise

STAGES = (
    ("stage1", "Stage 1: entropy threshold computation"),
    ("stage2", "Stage 2: family representative N-gram extraction"),
    ("stage3", "Stage 3: pairwise-separating feature selection"),
    ("stage4", "Stage 4: feature-vector computation"),
    ("stage5", "Stage 5: random forest model generation"),
)


def check_byte_samples(X) -> list[bytes]:
    """Validate a sequence of raw files and return it as a list of ``bytes``."""
    if isinstance(X, (bytes, bytearray, str)):
        raise TypeError("X must be a sequence of byte strings, not a single string")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, bytes):
            out.append(item)
        elif isinstance(item, (bytearray, memoryview)):
            out.append(bytes(item))
        elif isinstance(item, np.ndarray) and item.dtype == np.uint8 and item.ndim == 1:
            out.append(item.tobytes())
        else:
            raise TypeError(f"sample {i} has type {type(item).__name__}; expected bytes")
    return out


def check_labels(X: Sequence[bytes], y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError(f"y must be 1-D with {len(X)} labels, got shape {y.shape}")
    return y.astype(str)


@contextmanager
def _timed(timings: dict, key: str):
    start = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = key
        raise
    finally:
        timings[key] = timings.get(key, 0.0) + time.perf_counter() - start


def collapse_duplicate_columns(presence: np.ndarray, grams) -> np.ndarray:
    """Column indices that survive merging gram columns identical on ``presence``.

    Each group of identical columns is represented by its longest gram (then
    the smallest bytes); the result is in ascending column order. Identical
    columns would otherwise split importance between them arbitrarily.
    """
    if presence.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    _, inverse = np.unique(presence.astype(bool).T, axis=0, return_inverse=True)
    best: dict[int, int] = {}
    for j, g in enumerate(inverse.ravel().tolist()):
        cur = best.get(g)
        if cur is None or (-len(grams[j]), grams[j]) < (-len(grams[cur]), grams[cur]):
            best[g] = j
    return np.array(sorted(best.values()), dtype=np.int64)


def format_timings(timings: dict) -> str:
    lines = [f"{'stage':<52}{'seconds':>10}"]
    for key, label in STAGES:
        lines.append(f"{label:<52}{timings.get(key, 0.0):>10.3f}")
    lines.append(f"{'total':<52}{sum(timings.get(k, 0.0) for k, _ in STAGES):>10.3f}")
    return "\n".join(lines)


class NGramFeatureMiner(TransformerMixin, BaseEstimator):
    """Stages 1-4: mine tagged N-gram features and turn files into presence/count rows.

    ``fit`` learns entropy thresholds, per-family representatives and the
    pairwise-selected features. ``transform`` maps raw files to rows of
    ``len(features_) + 256`` values: binary presence of each selected gram in
    canonical (length, bytes) order followed by the 256 byte counts.
    """

    def __init__(self, lengths=PAPER_LENGTHS, alpha=0.1, beta=256, factors=None, gamma=0.1,
                 memory_cap_bytes=None, budget=50_000, seed=0, n_jobs=1):
        self.lengths = lengths
        self.alpha = alpha
        self.beta = beta
        self.factors = factors
        self.gamma = gamma
        self.memory_cap_bytes = memory_cap_bytes
        self.budget = budget
        self.seed = seed
        self.n_jobs = n_jobs

    def _stage1_config(self) -> Stage1Config:
        factors = self.factors
        if factors is None:
            factors = {n: PAPER_FACTORS.get(n, 1.0) for n in self.lengths}
        return Stage1Config(tuple(self.lengths), self.alpha, self.beta, factors, self.seed)

    def fit(self, X, y):
        X = check_byte_samples(X)
        y = check_labels(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise TrainingError("need >= 2 families to mine pairwise features")
        self.timings_ = {}
        groups = {f: [x for x, lab in zip(X, y) if lab == f] for f in self.classes_.tolist()}

        with _timed(self.timings_, "stage1"):
            self.thresholds_ = compute_thresholds(X, self._stage1_config())
        with _timed(self.timings_, "stage2"):
            s2 = Stage2Config(self.gamma, self.memory_cap_bytes)
            mined = _map(lambda f: mine_family(groups[f], self.thresholds_, s2, family=f),
                         list(groups), self.n_jobs)
            self.representatives_ = {r.family: r for r in mined}
        with _timed(self.timings_, "stage3"):
            self.features_ = select_pairwise(self.representatives_, groups,
                                             Stage3Config(self.budget), n_jobs=self.n_jobs)
            if self.features_:
                self.pattern_set_, self.automaton_ = build_automaton(self.features_)
            else:
                self.pattern_set_, self.automaton_ = None, None
        self.n_features_out_ = len(self.features_) + 256
        return self

    def transform(self, X):
        check_is_fitted(self, "features_")
        return feature_matrix(check_byte_samples(X), self.automaton_, n_jobs=self.n_jobs)

    def fit_transform(self, X, y=None, **fit_params):
        X = check_byte_samples(X)
        self.fit(X, y)
        with _timed(self.timings_, "stage4"):
            return self.transform(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "features_")
        names = [f"gram:{f.gram.hex()}" for f in self.features_]
        return np.array(names + [f"onegram:{v}" for v in range(256)], dtype=object)


class DaemonClassifier(ClassifierMixin, BaseEstimator):
    """End-to-end file-family classifier over raw bytes.

    ``fit(X, y)`` takes a sequence of byte strings and their family labels
    and runs all five stages; the trained model is available as
    ``bundle_`` (a :class:`ModelBundle`) and per-stage wall-clock seconds as
    ``timings_``. Defaults follow the published configuration (lengths
    4/8/16/32, alpha 0.1, beta 256, gamma 0.1, B 50,000, 3,000 trees,
    C 5,000); scale them down for small corpora.
    """

    def __init__(self, lengths=PAPER_LENGTHS, alpha=0.1, beta=256, factors=None, gamma=0.1,
                 memory_cap_bytes=None, budget=50_000, n_trees=3000, feature_cap=5000,
                 max_depth=None, min_leaf=1, features_per_split=None, calibration="sigmoid",
                 calibration_folds=3, seed=0, n_jobs=1):
        self.lengths = lengths
        self.alpha = alpha
        self.beta = beta
        self.factors = factors
        self.gamma = gamma
        self.memory_cap_bytes = memory_cap_bytes
        self.budget = budget
        self.n_trees = n_trees
        self.feature_cap = feature_cap
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.features_per_split = features_per_split
        self.calibration = calibration
        self.calibration_folds = calibration_folds
        self.seed = seed
        self.n_jobs = n_jobs

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "DaemonClassifier":
        return cls(lengths=cfg.lengths, alpha=cfg.alpha, beta=cfg.beta, factors=dict(cfg.factors),
                   gamma=cfg.gamma, memory_cap_bytes=cfg.memory_cap_bytes, budget=cfg.budget,
                   n_trees=cfg.n_trees, feature_cap=cfg.feature_cap, max_depth=cfg.max_depth,
                   min_leaf=cfg.min_leaf, features_per_split=cfg.features_per_split,
                   calibration=cfg.calibration, calibration_folds=cfg.calibration_folds,
                   seed=cfg.seed, n_jobs=cfg.threads or None)

    def run_config(self) -> RunConfig:
        factors = self.factors
        if factors is None:
            factors = {n: PAPER_FACTORS.get(n, 1.0) for n in self.lengths}
        return RunConfig(tuple(self.lengths), self.alpha, self.beta, dict(factors), self.gamma,
                         self.memory_cap_bytes, self.budget, self.n_trees, self.feature_cap,
                         self.max_depth, self.min_leaf, self.features_per_split,
                         self.calibration, self.calibration_folds, self.seed,
                         self.n_jobs or 0)

    def fit(self, X, y, provenance: dict | None = None):
        X = check_byte_samples(X)
        y = check_labels(X, y)
        cfg = self.run_config()
        self.miner_ = NGramFeatureMiner(self.lengths, self.alpha, self.beta, cfg.factors,
                                        self.gamma, self.memory_cap_bytes, self.budget,
                                        self.seed, self.n_jobs)
        matrix = self.miner_.fit_transform(X, y)
        self.timings_ = self.miner_.timings_
        self.classes_ = self.miner_.classes_
        codes = np.searchsorted(self.classes_, y)
        n_grams = len(self.miner_.features_)

        with _timed(self.timings_, "stage5"):
            fcfg: ForestConfig = cfg.forest()
            grams = [f.gram for f in self.miner_.features_]
            distinct = collapse_duplicate_columns(matrix[:, :n_grams], grams)
            columns = np.concatenate([distinct, np.arange(n_grams, n_grams + 256)])
            reduced = matrix[:, columns]
            initial = train_initial(reduced, codes, fcfg, n_jobs=self.n_jobs)
            keep, final = prune_and_retrain(initial, reduced, codes, fcfg, n_jobs=self.n_jobs)
            calibrator = fit_calibrator(fcfg, reduced[:, keep], codes, self.calibration_folds,
                                        method=self.calibration, n_jobs=self.n_jobs)
        self.initial_forest_ = initial
        self.kept_columns_ = columns[keep]
        features = [self.miner_.features_[j] for j in self.kept_columns_ if j < n_grams]
        onegrams = tuple(int(j - n_grams) for j in self.kept_columns_ if j >= n_grams)
        prov = {"n_train_samples": len(X), "n_selected_grams": n_grams,
                "n_distinct_gram_columns": len(distinct)}
        prov.update(provenance or {})
        self.bundle_ = ModelBundle(tuple(self.classes_.tolist()), self.miner_.thresholds_,
                                   features, onegrams, final, calibrator, cfg, prov)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "bundle_")
        return self.bundle_.predict_proba(check_byte_samples(X), n_jobs=self.n_jobs)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
