"""Randomized tree ensemble, importance pruning and per-class sigmoid calibration.

Individual trees are grown with scikit-learn's CART builder (Gini, per-node
feature subsampling). The ensemble around them is ours: bootstrap draws and
tree seeds are derived from ``seed + tree_index`` so results do not depend
on how trees are scheduled, trees are frozen into flat arrays, and the binary
encoding in :func:`TrainedForest.to_bytes` is the on-disk format.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import BundleError, CalibrationError, TrainingError
from .featurizer import resolve_jobs

FOREST_MAGIC = b"DFRS"
FOREST_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 3000
    feature_cap_C: int = 5000
    seed: int = 0
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.feature_cap_C < 1:
            raise ValueError("feature_cap_C must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def split_features(self, dim: int) -> int:
        if self.features_per_split is not None:
            return max(1, min(dim, self.features_per_split))
        return max(1, min(dim, math.ceil(math.sqrt(dim))))


@dataclass(frozen=True)
class Tree:
    """Flat tree; ``feature[i] == -1`` marks a leaf, ``counts[i]`` its class counts."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active[r] = self.feature[node[r]] >= 0
        return node

    def leaf_fractions(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.apply(X)].astype(np.float64)
        return c / c.sum(axis=1, keepdims=True)

    @classmethod
    def from_sklearn(cls, est: DecisionTreeClassifier, n_classes: int) -> "Tree":
        t = est.tree_
        present = est.classes_.astype(np.int64)
        weights = t.weighted_n_node_samples[:, None]
        raw = np.rint(t.value[:, 0, :] * weights) if np.all(t.value[:, 0, :].sum(1) <= 1 + 1e-9) \
            else np.rint(t.value[:, 0, :])
        counts = np.zeros((t.node_count, n_classes), dtype=np.uint32)
        counts[:, present] = raw.astype(np.uint32)
        leaf = t.children_left < 0
        feature = np.where(leaf, -1, t.feature).astype(np.int32)
        threshold = np.where(leaf, 0.0, t.threshold).astype(np.float64)
        return cls(feature, threshold, t.children_left.astype(np.int32),
                   t.children_right.astype(np.int32), counts)

    def encode(self) -> bytes:
        out = [struct.pack("<I", self.n_nodes)]
        stack = [0]
        while stack:
            i = stack.pop()
            if self.feature[i] < 0:
                out.append(b"\x01" + self.counts[i].astype("<u4").tobytes())
            else:
                out.append(struct.pack("<Bid", 0, int(self.feature[i]), float(self.threshold[i])))
                stack.append(int(self.right[i]))
                stack.append(int(self.left[i]))
        return b"".join(out)

    @classmethod
    def decode(cls, buf: bytes, n_classes: int) -> "Tree":
        (n_nodes,) = struct.unpack_from("<I", buf, 0)
        pos = 4
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.int32)
        right = np.full(n_nodes, -1, dtype=np.int32)
        counts = np.zeros((n_nodes, n_classes), dtype=np.uint32)
        # (parent, is_right_child) for each node still to be read, in pre-order
        pending = [(-1, False)]
        nxt = 0
        while pending:
            parent, is_right = pending.pop()
            if nxt >= n_nodes:
                raise BundleError("tree record has more nodes than declared")
            i = nxt
            nxt += 1
            if parent >= 0:
                (right if is_right else left)[parent] = i
            tag = buf[pos]
            if tag == 1:
                counts[i] = np.frombuffer(buf, dtype="<u4", count=n_classes, offset=pos + 1)
                pos += 1 + 4 * n_classes
            elif tag == 0:
                _, f, thr = struct.unpack_from("<Bid", buf, pos)
                feature[i], threshold[i] = f, thr
                pos += struct.calcsize("<Bid")
                pending.append((i, True))
                pending.append((i, False))
            else:
                raise BundleError(f"bad node tag {tag}")
        if nxt != n_nodes or pos != len(buf):
            raise BundleError("tree record size mismatch")
        return cls(feature, threshold, left, right, counts)


@dataclass(frozen=True)
class TrainedForest:
    trees: tuple[Tree, ...]
    importances: np.ndarray
    n_classes: int

    @property
    def n_features(self) -> int:
        return len(self.importances)

    def predict_proba(self, X) -> np.ndarray:
        """Mean of per-tree leaf class fractions, accumulated in tree order."""
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        proba = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            proba += tree.leaf_fractions(X)
        return proba / len(self.trees)

    def to_bytes(self) -> bytes:
        head = FOREST_MAGIC + struct.pack("<IIII", FOREST_VERSION, len(self.trees),
                                          self.n_classes, self.n_features)
        parts = [head, self.importances.astype("<f8").tobytes()]
        for t in self.trees:
            rec = t.encode()
            parts.append(struct.pack("<I", len(rec)))
            parts.append(rec)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "TrainedForest":
        if buf[:4] != FOREST_MAGIC:
            raise BundleError("not a forest file")
        try:
            version, n_trees, n_classes, n_features = struct.unpack_from("<IIII", buf, 4)
            if version != FOREST_VERSION:
                raise BundleError(f"unsupported forest format version {version}")
            pos = 20
            imp = np.frombuffer(buf, dtype="<f8", count=n_features, offset=pos).astype(np.float64)
            pos += 8 * n_features
            trees = []
            for _ in range(n_trees):
                (size,) = struct.unpack_from("<I", buf, pos)
                pos += 4
                if pos + size > len(buf):
                    raise BundleError("truncated tree record")
                trees.append(Tree.decode(buf[pos:pos + size], n_classes))
                pos += size
        except (struct.error, ValueError, IndexError) as exc:
            raise BundleError(f"corrupted forest: {exc}") from exc
        if pos != len(buf):
            raise BundleError("trailing bytes after forest")
        return cls(tuple(trees), imp, n_classes)


def _grow(X32, y, n_classes, cfg: ForestConfig, i: int):
    seed = (cfg.seed + i) % 2**32
    rng = np.random.default_rng(cfg.seed + i)
    n = len(y)
    idx = rng.integers(0, n, size=n)
    est = DecisionTreeClassifier(criterion="gini", max_depth=cfg.max_depth,
                                 min_samples_leaf=cfg.min_leaf,
                                 max_features=cfg.split_features(X32.shape[1]),
                                 random_state=seed)
    est.fit(X32[idx], y[idx])
    in_bag = np.zeros(n, dtype=bool)
    in_bag[idx] = True
    return Tree.from_sklearn(est, n_classes), est.feature_importances_, in_bag


def _fit_trees(X, y, n_classes, cfg: ForestConfig, n_jobs):
    X32 = np.asarray(X, dtype=np.float32)
    grow = lambda i: _grow(X32, y, n_classes, cfg, i)  # noqa: E731
    n_jobs = resolve_jobs(n_jobs)
    if n_jobs == 1:
        results = [grow(i) for i in range(cfg.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(grow, range(cfg.n_trees)))
    trees = tuple(r[0] for r in results)
    imp = np.zeros(X32.shape[1])
    for r in results:
        imp += r[1]
    total = imp.sum()
    imp = imp / total if total > 0 else np.full(len(imp), 1.0 / len(imp))
    return TrainedForest(trees, imp, n_classes), [r[2] for r in results]


class RandomForest(ClassifierMixin, BaseEstimator):
    """Bootstrap ensemble of Gini trees with mean-impurity-decrease importances.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    seed : int
        Tree ``i`` draws its bootstrap sample and split features from ``seed + i``.
    max_depth, min_leaf, features_per_split
        Tree growth limits; ``features_per_split=None`` means ``ceil(sqrt(dim))``.
    n_jobs : int or None
        Threads used to grow trees. Has no effect on the fitted model.
    oob_score : bool
        Also compute out-of-bag class fractions and accuracy.
    """

    def __init__(self, n_trees=3000, seed=0, max_depth=None, min_leaf=1,
                 features_per_split=None, n_jobs=1, oob_score=False):
        self.n_trees = n_trees
        self.seed = seed
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.features_per_split = features_per_split
        self.n_jobs = n_jobs
        self.oob_score = oob_score

    def _config(self) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, seed=self.seed, max_depth=self.max_depth,
                            min_leaf=self.min_leaf, features_per_split=self.features_per_split)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise TrainingError("need at least two classes to train")
        self.n_features_in_ = X.shape[1]
        self.forest_, in_bag = _fit_trees(X, codes, len(self.classes_), self._config(),
                                          self.n_jobs)
        self.feature_importances_ = self.forest_.importances
        if self.oob_score:
            X32 = X.astype(np.float32)
            votes = np.zeros((len(X), len(self.classes_)))
            for tree, bag in zip(self.forest_.trees, in_bag):
                out = ~bag
                if out.any():
                    votes[out] += tree.leaf_fractions(X32[out])
            seen = votes.sum(axis=1) > 0
            self.oob_decision_function_ = votes
            self.oob_score_ = float(np.mean(votes[seen].argmax(axis=1) == codes[seen]))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        X = check_array(X, dtype=np.float64)
        return self.forest_.predict_proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


def train_initial(X, y, cfg: ForestConfig, n_jobs: int | None = 1) -> TrainedForest:
    """Fit the full-width forest. ``y`` holds integer class codes ``0..k-1``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise TrainingError("need at least two classes to train")
    n_classes = int(y.max()) + 1
    return _fit_trees(X, y, n_classes, cfg, n_jobs)[0]


def top_columns(importances: np.ndarray, cap: int) -> np.ndarray:
    """Indices of the ``cap`` most important columns, returned in ascending column order.

    Equal importances favour the lower column index.
    """
    order = np.lexsort((np.arange(len(importances)), -importances))
    return np.sort(order[:cap])


def prune_and_retrain(forest: TrainedForest, X, y, cfg: ForestConfig,
                      feature_names: Sequence | None = None, n_jobs: int | None = 1):
    """Keep the ``feature_cap_C`` most important columns and grow a new forest on them.

    Returns ``(kept, forest)`` where ``kept`` is the surviving column indices,
    or the matching entries of ``feature_names`` when given.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != forest.n_features:
        raise ValueError("matrix width does not match the forest")
    keep = top_columns(forest.importances, min(cfg.feature_cap_C, X.shape[1]))
    new = train_initial(X[:, keep], y, cfg, n_jobs=n_jobs)
    if feature_names is not None:
        return [feature_names[j] for j in keep], new
    return keep, new


def _platt_fit(f: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Fit ``p = 1 / (1 + exp(a*f + b))`` to 0/1 targets with Platt's smoothed labels."""
    n_pos = float(target.sum())
    n_neg = float(len(target) - n_pos)
    t = np.where(target > 0, (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2))

    def loss(ab):
        z = ab[0] * f + ab[1]
        # -[t log p + (1-t) log(1-p)] with p = sigmoid(-z)
        val = np.sum(np.logaddexp(0, z) - (1 - t) * z)
        p = 0.5 * (1 - np.tanh(0.5 * z))
        dz = t - p
        return val, np.array([np.dot(dz, f), dz.sum()])

    x0 = np.array([0.0, math.log((n_neg + 1) / (n_pos + 1))])
    res = minimize(loss, x0, jac=True, method="BFGS")
    return float(res.x[0]), float(res.x[1])


@dataclass(frozen=True)
class Calibrator:
    method: str = "none"
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.method not in ("none", "sigmoid"):
            raise ValueError(f"unknown calibration method {self.method!r}")

    def transform(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if self.method == "none":
            return raw / raw.sum(axis=1, keepdims=True)
        z = raw * self.a + self.b
        p = 0.5 * (1 - np.tanh(0.5 * z))
        return p / p.sum(axis=1, keepdims=True)

    def to_text(self, families: Sequence[str] | None = None) -> str:
        lines = [f"method\t{self.method}"]
        for j in range(len(self.a)):
            name = families[j] if families is not None else str(j)
            lines.append(f"{j}\t{name}\t{self.a[j]:.17g}\t{self.b[j]:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Calibrator":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith("method\t"):
            raise BundleError("calibrator file lacks a method line")
        method = lines[0].split("\t", 1)[1]
        rows = [line.split("\t") for line in lines[1:]]
        a = np.array([float(r[2]) for r in rows])
        b = np.array([float(r[3]) for r in rows])
        return cls(method, a, b)


def fold_assignment(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Stratified fold index per sample: each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    n_classes = int(y.max()) + 1
    short = [c for c in range(n_classes) if np.sum(y == c) < folds]
    if short:
        raise CalibrationError(
            f"classes {short} have fewer samples than the {folds} folds; use fewer folds")
    rng = np.random.default_rng(seed)
    out = np.empty(len(y), dtype=np.int64)
    for c in range(n_classes):
        members = np.flatnonzero(y == c)
        out[members[rng.permutation(len(members))]] = np.arange(len(members)) % folds
    return out


def out_of_fold_proba(X, y, cfg: ForestConfig, folds: int, n_jobs: int | None = 1) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    assign = fold_assignment(y, folds, cfg.seed)
    raw = np.zeros((len(y), n_classes))
    for k in range(folds):
        held = assign == k
        fit = ~held
        if len(np.unique(y[fit])) != n_classes:
            raise CalibrationError(f"fold {k} training side misses a class; use fewer folds")
        sub_cfg = ForestConfig(n_trees=cfg.n_trees, feature_cap_C=cfg.feature_cap_C,
                               seed=cfg.seed + 1_000_003 * (k + 1), max_depth=cfg.max_depth,
                               min_leaf=cfg.min_leaf, features_per_split=cfg.features_per_split)
        forest = _fit_trees(X[fit], y[fit], n_classes, sub_cfg, n_jobs)[0]
        raw[held] = forest.predict_proba(X[held])
    return raw


def fit_calibrator(cfg: ForestConfig, X, y, folds: int = 3, method: str = "sigmoid",
                   n_jobs: int | None = 1) -> Calibrator:
    """Per-class sigmoid fitted on out-of-fold forest class fractions."""
    if method == "none":
        return Calibrator("none")
    if folds < 2:
        raise CalibrationError("calibration needs at least 2 folds")
    y = np.asarray(y, dtype=np.int64)
    raw = out_of_fold_proba(X, y, cfg, folds, n_jobs)
    return calibrator_from_scores(raw, y)


def calibrator_from_scores(raw: np.ndarray, y: np.ndarray) -> Calibrator:
    n_classes = raw.shape[1]
    params = [_platt_fit(raw[:, j], (y == j).astype(np.float64)) for j in range(n_classes)]
    return Calibrator("sigmoid", np.array([p[0] for p in params]),
                      np.array([p[1] for p in params]))
