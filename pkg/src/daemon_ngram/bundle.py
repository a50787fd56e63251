"""Self-contained on-disk model: thresholds, features, forest and calibrator.

A bundle is a directory with five files:

``meta``        ``key=value`` lines: format version, family order, resolved
                config, one-gram columns kept after pruning, file digests.
``thresholds``  ``N \\t avg \\t factor \\t t_N`` per mined length.
``features``    surviving N-gram features, one per line, canonical order.
``forest``      binary tree ensemble (see README for the layout).
``calibrator``  probability calibration parameters.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .automaton import AhoCorasick
from .config import RunConfig
from .entropy import EntropyThresholds
from .exceptions import BundleError
from .featurizer import PatternSet, _map
from .forest import Calibrator, TrainedForest
from .miner import one_gram_counts
from .selector import TaggedFeature, dump_features, parse_features

FORMAT_VERSION = 1
BUNDLE_FILES = ("meta", "thresholds", "features", "forest", "calibrator")


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class ModelBundle:
    families: tuple[str, ...]
    thresholds: EntropyThresholds
    features: list[TaggedFeature]
    onegram_columns: tuple[int, ...]
    forest: TrainedForest
    calibrator: Calibrator
    config: RunConfig
    provenance: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    _compiled: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.features = sorted(self.features, key=TaggedFeature.sort_key)
        if self.forest.n_features != len(self.features) + len(self.onegram_columns):
            raise BundleError("forest width does not match features + one-gram columns")
        if self.forest.n_classes != len(self.families):
            raise BundleError("forest class count does not match family list")

    @property
    def pattern_set(self) -> PatternSet:
        return self._automaton()[0]

    def _automaton(self):
        if self._compiled is None:
            grams = [f.gram for f in self.features]
            ps = PatternSet.from_grams(grams)
            self._compiled = (ps, AhoCorasick(ps.patterns) if grams else None)
        return self._compiled

    def vectorize(self, data: bytes) -> np.ndarray:
        """Model input row: surviving gram presence, then surviving one-gram counts."""
        _, ac = self._automaton()
        pres = ac.presence(data) if ac is not None else np.zeros(0, dtype=bool)
        counts = one_gram_counts(data)[list(self.onegram_columns)]
        return np.concatenate([pres.astype(np.float64), counts.astype(np.float64)])

    def matrix(self, files: Sequence[bytes], n_jobs: int | None = 1) -> np.ndarray:
        rows = _map(self.vectorize, list(files), n_jobs)
        if not rows:
            return np.zeros((0, self.forest.n_features))
        return np.vstack(rows)

    def raw_proba(self, files: Sequence[bytes], n_jobs: int | None = 1) -> np.ndarray:
        return self.forest.predict_proba(self.matrix(files, n_jobs))

    def predict_proba(self, files: Sequence[bytes], n_jobs: int | None = 1) -> np.ndarray:
        if len(files) == 0:
            return np.zeros((0, len(self.families)))
        return self.calibrator.transform(self.raw_proba(files, n_jobs))

    def predict(self, data: bytes) -> tuple[np.ndarray, str]:
        """Class probabilities for one file and the most probable family."""
        p = self.predict_proba([data])[0]
        return p, self.families[int(np.argmax(p))]

    def file_contents(self) -> dict[str, bytes]:
        thresholds = self.thresholds.to_text().encode()
        features = dump_features(self.features).encode()
        forest = self.forest.to_bytes()
        calibrator = self.calibrator.to_text(self.families).encode()
        meta = [("format_version", str(self.format_version)),
                ("families", ",".join(self.families)),
                ("onegram_columns", ",".join(map(str, self.onegram_columns))),
                ("n_gram_features", str(len(self.features))),
                ("stage1_config_digest", self.thresholds.config_digest),
                ("sampled_file_count", str(self.thresholds.sampled_file_count))]
        meta += [(f"config.{k}", v) for k, v in self.config.model_items()]
        meta += [(f"provenance.{k}", str(v)) for k, v in sorted(self.provenance.items())]
        meta += [("digest.thresholds", _sha(thresholds)), ("digest.features", _sha(features)),
                 ("digest.forest", _sha(forest)), ("digest.calibrator", _sha(calibrator))]
        text = "".join(f"{k}={v}\n" for k, v in meta).encode()
        return {"meta": text, "thresholds": thresholds, "features": features,
                "forest": forest, "calibrator": calibrator}

    def save(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, data in self.file_contents().items():
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(data)

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "ModelBundle":
        blobs = {}
        for name in BUNDLE_FILES:
            path = os.path.join(directory, name)
            try:
                with open(path, "rb") as fh:
                    blobs[name] = fh.read()
            except OSError as exc:
                raise BundleError(f"cannot read bundle file {path}: {exc.strerror}") from exc
        try:
            meta = dict(line.split("=", 1) for line in blobs["meta"].decode().splitlines()
                        if line.strip())
        except ValueError as exc:
            raise BundleError("malformed meta file") from exc
        version = meta.get("format_version")
        if version != str(FORMAT_VERSION):
            raise BundleError(f"unsupported bundle format_version {version!r}")
        for name in BUNDLE_FILES[1:]:
            if meta.get(f"digest.{name}") != _sha(blobs[name]):
                raise BundleError(f"bundle file {name!r} does not match its recorded digest")
        try:
            config = RunConfig.from_items(
                (k[len("config."):], v) for k, v in meta.items() if k.startswith("config."))
            thresholds = EntropyThresholds.from_text(
                blobs["thresholds"].decode(), meta["stage1_config_digest"],
                int(meta["sampled_file_count"]))
            features = parse_features(blobs["features"].decode())
            onegrams = tuple(int(x) for x in meta["onegram_columns"].split(",") if x)
            families = tuple(meta["families"].split(","))
            calibrator = Calibrator.from_text(blobs["calibrator"].decode())
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            raise BundleError(f"corrupted bundle: {exc}") from exc
        forest = TrainedForest.from_bytes(blobs["forest"])
        provenance = {k[len("provenance."):]: v for k, v in meta.items()
                      if k.startswith("provenance.")}
        return cls(families, thresholds, features, onegrams, forest, calibrator, config,
                   provenance, int(version))


def predict(bundle: ModelBundle, data: bytes) -> tuple[np.ndarray, str]:
    return bundle.predict(data)
