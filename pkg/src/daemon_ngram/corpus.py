"""Labeled byte corpora: loading from a manifest and stratified splitting."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import CorpusError

# Characters that would break the tab/pipe/colon based text formats downstream.
_FORBIDDEN_LABEL_CHARS = set("\t\n\r|;:,=")


@dataclass(frozen=True)
class Sample:
    id: str
    path: str
    family: str
    bytes: bytes = field(repr=False)

    def __len__(self) -> int:
        return len(self.bytes)


@dataclass(frozen=True)
class Corpus:
    samples: tuple[Sample, ...]
    families: tuple[str, ...]

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise CorpusError("sample ids must be unique")
        fams = set(s.family for s in self.samples)
        if not fams <= set(self.families):
            raise CorpusError(f"unknown families: {sorted(fams - set(self.families))}")
        if list(self.families) != sorted(set(self.families)):
            raise CorpusError("families must be distinct and sorted")

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Corpus":
        samples = tuple(samples)
        return cls(samples, tuple(sorted({s.family for s in samples})))

    @property
    def k(self) -> int:
        return len(self.families)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def family_index(self, family: str) -> int:
        return self.families.index(family)

    def by_family(self) -> dict[str, list[Sample]]:
        """Samples grouped per family, in canonical family order."""
        groups: dict[str, list[Sample]] = {f: [] for f in self.families}
        for s in self.samples:
            groups[s.family].append(s)
        return groups

    def family_sizes(self) -> dict[str, int]:
        return {f: len(v) for f, v in self.by_family().items()}

    def labels(self) -> np.ndarray:
        """Integer family codes aligned with ``samples``."""
        index = {f: i for i, f in enumerate(self.families)}
        return np.array([index[s.family] for s in self.samples], dtype=np.int64)

    def subset(self, ids: Iterable[str]) -> "Corpus":
        """Samples whose id is in ``ids``, keeping corpus order and family list."""
        wanted = set(ids)
        return Corpus(tuple(s for s in self.samples if s.id in wanted), self.families)

    def require_trainable(self) -> None:
        present = {s.family for s in self.samples}
        if len(present) < 2:
            raise CorpusError(f"need >= 2 families to train, got {len(present)}")


@dataclass(frozen=True)
class Split:
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int
    fraction: float

    def serialize(self) -> str:
        lines = [f"seed\t{self.seed}", f"fraction\t{self.fraction!r}"]
        lines += [f"train\t{i}" for i in sorted(self.train_ids)]
        lines += [f"test\t{i}" for i in sorted(self.test_ids)]
        return "\n".join(lines) + "\n"


def validate_family_label(label: str) -> str:
    if not label or label != label.strip():
        raise CorpusError(f"invalid family label {label!r}")
    bad = _FORBIDDEN_LABEL_CHARS & set(label)
    if bad:
        raise CorpusError(f"family label {label!r} contains reserved characters {sorted(bad)}")
    return label


def read_manifest(manifest: str | os.PathLike) -> list[tuple[str, str]]:
    entries = []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{manifest}:{lineno}: expected '<path>\\t<family>'")
            path, family = parts
            entries.append((path, validate_family_label(family)))
    return entries


def load_corpus(root_dir: str | os.PathLike, manifest: str | os.PathLike) -> Corpus:
    """Load every file listed in ``manifest`` (``<relative_path>\\t<family>`` per line).

    Files are read verbatim as bytes. The sample id is the relative path as
    written in the manifest, so it is stable across machines.
    """
    entries = read_manifest(manifest)
    if not entries:
        raise CorpusError(f"manifest {manifest} is empty")
    seen: set[str] = set()
    samples = []
    for rel, family in entries:
        if rel in seen:
            raise CorpusError(f"duplicate path in manifest: {rel}")
        seen.add(rel)
        full = os.path.join(root_dir, rel)
        try:
            with open(full, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise CorpusError(f"cannot read sample {full}: {exc.strerror}") from exc
        samples.append(Sample(id=rel, path=rel, family=family, bytes=data))
    return Corpus.from_samples(samples)


def write_manifest(path: str | os.PathLike, samples: Sequence[Sample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(f"{s.path}\t{s.family}\n")


def _train_count(fraction: float, n: int) -> int:
    # round() guards against 0.7 * 10 == 7.000000000000001
    return math.ceil(round(fraction * n, 9))


def stratified_split(corpus: Corpus, fraction: float, seed: int) -> Split:
    """Per family, put ``ceil(fraction * n_f)`` samples in train.

    The assignment depends only on ``seed`` and the sorted sample ids of each
    family, never on manifest order.
    """
    if not 0 < fraction < 1:
        raise CorpusError(f"fraction must be in (0, 1), got {fraction}")
    groups = corpus.by_family()
    small = [f for f, members in groups.items() if len(members) < 2]
    if small:
        raise CorpusError(f"families with fewer than 2 samples cannot be split: {small}")
    rng = np.random.default_rng(seed)
    train: set[str] = set()
    test: set[str] = set()
    for family in corpus.families:
        ids = sorted(s.id for s in groups[family])
        order = rng.permutation(len(ids))
        n_train = _train_count(fraction, len(ids))
        for rank, j in enumerate(order):
            (train if rank < n_train else test).add(ids[j])
    return Split(frozenset(train), frozenset(test), seed, fraction)
