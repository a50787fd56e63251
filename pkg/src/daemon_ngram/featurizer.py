"""Feature vectors: binary gram presence plus raw one-gram counts."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .automaton import AhoCorasick
from .exceptions import AutomatonError
from .miner import one_gram_counts
from .selector import TaggedFeature


def resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs is None or n_jobs <= 0:
        return os.cpu_count() or 1
    return n_jobs


def _map(fn, items, n_jobs):
    n_jobs = resolve_jobs(n_jobs)
    if n_jobs == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class PatternSet:
    patterns: tuple[bytes, ...]
    index: dict = field(repr=False, compare=False)

    @classmethod
    def from_grams(cls, grams: Sequence[bytes]) -> "PatternSet":
        grams = [bytes(g) for g in grams]
        if len(set(grams)) != len(grams):
            raise AutomatonError("duplicate gram in pattern set")
        ordered = tuple(sorted(grams, key=lambda g: (len(g), g)))
        return cls(ordered, {g: j for j, g in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.patterns)


@dataclass(frozen=True)
class MatchStats:
    counts: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    sample_id: str
    presence: np.ndarray
    one_grams: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.presence) + len(self.one_grams)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.presence.astype(np.int64), self.one_grams])


def build_automaton(features: Sequence[TaggedFeature | bytes]) -> tuple[PatternSet, AhoCorasick]:
    """Freeze the canonical column order and compile the matcher for it."""
    grams = [f.gram if isinstance(f, TaggedFeature) else f for f in features]
    if not grams:
        raise AutomatonError("no features to compile")
    ps = PatternSet.from_grams(grams)
    return ps, AhoCorasick(ps.patterns)


def featurize(data: bytes, automaton: AhoCorasick, pattern_set: PatternSet,
              sample_id: str = "", with_stats: bool = False):
    """Presence bits for every pattern plus the 256-bin byte histogram."""
    if automaton.patterns != pattern_set.patterns:
        raise AutomatonError("automaton was not built from this pattern set")
    if with_stats:
        counts = automaton.count(data)
        fv = FeatureVector(sample_id, (counts > 0).astype(np.uint8), one_gram_counts(data))
        return fv, MatchStats(counts)
    return FeatureVector(sample_id, automaton.presence(data).astype(np.uint8),
                         one_gram_counts(data))


def presence_matrix(automaton: AhoCorasick, files: Sequence[bytes],
                    n_jobs: int | None = 1) -> np.ndarray:
    rows = _map(automaton.presence, list(files), n_jobs)
    if not rows:
        return np.zeros((0, len(automaton)), dtype=bool)
    return np.vstack(rows)


def feature_matrix(files: Sequence[bytes], automaton: AhoCorasick | None,
                   n_jobs: int | None = 1) -> np.ndarray:
    """Stack of ``[presence | one-gram counts]`` rows, shape ``(len(files), B + 256)``."""
    files = list(files)
    n_pat = len(automaton) if automaton is not None else 0

    def row(data):
        out = np.empty(n_pat + 256, dtype=np.float64)
        if n_pat:
            out[:n_pat] = automaton.presence(data)
        out[n_pat:] = one_gram_counts(data)
        return out

    rows = _map(row, files, n_jobs)
    if not rows:
        return np.zeros((0, n_pat + 256))
    return np.vstack(rows)


def dump_matrix(ids: Sequence[str], families: Sequence[str], matrix: np.ndarray,
                n_patterns: int, k: int) -> str:
    lines = [f"{n_patterns}\t{k}"]
    for sid, fam, row in zip(ids, families, matrix):
        bits = np.packbits(row[:n_patterns].astype(np.uint8)).tobytes().hex()
        counts = " ".join(str(int(c)) for c in row[n_patterns:])
        lines.append(f"{sid}\t{fam}\t{bits}\t{counts}")
    return "\n".join(lines) + "\n"
