"""Per-family representative N-gram mining and one-gram histograms."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .entropy import EntropyThresholds, entropy_of, window_entropies
from .exceptions import MiningError

# rough per-entry cost of a Counter slot holding a small bytes key
_ENTRY_OVERHEAD = 100


@dataclass(frozen=True)
class Stage2Config:
    gamma: float = 0.1
    memory_cap_bytes: int | None = None

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")


class Representative(NamedTuple):
    count: int
    entropy: float


@dataclass(frozen=True)
class FamilyRepresentatives:
    family: str
    family_size: int
    per_length: Mapping[int, Mapping[bytes, Representative]]

    def grams(self) -> set[bytes]:
        return {g for reps in self.per_length.values() for g in reps}

    def __len__(self) -> int:
        return sum(len(r) for r in self.per_length.values())

    def dump_lines(self) -> list[str]:
        lines = []
        for n in sorted(self.per_length):
            for g in sorted(self.per_length[n]):
                r = self.per_length[n][g]
                lines.append(f"{self.family}\t{n}\t{g.hex()}\t{r.count}\t{r.entropy:.17g}")
        return lines


@dataclass(frozen=True)
class OneGramHistogram:
    sample_id: str
    counts: np.ndarray = field(repr=False)


def min_presence(gamma: float, family_size: int) -> int:
    """File-count floor for a representative: ``max(1, floor(gamma * |family|))``."""
    return max(1, math.floor(round(gamma * family_size, 9)))


def file_presence_grams(data: bytes, n: int, threshold: float) -> set[bytes]:
    """Distinct length-``n`` substrings of ``data`` whose entropy is >= ``threshold``."""
    if n < 2:
        raise ValueError("N must be >= 2")
    if len(data) < n:
        return set()
    keep = np.flatnonzero(window_entropies(data, n) >= threshold)
    return {data[i:i + n] for i in keep.tolist()}


def _as_bytes(sample) -> bytes:
    return sample.bytes if hasattr(sample, "bytes") else sample


def mine_family(family_samples: Sequence, thresholds: EntropyThresholds,
                cfg: Stage2Config = Stage2Config(), family: str | None = None
                ) -> FamilyRepresentatives:
    """Grams present in at least ``min_presence`` files of the family.

    A file adds at most one to a gram's count however often the gram occurs
    in it.
    """
    if not family_samples:
        raise MiningError("cannot mine an empty family")
    if family is None:
        family = getattr(family_samples[0], "family", "")
    floor_count = min_presence(cfg.gamma, len(family_samples))
    counters: dict[int, Counter] = {n: Counter() for n in thresholds.lengths}
    for sample in family_samples:
        data = _as_bytes(sample)
        for n in thresholds.lengths:
            counters[n].update(file_presence_grams(data, n, thresholds[n]))
        if cfg.memory_cap_bytes is not None:
            used = sum(len(c) * (n + _ENTRY_OVERHEAD) for n, c in counters.items())
            if used > cfg.memory_cap_bytes:
                raise MiningError(
                    f"candidate table for family {family!r} exceeded the memory cap "
                    f"({used} > {cfg.memory_cap_bytes} bytes); raise the entropy factors "
                    f"or shard the family")
    per_length = {}
    for n, counter in counters.items():
        per_length[n] = {g: Representative(c, entropy_of(g))
                         for g, c in sorted(counter.items()) if c >= floor_count}
    return FamilyRepresentatives(family, len(family_samples), per_length)


def mine_all(groups: Mapping[str, Sequence], thresholds: EntropyThresholds,
             cfg: Stage2Config = Stage2Config()) -> dict[str, FamilyRepresentatives]:
    return {f: mine_family(samples, thresholds, cfg, family=f) for f, samples in groups.items()}


def one_gram_counts(data: bytes) -> np.ndarray:
    return np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256).astype(np.int64)


def one_gram_histogram(sample) -> OneGramHistogram:
    data = _as_bytes(sample)
    return OneGramHistogram(getattr(sample, "id", ""), one_gram_counts(data))


def dump_representatives(reps: Iterable[FamilyRepresentatives]) -> str:
    lines = [line for r in reps for line in r.dump_lines()]
    return "\n".join(lines) + ("\n" if lines else "")
