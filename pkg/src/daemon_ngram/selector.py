"""Pairwise information-gain scoring and tagged feature selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .automaton import AhoCorasick
from .miner import FamilyRepresentatives

Pair = tuple[str, str]


def _h2(a: int, b: int) -> float:
    # fixed (min, max) order keeps _h2(a, b) == _h2(b, a) bit for bit
    total = a + b
    h = 0.0
    for c in sorted((a, b)):
        if c:
            g = c / total
            h -= g * math.log2(g)
    return h


def pair_entropy(n_1: int, n_2: int) -> float:
    """Binary label entropy (bits) of a set holding ``n_1`` and ``n_2`` members."""
    if n_1 < 0 or n_2 < 0 or n_1 + n_2 == 0:
        raise ValueError(f"need non-negative counts with a positive total, got ({n_1}, {n_2})")
    return _h2(n_1, n_2)


@dataclass(frozen=True)
class PairSplit:
    """Presence counts of one gram over the files of two families.

    ``left_*`` (files containing the gram) and ``right_*`` (files lacking it)
    split each family; ``left_weight``/``right_weight`` are the fractions of
    the pair's files on either side.
    """
    pair: Pair
    present_count_1: int
    present_count_2: int
    n_1: int
    n_2: int

    def __post_init__(self):
        if not (0 <= self.present_count_1 <= self.n_1 and 0 <= self.present_count_2 <= self.n_2):
            raise ValueError(f"present counts out of range: {self}")
        if self.n_1 + self.n_2 == 0:
            raise ValueError("empty pair")

    @property
    def total(self) -> int:
        return self.n_1 + self.n_2

    @property
    def left(self) -> tuple[int, int]:
        return self.present_count_1, self.present_count_2

    @property
    def right(self) -> tuple[int, int]:
        return self.n_1 - self.present_count_1, self.n_2 - self.present_count_2

    @property
    def left_weight(self) -> float:
        return sum(self.left) / self.total

    @property
    def right_weight(self) -> float:
        return sum(self.right) / self.total


@lru_cache(maxsize=1 << 16)
def _gain(p1: int, p2: int, n1: int, n2: int) -> float:
    total = n1 + n2
    left = p1 + p2
    right = total - left
    h_left = _h2(p1, p2) * (left / total) if left else 0.0
    h_right = _h2(n1 - p1, n2 - p2) * (right / total) if right else 0.0
    return max(_h2(n1, n2) - (h_left + h_right), 0.0)


def info_gain(split: PairSplit) -> float:
    """Reduction of the pair's label entropy from splitting on gram presence."""
    return _gain(split.present_count_1, split.present_count_2, split.n_1, split.n_2)


@dataclass(frozen=True)
class Stage3Config:
    budget_B: int = 50_000

    def quota(self, k: int) -> int:
        n_pairs = k * (k - 1) // 2
        if self.budget_B < n_pairs:
            raise ValueError(f"budget {self.budget_B} is smaller than the {n_pairs} family pairs")
        return self.budget_B // n_pairs


@dataclass
class TaggedFeature:
    gram: bytes
    entropy: float
    tags: dict[Pair, float] = field(default_factory=dict)
    origin_families: tuple[str, ...] = ()

    @property
    def length(self) -> int:
        return len(self.gram)

    def sort_key(self):
        return (len(self.gram), self.gram)

    def to_line(self) -> str:
        tags = ";".join(f"{a}|{b}:{g:.17g}" for (a, b), g in sorted(self.tags.items()))
        return (f"{self.gram.hex()}\t{len(self.gram)}\t{self.entropy:.17g}\t{tags}"
                f"\t{','.join(self.origin_families)}")

    @classmethod
    def from_line(cls, line: str) -> "TaggedFeature":
        parts = line.rstrip("\n").split("\t")
        if len(parts) not in (4, 5):
            raise ValueError(f"malformed feature line: {line!r}")
        gram = bytes.fromhex(parts[0])
        if len(gram) != int(parts[1]):
            raise ValueError(f"length column disagrees with gram: {line!r}")
        tags = {}
        for item in filter(None, parts[3].split(";")):
            pair, gain = item.rsplit(":", 1)
            a, b = pair.split("|")
            tags[(a, b)] = float(gain)
        origins = tuple(filter(None, parts[4].split(","))) if len(parts) == 5 else ()
        return cls(gram, float(parts[2]), tags, origins)


def dump_features(features: Sequence[TaggedFeature]) -> str:
    return "".join(f.to_line() + "\n" for f in features)


def parse_features(text: str) -> list[TaggedFeature]:
    return [TaggedFeature.from_line(line) for line in text.splitlines() if line.strip()]


def canonical_order(features: Sequence[TaggedFeature]) -> list[TaggedFeature]:
    return sorted(features, key=TaggedFeature.sort_key)


def family_pairs(families: Sequence[str]) -> list[Pair]:
    return list(combinations(sorted(families), 2))


def presence_by_family(grams: Sequence[bytes], groups: Mapping[str, Sequence[bytes]],
                       n_jobs: int | None = 1) -> dict[str, np.ndarray]:
    """For each family, how many of its files contain each gram."""
    from .featurizer import presence_matrix
    ac = AhoCorasick(grams)
    return {f: presence_matrix(ac, files, n_jobs=n_jobs).sum(axis=0, dtype=np.int64)
            for f, files in groups.items()}


def select_pairwise(reps: Mapping[str, FamilyRepresentatives],
                    groups: Mapping[str, Sequence[bytes]], cfg: Stage3Config,
                    n_jobs: int | None = 1) -> list[TaggedFeature]:
    """Top ``floor(B / C(k, 2))`` grams per family pair by information gain.

    ``groups`` maps every family to the raw bytes of its training files.
    Candidates for a pair are the representatives of its two families; ties
    are broken by shorter gram first, then by byte order. A gram chosen for
    several pairs appears once, tagged with each pair and its gain there.
    Returned features are in canonical (length, bytes) order.
    """
    families = sorted(groups)
    if len(families) < 2:
        raise ValueError("need at least two families")
    quota = cfg.quota(len(families))

    origins: dict[bytes, set[str]] = {}
    for f in families:
        for g in reps[f].grams():
            origins.setdefault(g, set()).add(f)
    candidates = sorted(origins, key=lambda g: (len(g), g))
    if not candidates:
        return []
    col = {g: j for j, g in enumerate(candidates)}
    present = presence_by_family(candidates, {f: groups[f] for f in families}, n_jobs)
    sizes = {f: len(groups[f]) for f in families}
    entropy = {}
    for f in families:
        for reps_n in reps[f].per_length.values():
            for g, r in reps_n.items():
                entropy[g] = r.entropy

    chosen: dict[bytes, dict[Pair, float]] = {}
    for a, b in family_pairs(families):
        idx = np.array(sorted({col[g] for g in reps[a].grams() | reps[b].grams()}), dtype=np.int64)
        if len(idx) == 0:
            continue
        pa, pb = present[a][idx], present[b][idx]
        gains = np.array([_gain(int(x), int(y), sizes[a], sizes[b])
                          for x, y in zip(pa.tolist(), pb.tolist())])
        # idx is already in (length, bytes) order, so a stable sort on -gain
        # gives the full tie-break
        order = np.argsort(-gains, kind="stable")[:quota]
        for j in order.tolist():
            chosen.setdefault(candidates[idx[j]], {})[(a, b)] = float(gains[j])

    return [TaggedFeature(g, entropy[g], dict(sorted(tags.items())), tuple(sorted(origins[g])))
            for g, tags in sorted(chosen.items(), key=lambda kv: (len(kv[0]), kv[0]))]
