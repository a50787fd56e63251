"""Byte entropy of N-grams and sampled per-length entropy thresholds."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ThresholdError

PAPER_LENGTHS = (4, 8, 16, 32)
PAPER_FACTORS = {4: 1.05, 8: 1.05, 16: 1.15, 32: 1.15}

_CHUNK = 1 << 15


def _clogc(n: int) -> np.ndarray:
    c = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1)
    out[1:] = c[1:] * np.log2(c[1:])
    return out


def _entropy_rows(windows: np.ndarray) -> np.ndarray:
    """Entropy (bits) of each row of a 2-D uint8 array.

    Uses H = log2 N - (1/N) * sum_c m_c * c*log2(c), where m_c is the number of
    distinct byte values occurring exactly c times. The sum runs over c in a
    fixed order so a row always gets the same float regardless of batch size.
    """
    w, n = windows.shape
    if w == 0:
        return np.zeros(0)
    s = np.sort(windows, axis=1)
    new_run = np.ones((w, n), dtype=bool)
    new_run[:, 1:] = s[:, 1:] != s[:, :-1]
    run_id = np.cumsum(new_run, axis=1) - 1
    rows = np.arange(w)[:, None]
    run_len = np.bincount((rows * n + run_id).ravel(), minlength=w * n).reshape(w, n)
    mult = np.bincount((rows * (n + 1) + run_len).ravel(), minlength=w * (n + 1)).reshape(w, n + 1)
    table = _clogc(n)
    acc = np.zeros(w)
    for c in range(2, n + 1):
        acc += mult[:, c] * table[c]
    h = math.log2(n) - acc / n
    return np.maximum(h, 0.0)


def entropy_of(gram: bytes) -> float:
    """Shannon entropy in bits of the byte-value distribution of ``gram``."""
    if len(gram) == 0:
        raise ValueError("entropy of an empty gram is undefined")
    row = np.frombuffer(bytes(gram), dtype=np.uint8)[None, :]
    return float(_entropy_rows(row)[0])


def window_entropies(data: bytes, n: int) -> np.ndarray:
    """Entropy of every length-``n`` window of ``data`` (index = start offset).

    Values are bit-identical to ``entropy_of`` on the same window.
    """
    arr = np.frombuffer(data, dtype=np.uint8)
    if len(arr) < n:
        return np.zeros(0)
    views = sliding_window_view(arr, n)
    if len(views) <= _CHUNK:
        return _entropy_rows(views)
    return np.concatenate(
        [_entropy_rows(views[i:i + _CHUNK]) for i in range(0, len(views), _CHUNK)])


@dataclass(frozen=True)
class Stage1Config:
    lengths: tuple[int, ...] = PAPER_LENGTHS
    alpha: float = 0.1
    beta: int = 256
    factors: Mapping[int, float] = field(default_factory=lambda: dict(PAPER_FACTORS))
    seed: int = 0

    def __post_init__(self):
        lengths = tuple(int(n) for n in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "factors", {int(k): float(v) for k, v in self.factors.items()})
        if not lengths or list(lengths) != sorted(set(lengths)) or lengths[0] < 2:
            raise ValueError(f"lengths must be distinct, ascending and >= 2: {lengths}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        missing = [n for n in lengths if n not in self.factors]
        if missing:
            raise ValueError(f"no factor for lengths {missing}")
        low = {n: f for n, f in self.factors.items() if f < 1}
        if low:
            raise ValueError(f"factors must be >= 1: {low}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def canonical(self) -> str:
        facts = ",".join(f"{n}:{self.factors[n]!r}" for n in self.lengths)
        return (f"lengths={','.join(map(str, self.lengths))};alpha={self.alpha!r};"
                f"beta={self.beta};factors={facts};seed={self.seed}")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


@dataclass(frozen=True)
class LengthThreshold:
    avg_entropy: float
    factor: float
    threshold: float


@dataclass(frozen=True)
class EntropyThresholds:
    per_length: Mapping[int, LengthThreshold]
    config_digest: str
    sampled_file_count: int

    def __getitem__(self, n: int) -> float:
        return self.per_length[n].threshold

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_length))

    def to_text(self) -> str:
        lines = []
        for n in self.lengths:
            t = self.per_length[n]
            lines.append(f"{n}\t{t.avg_entropy:.17g}\t{t.factor:.17g}\t{t.threshold:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, config_digest: str = "", sampled_file_count: int = 0):
        per = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            n, avg, fact, t = line.split("\t")
            avg, fact, t = float(avg), float(fact), float(t)
            if avg * fact != t:
                raise ThresholdError(f"threshold for N={n} is not avg * factor")
            per[int(n)] = LengthThreshold(avg, fact, t)
        return cls(per, config_digest, sampled_file_count)

    @classmethod
    def fixed(cls, thresholds: Mapping[int, float]) -> "EntropyThresholds":
        """Thresholds given directly (factor 1), e.g. ``t_N = 0`` to keep every gram."""
        return cls({int(n): LengthThreshold(float(t), 1.0, float(t))
                    for n, t in thresholds.items()}, "fixed", 0)


def _draw_count(alpha: float, n: int) -> int:
    return max(1, math.ceil(round(alpha * n, 9)))


def compute_thresholds(train: Sequence[bytes], cfg: Stage1Config) -> EntropyThresholds:
    """Estimate ``t_N = fact[N] * mean entropy`` of randomly sampled N-grams.

    For each N a generator seeded with ``seed ^ N`` shuffles the training
    files; the first ``ceil(alpha * |train|)`` are drawn, and from each drawn
    file at least N bytes long ``beta`` start offsets are drawn uniformly with
    replacement. Shorter files contribute nothing.
    """
    train = [s.bytes if hasattr(s, "bytes") else s for s in train]
    if not train:
        raise ThresholdError("training side is empty")
    n_draw = _draw_count(cfg.alpha, len(train))
    per = {}
    for n in cfg.lengths:
        rng = np.random.default_rng(cfg.seed ^ n)
        chosen = rng.permutation(len(train))[:n_draw]
        values = []
        for idx in chosen:
            data = train[idx]
            if len(data) < n:
                continue
            starts = rng.integers(0, len(data) - n + 1, size=cfg.beta)
            arr = np.frombuffer(data, dtype=np.uint8)
            values.append(_entropy_rows(arr[starts[:, None] + np.arange(n)]))
        if not values:
            raise ThresholdError(
                f"no sampled training file is at least {n} bytes long; cannot compute t_{n}")
        avg = math.fsum(np.concatenate(values).tolist()) / sum(len(v) for v in values)
        fact = cfg.factors[n]
        per[n] = LengthThreshold(avg, fact, avg * fact)
    return EntropyThresholds(per, cfg.digest(), n_draw)
