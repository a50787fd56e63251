"""Multiclass logloss and argmax classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PredictionMatrix:
    sample_ids: tuple[str, ...]
    p: np.ndarray
    y: np.ndarray
    class_order: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if p.ndim != 2 or p.shape != y.shape or p.shape[1] != len(self.class_order):
            raise ValueError("p, y and class_order disagree in shape")
        if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
            raise ValueError("every row of y must be one-hot")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every row of p must be a probability vector (sum 1 +/- 1e-9)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_labels(cls, sample_ids: Sequence[str], p, labels: Sequence[str],
                    class_order: Sequence[str]) -> "PredictionMatrix":
        index = {c: j for j, c in enumerate(class_order)}
        y = np.zeros((len(labels), len(class_order)))
        try:
            y[np.arange(len(labels)), [index[lab] for lab in labels]] = 1
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not in class order") from None
        return cls(tuple(sample_ids), p, y, tuple(class_order))

    @property
    def truth(self) -> np.ndarray:
        return self.y.argmax(axis=1)

    @property
    def predicted(self) -> np.ndarray:
        # argmax returns the first maximum: canonical class order breaks ties
        return self.p.argmax(axis=1)


def logloss(pm: PredictionMatrix, epsilon: float = 1e-15) -> float:
    """Mean negative natural-log probability of the true class.

    Rows are rescaled to sum to one and then clipped to ``[eps, 1 - eps]``.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must be in (0, 0.5)")
    p = pm.p / pm.p.sum(axis=1, keepdims=True)
    p = np.clip(p, epsilon, 1 - epsilon)
    return float(-np.sum(pm.y * np.log(p)) / len(p))


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    confusion: np.ndarray
    class_order: tuple[str, ...]

    def to_text(self) -> str:
        width = max(8, *(len(c) for c in self.class_order))
        lines = [f"accuracy\t{self.accuracy:.6f}",
                 f"macro_precision\t{self.macro_precision:.6f}",
                 f"macro_recall\t{self.macro_recall:.6f}",
                 "confusion (rows = true, columns = predicted)",
                 " " * width + "".join(f"{c:>{width + 1}}" for c in self.class_order)]
        for c, row in zip(self.class_order, self.confusion):
            lines.append(f"{c:<{width}}" + "".join(f"{int(v):>{width + 1}}" for v in row))
        return "\n".join(lines) + "\n"


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num))
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def classification_report(pm: PredictionMatrix) -> ClassificationReport:
    m = len(pm.class_order)
    confusion = np.zeros((m, m), dtype=np.int64)
    np.add.at(confusion, (pm.truth, pm.predicted), 1)
    tp = np.diag(confusion).astype(np.float64)
    precision = _safe_div(tp, confusion.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, confusion.sum(axis=1).astype(np.float64))
    return ClassificationReport(float(tp.sum() / confusion.sum()), float(precision.mean()),
                                float(recall.mean()), confusion, pm.class_order)
