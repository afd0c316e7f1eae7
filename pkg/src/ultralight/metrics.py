"""Binary segmentation metrics from confusion counts.

Zero denominators follow one rule: if the class the metric is about is
absent from the ground truth and the prediction agrees (predicts none of it
either), the metric is 1.0; otherwise 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def confusion(pred, truth, threshold: float = THRESHOLD) -> ConfusionCounts:
    """Tally a probability map against a binary mask (``pred >= threshold`` is positive)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"confusion: prediction {pred.shape} vs truth {truth.shape}")
    p = pred >= threshold
    t = truth > 0.5
    tp = int(np.count_nonzero(p & t))
    tn = int(np.count_nonzero(~p & ~t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, tn, fp, fn)


def dsc(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 1.0


def se(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    if denom:
        return c.tp / denom
    return 1.0 if c.fp == 0 else 0.0


def sp(c: ConfusionCounts) -> float:
    denom = c.tn + c.fp
    if denom:
        return c.tn / denom
    return 1.0 if c.fn == 0 else 0.0


def acc(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total if c.total else 1.0


def all_metrics(c: ConfusionCounts) -> dict[str, float]:
    return {"dsc": dsc(c), "se": se(c), "sp": sp(c), "acc": acc(c)}
