"""Per-class contingency counts and the derived effectiveness measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

from .core import FailureClass


@dataclass(frozen=True)
class Contingency:
    """Binary one-vs-rest counts for a single class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("contingency counts must be non-negative")

    def __add__(self, other: "Contingency") -> "Contingency":
        return Contingency(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EffectivenessMetrics:
    """Precision, recall, F-measure, accuracy and false-positive rate.

    A measure whose denominator is zero is undefined and carried as None,
    never silently coerced to 0.
    """

    precision: Optional[float]
    recall: Optional[float]
    f_measure: Optional[float]
    accuracy: Optional[float]
    fpr: Optional[float]

    def render(self, name: str) -> str:
        def fmt(v: Optional[float]) -> str:
            return "--" if v is None else f"{100.0 * v:7.3f}"

        return (
            f"{name:<34} {fmt(self.precision)} {fmt(self.recall)} "
            f"{fmt(self.f_measure)} {fmt(self.accuracy)} {fmt(self.fpr)}"
        )


def metrics(c: Contingency) -> EffectivenessMetrics:
    """Effectiveness measures for one contingency table.

    precision = TP/(TP+FP); recall = TP/(TP+FN); F = 2PR/(P+R);
    accuracy = (TP+TN)/total; FPR = FP/(TN+FP).
    """
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0:
        f_measure = None
    else:
        f_measure = 2 * precision * recall / (precision + recall)
    accuracy = (c.tp + c.tn) / c.total if c.total > 0 else None
    fpr = c.fp / (c.tn + c.fp) if (c.tn + c.fp) > 0 else None
    return EffectivenessMetrics(precision, recall, f_measure, accuracy, fpr)


def micro_contingency(per_class: Dict[FailureClass, Contingency]) -> Contingency:
    """Micro-aggregation: sum the per-class counts."""
    total = Contingency()
    for c in per_class.values():
        total = total + c
    return total
