"""Scalar vulnerability measures.

Every function here refuses to return a value when its denominator is
zero: an undefined measure raises rather than quietly becoming 0 or 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "Counts",
    "RocPoint",
    "SkewScenario",
    "UndefinedMeasureError",
    "UndefinedPrecisionError",
    "SaturatedBaselineError",
    "accuracy",
    "precision",
    "recall",
    "prediction_rate",
    "predicted_fraction",
    "binary_recall_per_value",
    "correct_continuous",
    "precision_improvement",
    "roc_to_pr",
]


class UndefinedMeasureError(ValueError):
    """A measure was requested whose denominator is zero."""


class UndefinedPrecisionError(UndefinedMeasureError):
    """No positive predictions were made, so precision does not exist."""


class SaturatedBaselineError(ValueError):
    """The baseline precision is already 1.0; no improvement is possible."""


@dataclass(frozen=True)
class Counts:
    """Prediction outcome tallies.

    ``np`` counts abstentions: targets for which a prediction was possible
    but none was made. For multi-valued inference only ``tp``, ``fp`` and
    ``np`` are meaningful; ``fn`` and ``tn`` stay zero.
    """

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    np: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn", "np"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def positives(self) -> int:
        return self.tp + self.fp

    @property
    def attempts(self) -> int:
        return self.tp + self.fp + self.np

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
            self.np + other.np,
        )

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn, "np": self.np}


@dataclass(frozen=True)
class SkewScenario:
    """Observed member:non-member ratio ``m:n``."""

    m: float
    n: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.m) and self.m > 0):
            raise ValueError(f"member count must be positive, got {self.m!r}")
        if not (math.isfinite(self.n) and self.n >= 0):
            raise ValueError(f"non-member count must be non-negative, got {self.n!r}")

    @classmethod
    def parse(cls, text: str) -> "SkewScenario":
        """Parse ``"1:30"`` style ratios."""
        parts = str(text).split(":")
        if len(parts) != 2:
            raise ValueError(f"skew must look like 'M:N', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise ValueError(f"bad skew {text!r}: {exc}") from None

    @property
    def ratio(self) -> float:
        return self.n / self.m

    def label(self) -> str:
        return f"{_fmt_num(self.m)}:{_fmt_num(self.n)}"


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float

    def __post_init__(self) -> None:
        for name in ("fpr", "tpr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def accuracy(c: Counts) -> float:
    total = c.tp + c.fp + c.fn + c.tn
    if total == 0:
        raise UndefinedMeasureError("accuracy undefined: no predictions")
    return (c.tp + c.tn) / total


def precision(c: Counts) -> float:
    if c.positives == 0:
        raise UndefinedPrecisionError("precision undefined: no positive predictions")
    return c.tp / c.positives


def recall(c: Counts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMeasureError("recall undefined: no actual positives")
    return c.tp / (c.tp + c.fn)


def prediction_rate(c: Counts) -> float:
    """True positives over all possible predictions, abstentions included."""
    if c.attempts == 0:
        raise UndefinedMeasureError("prediction rate undefined: no targets")
    return c.tp / c.attempts


def predicted_fraction(c: Counts) -> float:
    """Fraction of targets that received a prediction, ``|P| / |T|``.

    This is the coverage used when matching attack and baseline coverage,
    and the quantity plotted against precision in threshold sweeps.
    """
    if c.attempts == 0:
        raise UndefinedMeasureError("coverage undefined: no targets")
    return c.positives / c.attempts


def binary_recall_per_value(predictions: Sequence, truths: Sequence, value) -> float:
    """Recall for ``value`` after casting the problem as value / not-value.

    Any prediction other than ``value``, including an abstention (``None``),
    is a negative prediction.
    """
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if len(truths) == 0:
        raise ValueError("empty input")
    tp = fn = 0
    for p, t in zip(predictions, truths):
        if t == value:
            if p == value:
                tp += 1
            else:
                fn += 1
    if tp + fn == 0:
        raise UndefinedMeasureError(f"value {value!r} does not occur in truths")
    return recall(Counts(tp=tp, fn=fn))


def correct_continuous(pred: float, truth: float, epsilon: float) -> bool:
    """Relative-error correctness: ``|pred - truth| <= epsilon * |truth|``.

    At ``truth == 0`` only an exact match counts.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if truth == 0:
        return pred == 0
    return abs(pred - truth) <= epsilon * abs(truth)


def precision_improvement(p_atk: float, p_base: float) -> float:
    """Achieved fraction of the largest possible precision gain over the baseline."""
    if not (0.0 <= p_atk <= 1.0):
        raise ValueError(f"attack precision must lie in [0, 1], got {p_atk!r}")
    if not (0.0 <= p_base <= 1.0):
        raise ValueError(f"baseline precision must lie in [0, 1], got {p_base!r}")
    if p_base == 1.0:
        raise SaturatedBaselineError("baseline already perfect")
    return (p_atk - p_base) / (1.0 - p_base)


def roc_to_pr(pt: RocPoint, skew: SkewScenario) -> tuple[float, float]:
    """Precision and recall of an ROC operating point at a given base rate."""
    hits = pt.tpr * skew.m
    false_alarms = pt.fpr * skew.n
    if hits + false_alarms <= 0:
        raise UndefinedPrecisionError(
            f"precision undefined at fpr={pt.fpr}, tpr={pt.tpr}, skew {skew.label()}"
        )
    return hits / (hits + false_alarms), pt.tpr
