"""Membership-inference ROC points re-reported as precision/recall under skew."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .metrics import RocPoint, SkewScenario, UndefinedPrecisionError, roc_to_pr

DEFAULT_SKEWS = tuple(SkewScenario(1, n) for n in (1, 2, 5, 10, 30, 50, 240))

# FPR and TPR read off a published log-log ROC plot (Texas hospital data);
# None marks a cell left empty in the source table.
_FIXTURE_FPR = (1e-5, 1e-4, 1e-3, 0.01, 0.1, 0.25, 0.5, 1.0)
_FIXTURE_TPR = {
    "shokri": (0.0003, 0.002, 0.015, 0.1, 0.4, None, 1.0, 1.0),
    "carlini": (0.1, 0.2, 0.35, 0.5, 0.75, 1.0, None, 1.0),
}


class RocError(ValueError):
    pass


@dataclass(frozen=True)
class RocCurve:
    name: str
    points: tuple[RocPoint, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise RocError(f"curve {self.name!r} has no points")
        for a, b in zip(self.points, self.points[1:]):
            if not b.fpr > a.fpr:
                raise RocError(f"curve {self.name!r}: fpr must be strictly increasing ({a.fpr} then {b.fpr})")
            if b.tpr < a.tpr:
                raise RocError(f"curve {self.name!r}: tpr decreases from {a.tpr} to {b.tpr}")


@dataclass(frozen=True)
class PrRow:
    skew: SkewScenario
    fpr: float
    tpr: float
    precision: float | None  # None: undefined (tpr and fpr both zero)
    recall: float


@dataclass(frozen=True)
class PrTable:
    curve: str
    rows: tuple[PrRow, ...]

    def records(self) -> list[dict]:
        return [
            {
                "curve": self.curve,
                "m": r.skew.m,
                "n": r.skew.n,
                "fpr": r.fpr,
                "tpr": r.tpr,
                "precision": r.precision,
                "recall": r.recall,
            }
            for r in self.rows
        ]


def load_roc(path: str | Path, name: str | None = None) -> RocCurve:
    """Read an ``fpr,tpr`` CSV into a curve sorted by fpr."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["fpr", "tpr"]:
            raise RocError(f"{path}: header must be 'fpr,tpr', got {header}")
        points = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise RocError(f"{path}:{lineno}: expected 2 fields")
            try:
                points.append(RocPoint(float(rec[0]), float(rec[1])))
            except ValueError as exc:
                raise RocError(f"{path}:{lineno}: {exc}") from None
    points.sort(key=lambda p: p.fpr)
    return RocCurve(name or path.stem, tuple(points))


def bundled_fixture() -> tuple[RocCurve, RocCurve]:
    """The Shokri and Carlini ROC points on the Texas hospital dataset."""
    curves = []
    for name in ("shokri", "carlini"):
        pts = tuple(RocPoint(f, t) for f, t in zip(_FIXTURE_FPR, _FIXTURE_TPR[name]) if t is not None)
        curves.append(RocCurve(name, pts))
    return curves[0], curves[1]


def pr_tables(curves: Sequence[RocCurve], skews: Sequence[SkewScenario] = DEFAULT_SKEWS) -> list[PrTable]:
    if not curves or not skews:
        raise ValueError("need at least one curve and one skew")
    tables = []
    for curve in curves:
        rows = []
        for skew in skews:
            for pt in curve.points:
                try:
                    prec, rec = roc_to_pr(pt, skew)
                except UndefinedPrecisionError:
                    prec, rec = None, pt.tpr
                rows.append(PrRow(skew, pt.fpr, pt.tpr, prec, rec))
        tables.append(PrTable(curve.name, tuple(rows)))
    return tables


PR_COLUMNS = ("curve", "m", "n", "fpr", "tpr", "precision", "recall")


def write_pr_csv(table: PrTable, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PR_COLUMNS)
        for rec in table.records():
            w.writerow(["undefined" if rec[c] is None else _cell(rec[c]) for c in PR_COLUMNS])


def _cell(v):
    return repr(float(v)) if isinstance(v, float) else v
