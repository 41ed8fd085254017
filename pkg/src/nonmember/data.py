"""Tabular datasets: loading, splitting, replication and numeric encoding.

A :class:`Dataset` is stored column-wise. Categorical columns hold ``str``
values in object arrays, continuous columns hold ``float64``. All arrays
are marked read-only; operations return new datasets.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, CONTINUOUS)

#: Label given to an empty cell in a nullable categorical column.
MISSING = "⟂"


class DataError(ValueError):
    """Malformed input data or schema."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    pii: bool = False
    nullable: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class LoadReport:
    rows_read: int
    rows_dropped: int = 0
    dropped_reasons: tuple[str, ...] = ()


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: tuple[ColumnSpec, ...]
    data: Mapping[str, np.ndarray]
    row_ids: np.ndarray
    duplicate_of: np.ndarray
    report: LoadReport | None = None

    @classmethod
    def build(
        cls,
        columns: Sequence[ColumnSpec],
        data: Mapping[str, Iterable],
        row_ids: Iterable[int] | None = None,
        duplicate_of: Iterable[int] | None = None,
        report: LoadReport | None = None,
    ) -> "Dataset":
        """Validate and freeze column arrays into a dataset."""
        columns = tuple(columns)
        if not columns:
            raise DataError("a dataset needs at least one column")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        missing = set(names) - set(data)
        if missing:
            raise DataError(f"no values for columns {sorted(missing)}")

        arrays: dict[str, np.ndarray] = {}
        n = None
        for spec in columns:
            raw = data[spec.name]
            if spec.is_categorical:
                arr = np.array([str(v) for v in raw], dtype=object)
            else:
                arr = np.asarray(raw, dtype=np.float64)
                if not np.all(np.isfinite(arr)):
                    raise DataError(f"column {spec.name!r}: non-finite continuous value")
            if arr.ndim != 1:
                raise DataError(f"column {spec.name!r} is not one-dimensional")
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise DataError(f"column {spec.name!r} has {len(arr)} values, expected {n}")
            arrays[spec.name] = _frozen(arr)

        ids = np.arange(n, dtype=np.int64) if row_ids is None else np.asarray(list(row_ids), dtype=np.int64)
        if len(ids) != n:
            raise DataError("row_ids length does not match row count")
        if len(np.unique(ids)) != n:
            raise DataError("row_ids are not unique")
        dup = np.full(n, -1, dtype=np.int64) if duplicate_of is None else np.asarray(list(duplicate_of), dtype=np.int64)
        return cls(columns, arrays, _frozen(ids), _frozen(dup), report)

    # -- access -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.row_ids)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def spec(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    def pii_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.pii]

    @property
    def rows(self) -> list[tuple]:
        cols = [self.data[c.name] for c in self.columns]
        return [tuple(_py(col[i]) for col in cols) for i in range(len(self))]

    def positions(self, ids: Iterable[int]) -> np.ndarray:
        """Row positions for the given row ids, in the order given."""
        lookup = {int(r): i for i, r in enumerate(self.row_ids)}
        try:
            return np.array([lookup[int(r)] for r in ids], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"unknown row id {exc.args[0]}") from None

    # -- derivation ---------------------------------------------------------

    def take(self, positions: Sequence[int] | np.ndarray) -> "Dataset":
        pos = np.asarray(positions, dtype=np.int64)
        return Dataset(
            self.columns,
            {k: _frozen(v[pos]) for k, v in self.data.items()},
            _frozen(self.row_ids[pos]),
            _frozen(self.duplicate_of[pos]),
        )

    def without_ids(self, ids: Iterable[int]) -> "Dataset":
        drop = np.isin(self.row_ids, np.fromiter((int(i) for i in ids), dtype=np.int64))
        return self.take(np.flatnonzero(~drop))

    def with_values(self, name: str, values: Iterable) -> "Dataset":
        """Copy with one column's values replaced (same kind and row ids)."""
        data = dict(self.data)
        data[name] = values
        return Dataset.build(self.columns, data, self.row_ids, self.duplicate_of)

    def select(self, names: Sequence[str]) -> "Dataset":
        specs = [self.spec(n) for n in names]
        return Dataset(tuple(specs), {n: self.data[n] for n in names}, self.row_ids, self.duplicate_of)

    def drop_duplicates(self) -> "Dataset":
        """Keep the first of each group of rows identical on every column."""
        seen: set[tuple] = set()
        keep = []
        for i, row in enumerate(self.rows):
            if row not in seen:
                seen.add(row)
                keep.append(i)
        return self.take(keep)


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


# -- schema & CSV -------------------------------------------------------------


def load_schema(path: str | Path) -> list[ColumnSpec]:
    """Read a schema document mapping column name to ``{kind, pii, nullable}``.

    JSON is always accepted; ``.yaml``/``.yml`` files are read with PyYAML.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    return schema_from_mapping(doc)


def schema_from_mapping(doc: Mapping) -> list[ColumnSpec]:
    if not isinstance(doc, Mapping) or not doc:
        raise DataError("schema must be a non-empty mapping of column name to attributes")
    specs = []
    for name, attrs in doc.items():
        if isinstance(attrs, str):
            attrs = {"kind": attrs}
        kind = attrs.get("kind")
        kind = {"cat": CATEGORICAL, "cont": CONTINUOUS}.get(kind, kind)
        specs.append(
            ColumnSpec(
                str(name),
                kind,
                pii=bool(attrs.get("pii", False)),
                nullable=bool(attrs.get("nullable", False)),
            )
        )
    return specs


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(
    path: str | Path,
    schema: Sequence[ColumnSpec] | None = None,
    *,
    ignore_extra: bool = False,
) -> Dataset:
    """Load a header-first UTF-8 CSV.

    Without a schema a column is continuous iff every cell parses as a
    finite real, and empty cells are rejected. With a schema the header must
    list exactly the schema's columns (or a superset when ``ignore_extra``).
    Row ids are file positions ``0..n-1`` among the rows kept.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        records = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row, {len(rec)} fields for {len(header)} columns")
            records.append(rec)

    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate header names {dupes}")

    if schema is None:
        specs = []
        for j, name in enumerate(header):
            cells = [r[j] for r in records]
            if any(c == "" for c in cells):
                raise DataError(f"{path}: empty cell in column {name!r} and no schema marks it nullable")
            numeric = bool(cells) and all(_parse_float(c) is not None for c in cells)
            specs.append(ColumnSpec(name, CONTINUOUS if numeric else CATEGORICAL))
    else:
        specs = list(schema)
        names = [s.name for s in specs]
        extra = [h for h in header if h not in names]
        absent = [n for n in names if n not in header]
        if absent or (extra and not ignore_extra):
            raise DataError(f"{path}: header does not match schema (missing {absent}, unexpected {extra})")

    pos = {h: j for j, h in enumerate(header)}
    kept: list[list[str]] = []
    reasons: list[str] = []
    for i, rec in enumerate(records):
        drop = False
        for spec in specs:
            cell = rec[pos[spec.name]]
            if cell == "":
                if not spec.nullable:
                    raise DataError(f"{path}: empty cell in non-nullable column {spec.name!r} (data row {i})")
                if not spec.is_categorical:
                    drop = True
                    reasons.append(f"row {i}: missing {spec.name}")
                    break
            elif not spec.is_categorical and _parse_float(cell) is None:
                raise DataError(f"{path}: non-numeric value {cell!r} in continuous column {spec.name!r}")
        if not drop:
            kept.append(rec)
    if reasons:
        log.warning("%s: dropped %d rows with missing continuous values", path, len(reasons))

    data: dict[str, list] = {}
    for spec in specs:
        j = pos[spec.name]
        if spec.is_categorical:
            data[spec.name] = [r[j] if r[j] != "" else MISSING for r in kept]
        else:
            data[spec.name] = [float(r[j]) for r in kept]
    report = LoadReport(len(records), len(reasons), tuple(reasons))
    return Dataset.build(specs, data, report=report)


def write_csv(d: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names)
        for row in d.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- splitting & replication --------------------------------------------------


def split_members(d: Dataset, non_member_count: int, seed: int) -> tuple[Dataset, Dataset]:
    """Uniformly sample ``non_member_count`` rows as non-members."""
    n = len(d)
    if not (0 < non_member_count < n):
        raise ValueError(f"non_member_count must be in (0, {n}), got {non_member_count}")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=non_member_count, replace=False)] = True
    return d.take(np.flatnonzero(~chosen)), d.take(np.flatnonzero(chosen))


def replicate(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Append one duplicate of ``floor(fraction * n)`` distinct rows.

    Duplicates get fresh row ids above the current maximum and record the
    source row id in ``duplicate_of``.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    n = len(d)
    k = math.floor(fraction * n + 1e-9)
    if k == 0:
        return d
    rng = np.random.default_rng(seed)
    src = np.sort(rng.choice(n, size=k, replace=False))
    start = int(d.row_ids.max()) + 1 if n else 0
    new_ids = np.arange(start, start + k, dtype=np.int64)
    data = {name: np.concatenate([arr, arr[src]]) for name, arr in d.data.items()}
    ids = np.concatenate([d.row_ids, new_ids])
    dup = np.concatenate([d.duplicate_of, d.row_ids[src]])
    return Dataset.build(d.columns, data, ids, dup)


# -- encoding -----------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMatrix:
    design: np.ndarray
    feature_names: tuple[str, ...]
    target_encoding: tuple[str, ...] | None  # class labels, or None for a continuous target


@dataclass(frozen=True)
class Encoder:
    """One-hot / standardization statistics fit on one dataset."""

    known: tuple[str, ...]
    secret: str
    secret_kind: str
    alphabets: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    moments: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    classes: tuple[str, ...] | None = None

    @classmethod
    def fit(cls, d: Dataset, known: Iterable[str], secret: str) -> "Encoder":
        known = set(known)
        if not known:
            raise ValueError("known attribute set is empty")
        if secret in known:
            raise ValueError(f"secret {secret!r} is listed among the known attributes")
        for name in known | {secret}:
            d.spec(name)
        ordered = tuple(n for n in d.names if n in known)
        alphabets, moments = {}, {}
        for name in ordered:
            col = d.column(name)
            if d.spec(name).is_categorical:
                alphabets[name] = tuple(sorted(set(col.tolist())))
            else:
                mu = float(col.mean()) if len(col) else 0.0
                sd = float(col.std()) if len(col) else 0.0
                moments[name] = (mu, sd)
        spec = d.spec(secret)
        classes = tuple(sorted(set(d.column(secret).tolist()))) if spec.is_categorical else None
        return cls(ordered, secret, spec.kind, alphabets, moments, classes)

    @property
    def feature_names(self) -> tuple[str, ...]:
        out = []
        for name in self.known:
            if name in self.alphabets:
                out.extend(f"{name}={v}" for v in self.alphabets[name])
            else:
                out.append(name)
        return tuple(out)

    def transform(self, d: Dataset) -> FeatureMatrix:
        blocks = []
        for name in self.known:
            col = d.column(name)
            if name in self.alphabets:
                alphabet = self.alphabets[name]
                index = {v: j for j, v in enumerate(alphabet)}
                block = np.zeros((len(col), len(alphabet)))
                hit = np.array([index.get(v, -1) for v in col.tolist()], dtype=np.int64)
                rows = np.flatnonzero(hit >= 0)
                block[rows, hit[rows]] = 1.0
            else:
                mu, sd = self.moments[name]
                # constant columns carry no information: encode as zeros
                block = ((col - mu) / sd if sd > 0 else np.zeros(len(col)))[:, None]
            blocks.append(block)
        design = np.hstack(blocks) if blocks else np.zeros((len(d), 0))
        return FeatureMatrix(np.ascontiguousarray(design), self.feature_names, self.classes)

    def target(self, d: Dataset) -> np.ndarray:
        return np.asarray(d.column(self.secret))


def encode(fit_on: Dataset, transform: Dataset, known: Iterable[str], secret: str) -> tuple[FeatureMatrix, np.ndarray]:
    """Encode ``transform`` with statistics fit on ``fit_on`` only."""
    enc = Encoder.fit(fit_on, known, secret)
    return enc.transform(transform), enc.target(transform)
