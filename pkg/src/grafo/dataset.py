"""Typed mixed continuous/categorical data: CSV ingestion and -1/+1 recoding."""
from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

log = logging.getLogger(__name__)

NA_TOKENS = frozenset({"", "NA"})

SCHEMA_JSON = {
    "type": "object",
    "required": ["columns"],
    "properties": {
        "columns": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["continuous", "categorical"]},
                    "levels": {"type": "array", "items": {"type": "string"}},
                },
            },
        }
    },
}


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class DegenerateColumnError(DatasetError):
    pass


class EmptyDataError(DatasetError):
    pass


@dataclass(frozen=True)
class ColumnType:
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == "continuous":
            if self.levels:
                raise SchemaError("continuous column cannot declare levels")
        elif self.kind == "categorical":
            if len(self.levels) < 2:
                raise SchemaError("categorical column needs at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"duplicate level labels in {self.levels}")
        else:
            raise SchemaError(f"unknown column kind {self.kind!r}")

    @property
    def is_categorical(self):
        return self.kind == "categorical"

    @property
    def n_levels(self):
        return len(self.levels)

    def to_json(self, name):
        out = {"name": name, "kind": self.kind}
        if self.is_categorical:
            out["levels"] = list(self.levels)
        return out


def Continuous():
    return ColumnType("continuous")


def Categorical(levels):
    return ColumnType("categorical", tuple(str(v) for v in levels))


@dataclass(frozen=True)
class MixedDataset:
    """n x p table; categorical cells hold the level index as a float."""

    names: tuple[str, ...]
    types: tuple[ColumnType, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "types", tuple(self.types))
        if values.ndim != 2 or values.shape[1] != len(self.names) or len(self.types) != len(self.names):
            raise DatasetError("values, names and types disagree in shape")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def n_levels(self):
        """Level count per column, 0 for continuous columns."""
        return np.array([t.n_levels if t.is_categorical else 0 for t in self.types], dtype=np.int32)

    @property
    def is_categorical(self):
        return np.array([t.is_categorical for t in self.types], dtype=bool)

    def take(self, rows):
        """Row subset; skips validation because subsamples may be degenerate."""
        return MixedDataset(self.names, self.types, self.values[np.asarray(rows)])

    def degenerate_columns(self):
        return [j for j in range(self.p) if np.unique(self.values[:, j]).size < 2]

    def validate(self):
        if self.n == 0:
            raise EmptyDataError("no rows")
        if self.n < 2:
            raise EmptyDataError(f"need at least 2 rows, got {self.n}")
        if not np.all(np.isfinite(self.values)):
            raise DatasetError("non-finite cell")
        for j, (name, t) in enumerate(zip(self.names, self.types)):
            col = self.values[:, j]
            if t.is_categorical:
                bad = (col != np.round(col)) | (col < 0) | (col >= t.n_levels)
                if bad.any():
                    raise SchemaError(f"column {name!r}: cell outside declared levels at row {int(np.argmax(bad)) + 1}")
            if np.unique(col).size < 2:
                raise DegenerateColumnError(f"column {name!r} has fewer than 2 distinct values")
        return self

    def schema(self):
        return {"columns": [t.to_json(nm) for nm, t in zip(self.names, self.types)]}

    def cell_text(self, i, j):
        t = self.types[j]
        v = self.values[i, j]
        return t.levels[int(v)] if t.is_categorical else repr(float(v))


def parse_schema(obj):
    """Column declarations from a schema dict (or path to a JSON file)."""
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    try:
        jsonschema.validate(obj, SCHEMA_JSON)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"schema {where}: {exc.message}") from None
    cols = []
    for c in obj["columns"]:
        if c["kind"] == "continuous":
            cols.append((c["name"], Continuous()))
        else:
            cols.append((c["name"], Categorical(c.get("levels", ()))))
    names = [n for n, _ in cols]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    return cols


def ingest_csv(path, schema):
    """Read a CSV with a header row; rows with any missing cell are dropped.

    Returns ``(dataset, n_dropped)``.
    """
    cols = parse_schema(schema)
    names = [n for n, _ in cols]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: empty file") from None
        if sorted(header) != sorted(names) or len(header) != len(names):
            raise SchemaError(f"{path}: header {header} does not match schema columns {names}")
        pos = [header.index(nm) for nm in names]
        rows, dropped = [], 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
            cells = [rec[k].strip() for k in pos]
            if any(c in NA_TOKENS for c in cells):
                dropped += 1
                continue
            row = []
            for (name, t), cell in zip(cols, cells):
                if t.is_categorical:
                    try:
                        row.append(float(t.levels.index(cell)))
                    except ValueError:
                        raise SchemaError(f"column {name!r}, line {lineno}: unknown level {cell!r}") from None
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise SchemaError(f"column {name!r}, line {lineno}: not a number: {cell!r}") from None
            rows.append(row)
    if not rows:
        raise EmptyDataError(f"{path}: no complete rows remain ({dropped} dropped)")
    data = MixedDataset(names, [t for _, t in cols], np.array(rows, dtype=np.float64))
    data.validate()
    if dropped:
        log.info("%d row%s dropped (casewise deletion)", dropped, "" if dropped == 1 else "s")
    return data, dropped


def write_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names)
        for i in range(data.n):
            w.writerow([data.cell_text(i, j) for j in range(data.p)])


def write_schema(data, path):
    Path(path).write_text(json.dumps(data.schema(), indent=2) + "\n")


# ---------------------------------------------------------------- dichotomization


@dataclass(frozen=True)
class BinaryDataset:
    """n x p matrix of -1/+1 cells plus the rule that produced each column."""

    names: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    mapping: tuple[dict, ...] = ()

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "mapping", tuple(self.mapping))
        if not np.all(np.abs(values) == 1.0):
            raise DatasetError("BinaryDataset cells must be -1 or +1")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def take(self, rows):
        return BinaryDataset(self.names, self.values[np.asarray(rows)], self.mapping)


_PM1_LABELS = ({"-1", "1"}, {"-1", "+1"})


def _is_pm1_labels(levels):
    return len(levels) == 2 and set(levels) in _PM1_LABELS


def best_bipartition(counts):
    """Level subset sent to -1 that best balances the two sides.

    Searches every non-trivial bipartition; ties go to the lexicographically
    smallest tuple of level indices.
    """
    C = len(counts)
    total = int(sum(counts))
    best = None
    for size in range(1, C):
        for subset in itertools.combinations(range(C), size):
            minus = sum(counts[k] for k in subset)
            key = (abs(total - 2 * minus), subset)
            if best is None or key < best:
                best = key
    return best[1]


def dichotomize(data):
    """Recode every column to -1/+1: median split or most balanced level split."""
    if isinstance(data, BinaryDataset):
        return data
    out = np.empty_like(data.values)
    mapping = []
    for j, t in enumerate(data.types):
        col = data.values[:, j]
        if t.is_categorical:
            if _is_pm1_labels(t.levels):
                minus = (t.levels.index("-1"),)
                rule = {"rule": "identity", "minus": ["-1"]}
            else:
                counts = np.bincount(col.astype(np.int64), minlength=t.n_levels)
                minus = best_bipartition(counts.tolist())
                rule = {"rule": "partition", "minus": [t.levels[k] for k in minus]}
            out[:, j] = np.where(np.isin(col, minus), -1.0, 1.0)
        elif np.all(np.abs(col) == 1.0):
            out[:, j] = col
            rule = {"rule": "identity"}
        else:
            med = float(np.median(col))
            out[:, j] = np.where(col <= med, -1.0, 1.0)
            rule = {"rule": "median", "median": med}
        mapping.append(rule)
    return BinaryDataset(data.names, out, mapping)


def apply_mapping(data, mapping):
    """Re-apply recorded recoding rules to a MixedDataset."""
    out = np.empty_like(data.values)
    for j, (t, rule) in enumerate(zip(data.types, mapping)):
        col = data.values[:, j]
        if rule["rule"] == "median":
            out[:, j] = np.where(col <= rule["median"], -1.0, 1.0)
        elif t.is_categorical:
            minus = [t.levels.index(lv) for lv in rule["minus"]]
            out[:, j] = np.where(np.isin(col, minus), -1.0, 1.0)
        else:
            out[:, j] = col
    return BinaryDataset(data.names, out, mapping)
