"""CSV ingestion and export."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import CATEGORICAL, NUMERIC, Dataset
from .errors import InvalidDataError, LabelDomainError


@dataclass(frozen=True)
class DataSchema:
    """How to read a CSV: which column holds labels / ids, and kind overrides.

    A label column that is absent from the file yields an unlabeled dataset.
    Columns without an override are numeric unless none of their non-empty
    cells parse as numbers.
    """

    label_column: str | None = "label"
    id_column: str | None = None
    kinds: Mapping[str, str] = field(default_factory=dict)


def _to_float(cell: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def read_csv_text(text: str, schema: DataSchema = DataSchema()) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidDataError("CSV has no header row") from None
    header = [h.strip() for h in header]
    if not any(header):
        raise InvalidDataError("CSV has an empty header row")
    if len(set(header)) != len(header):
        raise InvalidDataError("CSV header has duplicate column names")
    rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise InvalidDataError(f"row {i + 2} has {len(r)} cells, header has {len(header)}")
    cols = {h: [r[i].strip() for r in rows] for i, h in enumerate(header)}

    labels = None
    if schema.label_column is not None and schema.label_column in cols:
        raw = cols.pop(schema.label_column)
        bad = [c for c in raw if c not in ("0", "1")]
        if bad:
            raise LabelDomainError(f"label column {schema.label_column!r} holds {bad[0]!r}; expected 0 or 1")
        labels = np.array([int(c) for c in raw], dtype=np.int64)
    ids = None
    if schema.id_column is not None:
        if schema.id_column not in cols:
            raise InvalidDataError(f"id column {schema.id_column!r} not in header")
        ids = cols.pop(schema.id_column)
        if len(set(ids)) != len(ids):
            raise InvalidDataError(f"id column {schema.id_column!r} has duplicate values")

    names, kinds, columns = [], [], []
    for name, raw in cols.items():
        kind = schema.kinds.get(name)
        if kind is None:
            nonempty = [c for c in raw if c != ""]
            parsed = [_to_float(c) for c in nonempty]
            kind = CATEGORICAL if nonempty and all(math.isnan(v) for v in parsed) else NUMERIC
        if kind == NUMERIC:
            columns.append(np.array([_to_float(c) if c != "" else math.nan for c in raw], dtype=np.float64))
        elif kind == CATEGORICAL:
            columns.append(np.array([c if c != "" else None for c in raw], dtype=object))
        else:
            raise InvalidDataError(f"unknown kind {kind!r} for column {name!r}")
        names.append(name)
        kinds.append(kind)
    return Dataset(tuple(names), tuple(kinds), tuple(columns), labels,
                   ids if ids is not None else [str(i) for i in range(len(rows))])


def load_csv(path: str | os.PathLike, schema: DataSchema = DataSchema()) -> Dataset:
    """Read a UTF-8, comma-separated file with a single header row."""
    with open(path, encoding="utf-8", newline="") as fh:
        return read_csv_text(fh.read(), schema)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def to_csv_text(data: Dataset, label_column: str = "label", id_column: str | None = "id") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ([id_column] if id_column else []) + list(data.feature_names)
    if data.has_labels:
        header.append(label_column)
    w.writerow(header)
    for i in range(data.n_rows):
        row = [data.instance_ids[i]] if id_column else []
        row.extend(_cell(c[i]) for c in data.columns)
        if data.has_labels:
            row.append(str(int(data.labels[i])))
        w.writerow(row)
    return buf.getvalue()


def save_csv(data: Dataset, path: str | os.PathLike, label_column: str = "label",
             id_column: str | None = "id") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(data, label_column, id_column))
