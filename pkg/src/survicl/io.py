"""Dataset files and real-data ingestion.

Generated datasets are stored as ``name.csv`` (header ``x0..x{d-1},time,event``)
with a sidecar ``name.json`` manifest.  Real datasets are read through a
JSON schema naming the time/event columns and each feature's kind.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SurvivalDataset
from .errors import DomainError, ParseError, SchemaError

logger = logging.getLogger(__name__)

UNKNOWN_PROVENANCE = {"provenance": "unknown"}
OTHER = "other"


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_dataset(ds: SurvivalDataset, path) -> Path:
    """Write ``path`` (CSV) plus the manifest next to it; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = ds.n_features
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(d)] + ["time", "event"])
        for i in range(ds.n):
            w.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.time[i])), int(ds.event[i])])
    manifest_path(path).write_text(json.dumps(_jsonable(ds.manifest), sort_keys=True, indent=1) + "\n")
    return path


def _number(cell: str, row: int, column: str, allow_missing: bool) -> float:
    cell = cell.strip()
    if cell == "" and allow_missing:
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", row=row, column=column) from None
    if math.isnan(value) and not allow_missing:
        raise ParseError("missing value", row=row, column=column)
    return value


def read_dataset(path) -> SurvivalDataset:
    """Parse a dataset CSV; rows are numbered from 1 after the header."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", row=0) from None
    d = len(header) - 2
    expected = [f"x{j}" for j in range(max(d, 0))] + ["time", "event"]
    if d < 0 or [h.strip() for h in header] != expected:
        raise ParseError(f"malformed header {header!r}; expected x0..x{{d-1}},time,event", row=0)
    X, T, E = [], [], []
    for row_no, cells in enumerate(reader, start=1):
        if not cells:
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(cells)}", row=row_no)
        X.append([_number(c, row_no, f"x{j}", True) for j, c in enumerate(cells[:d])])
        t = _number(cells[d], row_no, "time", False)
        if not (math.isfinite(t) and t > 0):
            raise ParseError(f"time must be finite and > 0, got {cells[d]!r}", row=row_no, column="time")
        e = _number(cells[d + 1], row_no, "event", False)
        if e not in (0.0, 1.0):
            raise ParseError(f"event must be 0 or 1, got {cells[d + 1]!r}", row=row_no, column="event")
        T.append(t)
        E.append(int(e))
    if not T:
        raise ParseError("no data rows", row=1)
    mpath = manifest_path(path)
    if mpath.exists():
        try:
            manifest = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest {mpath.name} is not valid JSON: {exc}") from exc
    else:
        manifest = dict(UNKNOWN_PROVENANCE)
    X = np.asarray(X, dtype=np.float64).reshape(len(T), d)
    return SurvivalDataset(X, np.asarray(T), np.asarray(E, dtype=np.int8), manifest)


# ------------------------------------------------------------------ schemas

@dataclass
class FeatureSpec:
    name: str
    kind: str = "numeric"

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"feature {self.name!r}: kind must be numeric or categorical")


@dataclass
class DatasetSchema:
    features: list[FeatureSpec]
    time: str
    event: str
    event_values: list = field(default_factory=lambda: [1])
    encoding: str = "one_hot"
    missing: list[str] = field(default_factory=lambda: ["", "NA"])
    name: str | None = None
    source: str | None = None

    def __post_init__(self):
        self.features = [f if isinstance(f, FeatureSpec) else FeatureSpec(**f) for f in self.features]
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if self.time == self.event or self.time in names or self.event in names:
            raise SchemaError("time and event columns must be distinct from each other and from features")
        if self.encoding not in ("one_hot", "ordinal"):
            raise SchemaError("encoding must be one_hot or ordinal")

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        try:
            data = json.loads(Path(path).read_text())
            return cls(**data)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise SchemaError(f"cannot load schema {path}: {exc}") from exc


@dataclass
class CategoricalEncoder:
    """Sorted category codes; values never seen map to the explicit ``other`` code."""

    categories: list[str]

    @property
    def other_code(self) -> int:
        return len(self.categories)

    def codes(self, values) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.categories)}
        return np.array([math.nan if v is None else lookup.get(v, self.other_code) for v in values])

    def one_hot(self, values) -> np.ndarray:
        """Indicators for every category but the first (reference), plus ``other``."""
        codes = self.codes(values)
        out = np.zeros((codes.size, len(self.categories)))
        for k in range(1, self.other_code + 1):
            out[:, k - 1] = codes == k
        out[np.isnan(codes)] = math.nan
        return out

    def column_names(self, feature: str) -> list[str]:
        return [f"{feature}={c}" for c in self.categories[1:]] + [f"{feature}={OTHER}"]


def ingest_real(path, schema: DatasetSchema, categories: dict | None = None) -> SurvivalDataset:
    """Read a real dataset according to ``schema``.

    Missing numeric cells stay NaN (imputation happens per CV training
    split).  ``categories`` reuses an earlier ingestion's category lists so
    that codes are shared between, e.g., a context and a query file.
    """
    path = Path(path)
    try:
        with path.open(newline="") as f:
            rows = list(csv.DictReader(f))
            header = rows and list(rows[0].keys())
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path.name}: no data rows")
    declared = [f.name for f in schema.features] + [schema.time, schema.event]
    missing_cols = [c for c in declared if c not in header]
    if missing_cols:
        raise SchemaError(f"{path.name}: declared columns absent from file: {missing_cols}")
    markers = set(schema.missing)
    event_values = {str(v) for v in schema.event_values}

    time = np.empty(len(rows))
    event = np.empty(len(rows), dtype=np.int8)
    for i, r in enumerate(rows, start=1):
        try:
            t = float(r[schema.time])
        except (TypeError, ValueError):
            raise ParseError(f"non-numeric time {r[schema.time]!r}", row=i, column=schema.time) from None
        if not (math.isfinite(t) and t > 0):
            raise ParseError(f"time must be > 0, got {r[schema.time]!r}", row=i, column=schema.time)
        time[i - 1] = t
        raw = (r[schema.event] or "").strip()
        if raw in markers:
            raise ParseError("missing event indicator", row=i, column=schema.event)
        norm = raw
        try:
            norm = str(int(float(raw)))
        except ValueError:
            pass
        event[i - 1] = 1 if (raw in event_values or norm in event_values) else 0

    blocks, names, cats = [], [], {}
    for spec in schema.features:
        values = [(r[spec.name] or "").strip() for r in rows]
        if spec.kind == "numeric":
            col = np.empty(len(rows))
            for i, v in enumerate(values, start=1):
                if v in markers:
                    col[i - 1] = math.nan
                    continue
                try:
                    col[i - 1] = float(v)
                except ValueError:
                    raise ParseError(f"non-numeric value {v!r}", row=i, column=spec.name) from None
            blocks.append(col[:, None])
            names.append(spec.name)
            continue
        vals = [None if v in markers else v for v in values]
        if categories and spec.name in categories:
            enc = CategoricalEncoder(list(categories[spec.name]))
        else:
            enc = CategoricalEncoder(sorted({v for v in vals if v is not None}))
        cats[spec.name] = enc.categories
        if schema.encoding == "ordinal":
            blocks.append(enc.codes(vals)[:, None])
            names.append(spec.name)
        else:
            blocks.append(enc.one_hot(vals))
            names.extend(enc.column_names(spec.name))
    X = np.concatenate(blocks, axis=1) if blocks else np.zeros((len(rows), 0))
    n_missing = int(np.isnan(X).sum())
    logger.info("ingested %s: %d rows, %d feature columns, %d missing cells", path.name, X.shape[0], X.shape[1], n_missing)
    manifest = {
        "provenance": schema.source or str(path.name),
        "schema": schema.name,
        "feature_names": names,
        "categories": cats,
        "missing_cells": n_missing,
        "n_rows": int(X.shape[0]),
    }
    return SurvivalDataset(X, time, event, manifest)


def impute_median(train_X, *others):
    """Fill NaNs with training-column medians (0 when a column is all missing)."""
    train_X = np.asarray(train_X, dtype=np.float64)
    with np.errstate(all="ignore"):
        med = np.array([np.nanmedian(c) if np.any(~np.isnan(c)) else 0.0 for c in train_X.T])
    out = []
    for M in (train_X,) + others:
        M = np.array(M, dtype=np.float64, copy=True)
        idx = np.isnan(M)
        if idx.any():
            M[idx] = np.broadcast_to(med, M.shape)[idx]
        out.append(M)
    return out if others else out[0]


def vendored_path(name: str) -> Path:
    """Location of a bundled dataset file (``veteran.csv``, ``lung.json``, ...)."""
    path = Path(__file__).parent / "data" / name
    if not path.exists():
        raise DomainError(f"no bundled file {name!r}")
    return path


def load_vendored(name: str) -> SurvivalDataset:
    return ingest_real(vendored_path(f"{name}.csv"), DatasetSchema.load(vendored_path(f"{name}.json")))
