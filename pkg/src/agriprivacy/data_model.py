"""Feature tables: schema, CSV ingestion, standardization, partitioning and
a synthetic generator for farmers-market style data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import derive_rng

IDENTIFIER = "identifier"
CONTINUOUS = "continuous"
BINARY = "binary-indicator"
KINDS = (IDENTIFIER, CONTINUOUS, BINARY)


class DataError(ValueError):
    """Base class for table validation errors."""


class SchemaError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class CellParseError(DataError):
    pass


class DuplicatePseudonymError(DataError):
    pass


class EmptyTableError(DataError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(*c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if any(not n for n in names):
            raise SchemaError("column names must be non-empty")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        for c in cols:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
        n_id = sum(c.kind == IDENTIFIER for c in cols)
        if n_id != 1:
            raise SchemaError(f"schema needs exactly one identifier column, found {n_id}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def identifier(self) -> str:
        return next(c.name for c in self.columns if c.kind == IDENTIFIER)

    @property
    def feature_columns(self) -> list[Column]:
        """Non-identifier columns, in schema order (the columns of ``values``)."""
        return [c for c in self.columns if c.kind != IDENTIFIER]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    def indices(self, kind: str) -> list[int]:
        return [j for j, c in enumerate(self.feature_columns) if c.kind == kind]

    def to_dict(self) -> dict:
        return {"columns": [{"name": c.name, "kind": c.kind} for c in self.columns]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(tuple(Column(c["name"], c["kind"]) for c in d["columns"]))


VENDOR_TYPES = ("F&V", "M&S", "D", "Eggs", "P&F", "N&L", "VA", "PF", "CAS")

FARMERS_MARKET_SCHEMA = Schema(
    (Column("ID", IDENTIFIER), Column("Miles from Market", CONTINUOUS))
    + tuple(Column(v, BINARY) for v in VENDOR_TYPES)
    + (Column("Sales", CONTINUOUS), Column("#Visitors", CONTINUOUS))
)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Rectangular numeric table keyed by record pseudonyms.

    ``values`` holds the non-identifier columns in schema order. The array is
    made read-only on construction.
    """

    schema: Schema
    pseudonyms: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        pseudonyms = tuple(str(p) for p in self.pseudonyms)
        values = np.array(self.values, dtype=float, copy=True)
        d = len(self.schema.feature_columns)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, d)
        if values.ndim != 2 or values.shape[1] != d:
            raise SchemaError(f"values shape {values.shape} does not match {d} feature columns")
        if values.shape[0] != len(pseudonyms):
            raise SchemaError(f"{values.shape[0]} rows but {len(pseudonyms)} pseudonyms")
        seen = set()
        for i, p in enumerate(pseudonyms):
            if p in seen:
                raise DuplicatePseudonymError(f"row {i}: duplicate pseudonym {p!r}")
            seen.add(p)
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise CellParseError(f"row {i}, column {self.schema.feature_names[j]!r}: non-finite value")
        for j in self.schema.indices(BINARY):
            bad = np.flatnonzero((values[:, j] != 0) & (values[:, j] != 1))
            if bad.size:
                raise CellParseError(
                    f"row {bad[0]}, column {self.schema.feature_names[j]!r}: "
                    f"binary indicator must be 0 or 1, got {values[bad[0], j]!r}"
                )
        values.setflags(write=False)
        object.__setattr__(self, "pseudonyms", pseudonyms)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.feature_names.index(name)]

    def take(self, rows) -> "FeatureTable":
        rows = list(rows)
        return FeatureTable(self.schema, [self.pseudonyms[i] for i in rows], self.values[rows])

    def with_values(self, values) -> "FeatureTable":
        return FeatureTable(self.schema, self.pseudonyms, values)

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.pseudonyms == other.pseudonyms
            and np.array_equal(self.values, other.values)
        )


def _format_cell(x: float, kind: str) -> str:
    if kind == BINARY:
        return str(int(x))
    return repr(float(x))


def load_csv(path, schema: Schema) -> FeatureTable:
    """Read a UTF-8 CSV whose header contains every schema column.

    Extra columns are ignored. Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTableError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in schema.names:
            if name not in header:
                raise MissingColumnError(f"{path}: missing column {name!r}")
        pos = {name: header.index(name) for name in schema.names}
        pseudonyms, rows = [], []
        seen = {}
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < len(header):
                raise CellParseError(f"{path}: row {lineno}: expected {len(header)} cells, got {len(record)}")
            pid = record[pos[schema.identifier]].strip()
            if not pid:
                raise CellParseError(f"{path}: row {lineno}, column {schema.identifier!r}: empty identifier")
            if pid in seen:
                raise DuplicatePseudonymError(
                    f"{path}: row {lineno}: duplicate pseudonym {pid!r} (first seen at row {seen[pid]})"
                )
            seen[pid] = lineno
            row = []
            for col in schema.feature_columns:
                cell = record[pos[col.name]].strip()
                try:
                    x = float(cell)
                except ValueError:
                    raise CellParseError(
                        f"{path}: row {lineno}, column {col.name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(x):
                    raise CellParseError(f"{path}: row {lineno}, column {col.name!r}: non-finite value {cell!r}")
                if col.kind == BINARY and x not in (0.0, 1.0):
                    raise CellParseError(f"{path}: row {lineno}, column {col.name!r}: indicator must be 0 or 1")
                row.append(x)
            pseudonyms.append(pid)
            rows.append(row)
    if not rows:
        raise EmptyTableError(f"{path}: empty table")
    return FeatureTable(schema, pseudonyms, np.array(rows, dtype=float))


def write_csv(table: FeatureTable, path) -> None:
    kinds = {c.name: c.kind for c in table.schema.columns}
    feat = table.schema.feature_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.schema.names)
        for pid, row in zip(table.pseudonyms, table.values):
            cells = dict(zip(feat, (_format_cell(x, kinds[name]) for name, x in zip(feat, row))))
            cells[table.schema.identifier] = pid
            w.writerow([cells[name] for name in table.schema.names])


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        scales = np.array(self.scales, dtype=float)
        if means.shape != scales.shape or means.ndim != 1:
            raise DataError("means and scales must be vectors of equal length")
        if np.any(scales <= 0):
            raise DataError("scales must be strictly positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(d["means"], d["scales"])


def fit_standardizer(table: FeatureTable) -> StandardizationParams:
    """Column means and population standard deviations.

    Zero-variance columns get scale 1, so they standardize to zeros.
    """
    if table.n < 2:
        raise DataError(f"insufficient rows: need at least 2, got {table.n}")
    means = table.values.mean(axis=0)
    scales = table.values.std(axis=0)
    scales[scales == 0] = 1.0
    return StandardizationParams(means, scales)


def apply_standardizer(params: StandardizationParams, table: FeatureTable) -> FeatureTable:
    if params.means.shape[0] != table.d:
        raise DataError(f"dimension mismatch: params for {params.means.shape[0]} columns, table has {table.d}")
    z = (table.values - params.means) / params.scales
    # standardized indicators are no longer 0/1, so the result carries an all-continuous schema
    cols = tuple(Column(c.name, CONTINUOUS if c.kind == BINARY else c.kind) for c in table.schema.columns)
    return FeatureTable(Schema(cols), table.pseudonyms, z)


def partition(table: FeatureTable, parts: int, seed: int) -> list[FeatureTable]:
    """Random balanced split into ``parts`` disjoint tables.

    Sizes differ by at most one; larger parts come first.
    """
    if parts < 2:
        raise DataError(f"parts must be >= 2, got {parts}")
    if parts > table.n:
        raise DataError(f"cannot split {table.n} rows into {parts} parts")
    order = derive_rng(seed, "partition").permutation(table.n)
    return [table.take(sorted(chunk)) for chunk in np.array_split(order, parts)]


@dataclass
class ClusterSpec:
    centroid: Sequence[float]
    spread: float
    weight: float
    indicator_probs: Sequence[float] | None = None

    def __post_init__(self):
        self.centroid = tuple(float(x) for x in self.centroid)
        if self.indicator_probs is not None:
            self.indicator_probs = tuple(float(p) for p in self.indicator_probs)

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSpec":
        return cls(d["centroid"], d["spread"], d["weight"], d.get("indicator_probs"))

    def to_dict(self) -> dict:
        out = {"centroid": list(self.centroid), "spread": self.spread, "weight": self.weight}
        if self.indicator_probs is not None:
            out["indicator_probs"] = list(self.indicator_probs)
        return out


@dataclass
class GeneratorConfig:
    """JSON-backed generator config: ``{"n":…, "clusters":[…], "seed":…}``."""

    n: int
    clusters: list[ClusterSpec]
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        d = json.loads(text)
        extra = {k: v for k, v in d.items() if k not in ("n", "clusters", "seed")}
        return cls(int(d["n"]), [ClusterSpec.from_dict(c) for c in d["clusters"]], int(d.get("seed", 0)), extra)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "clusters": [c.to_dict() for c in self.clusters], "seed": self.seed, **self.extra})


DEFAULT_INDICATOR_PROB = 0.2


def generate_labeled_market(n: int, cluster_spec, seed: int, schema: Schema = FARMERS_MARKET_SCHEMA,
                            prefix: str = "R") -> tuple[FeatureTable, np.ndarray]:
    """Draw ``n`` rows from a Gaussian mixture; also return the component of each row.

    Continuous columns follow N(centroid, spread²) per cluster; indicator
    columns are Bernoulli with the cluster's ``indicator_probs``.
    """
    specs = [c if isinstance(c, ClusterSpec) else ClusterSpec.from_dict(c) for c in cluster_spec]
    if not specs:
        raise DataError("cluster_spec must not be empty")
    cont = schema.indices(CONTINUOUS)
    binary = schema.indices(BINARY)
    for c in specs:
        if c.weight <= 0:
            raise DataError(f"cluster weight must be positive, got {c.weight}")
        if c.spread < 0:
            raise DataError(f"cluster spread must be non-negative, got {c.spread}")
        if len(c.centroid) != len(cont):
            raise DataError(f"centroid has {len(c.centroid)} entries, schema has {len(cont)} continuous columns")
        if c.indicator_probs is not None and len(c.indicator_probs) != len(binary):
            raise DataError(f"indicator_probs needs {len(binary)} entries")
    rng = derive_rng(seed, "synthetic-market")
    w = np.array([c.weight for c in specs], dtype=float)
    labels = rng.choice(len(specs), size=n, p=w / w.sum())
    values = np.zeros((n, len(schema.feature_columns)))
    for i, c in enumerate(specs):
        rows = np.flatnonzero(labels == i)
        values[np.ix_(rows, cont)] = np.asarray(c.centroid, dtype=float) + c.spread * rng.standard_normal((rows.size, len(cont)))
        probs = np.full(len(binary), DEFAULT_INDICATOR_PROB) if c.indicator_probs is None else np.asarray(c.indicator_probs)
        values[np.ix_(rows, binary)] = (rng.random((rows.size, len(binary))) < probs).astype(float)
    pseudonyms: list[str] = []
    seen: set[str] = set()
    while len(pseudonyms) < n:
        token = prefix + rng.bytes(6).hex()
        if token not in seen:
            seen.add(token)
            pseudonyms.append(token)
    return FeatureTable(schema, pseudonyms, values), labels


def generate_synthetic_market(n: int, cluster_spec, seed: int, schema: Schema = FARMERS_MARKET_SCHEMA) -> FeatureTable:
    return generate_labeled_market(n, cluster_spec, seed, schema)[0]
