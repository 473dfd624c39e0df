"""Schema-aware tabular datasets with categorical and continuous attributes.

A :class:`Dataset` stores its cells in a single ``float64`` matrix: categorical
cells hold the index of the symbol in the attribute's value universe and
continuous cells hold the raw value. Rows form a multiset, so duplicates are
kept as-is. Datasets are treated as immutable; every operation returns a new
object.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import yaml

from .errors import (
    MissingFile,
    NonNumericContinuous,
    RowArityMismatch,
    SampleTooLarge,
    SchemaMismatch,
    SchemaParseError,
    UnknownCategoryValue,
)

Cell = Union[str, float]
Record = tuple  # positional cells aligned with the schema


@dataclass(frozen=True)
class Categorical:
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise SchemaParseError("categorical universe must be non-empty")
        if len(set(self.values)) != len(self.values):
            raise SchemaParseError(f"duplicate symbols in categorical universe {self.values!r}")


@dataclass(frozen=True)
class Continuous:
    observed_min: float = 0.0
    observed_max: float = 0.0

    def __post_init__(self):
        if not self.observed_min <= self.observed_max:
            raise SchemaParseError(
                f"continuous bounds out of order: {self.observed_min} > {self.observed_max}"
            )


AttributeKind = Union[Categorical, Continuous]


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: AttributeKind

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.kind, Categorical)


@dataclass(frozen=True)
class Schema:
    attributes: tuple

    # derived lookups, filled in __post_init__
    _lookup: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.attributes) == 0:
            raise SchemaParseError("schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaParseError(f"duplicate attribute names in {names!r}")
        lookup = tuple(
            {v: i for i, v in enumerate(a.kind.values)} if a.is_categorical else None
            for a in self.attributes
        )
        object.__setattr__(self, "_lookup", lookup)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list:
        return [a.name for a in self.attributes]

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([a.is_categorical for a in self.attributes], dtype=bool)

    @property
    def categorical_indices(self) -> list:
        return [i for i, a in enumerate(self.attributes) if a.is_categorical]

    @property
    def continuous_indices(self) -> list:
        return [i for i, a in enumerate(self.attributes) if not a.is_categorical]

    @property
    def cardinalities(self) -> list:
        """Universe size per attribute (``0`` for continuous attributes)."""
        return [len(a.kind.values) if a.is_categorical else 0 for a in self.attributes]

    def structure_key(self) -> tuple:
        """Names, kinds and universes, ignoring continuous bounds."""
        return tuple(
            (a.name, a.kind.values if a.is_categorical else "continuous") for a in self.attributes
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256(repr(self.structure_key()).encode())
        return h.hexdigest()[:16]

    def compatible(self, other: "Schema") -> bool:
        return self.structure_key() == other.structure_key()

    def with_bounds(self, data: np.ndarray) -> "Schema":
        """Copy of the schema whose continuous bounds are recomputed from ``data``."""
        attrs = []
        for j, a in enumerate(self.attributes):
            if a.is_categorical:
                attrs.append(a)
            elif len(data) == 0:
                attrs.append(Attribute(a.name, Continuous()))
            else:
                col = data[:, j]
                attrs.append(Attribute(a.name, Continuous(float(col.min()), float(col.max()))))
        return Schema(tuple(attrs))

    def code_of(self, j: int, symbol) -> int:
        return self._lookup[j][symbol]

    def row_from_record(self, record: Sequence) -> np.ndarray:
        if len(record) != self.n_attributes:
            raise SchemaMismatch(f"record has {len(record)} cells, schema has {self.n_attributes}")
        row = np.empty(self.n_attributes)
        for j, (a, value) in enumerate(zip(self.attributes, record)):
            if a.is_categorical:
                try:
                    row[j] = self._lookup[j][value]
                except KeyError:
                    raise SchemaMismatch(
                        f"value {value!r} not in universe of attribute {a.name!r}"
                    ) from None
            else:
                v = float(value)
                if not math.isfinite(v):
                    raise SchemaMismatch(f"non-finite value for attribute {a.name!r}")
                row[j] = v
        return row

    def record_from_row(self, row: Sequence) -> Record:
        return tuple(
            a.kind.values[int(v)] if a.is_categorical else float(v)
            for a, v in zip(self.attributes, row)
        )

    def to_dict(self) -> dict:
        out = []
        for a in self.attributes:
            if a.is_categorical:
                out.append({"name": a.name, "kind": "categorical", "values": list(a.kind.values)})
            else:
                out.append({"name": a.name, "kind": "continuous"})
        return {"attributes": out}

    @classmethod
    def from_dict(cls, spec) -> "Schema":
        if not isinstance(spec, dict) or not isinstance(spec.get("attributes"), list):
            raise SchemaParseError("schema must be a mapping with an 'attributes' list")
        attrs = []
        for pos, entry in enumerate(spec["attributes"]):
            if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
                raise SchemaParseError(f"attribute #{pos}: needs 'name' and 'kind'")
            name, kind = str(entry["name"]), entry["kind"]
            if kind == "categorical":
                values = entry.get("values")
                if not isinstance(values, list):
                    raise SchemaParseError(f"attribute {name!r}: categorical needs a 'values' list")
                attrs.append(Attribute(name, Categorical(tuple(str(v) for v in values))))
            elif kind == "continuous":
                attrs.append(Attribute(name, Continuous()))
            else:
                raise SchemaParseError(f"attribute {name!r}: unknown kind {kind!r}")
        return cls(tuple(attrs))


def load_schema(path) -> Schema:
    if not os.path.exists(path):
        raise MissingFile(f"schema file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            spec = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaParseError(f"{path}: {exc}") from exc
    return Schema.from_dict(spec)


def write_schema(schema: Schema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema.to_dict(), fh, sort_keys=False)


class Dataset:
    """An immutable multiset of records sharing a :class:`Schema`."""

    __slots__ = ("schema", "data", "row_ids")

    def __init__(self, schema: Schema, data: np.ndarray, row_ids: np.ndarray | None = None):
        data = np.asarray(data, dtype=np.float64).reshape(-1, schema.n_attributes)
        data.setflags(write=False)
        if row_ids is None:
            row_ids = np.arange(len(data))
        row_ids = np.asarray(row_ids, dtype=np.int64)
        row_ids.setflags(write=False)
        self.schema = schema
        self.data = data
        self.row_ids = row_ids

    @classmethod
    def from_records(cls, schema: Schema, records: Iterable[Sequence]) -> "Dataset":
        rows = [schema.row_from_record(r) for r in records]
        data = np.array(rows) if rows else np.empty((0, schema.n_attributes))
        return cls(schema, data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, F={self.schema.n_attributes})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema.compatible(other.schema)
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None

    def record(self, i: int) -> Record:
        return self.schema.record_from_row(self.data[i])

    def records(self) -> list:
        return [self.schema.record_from_row(r) for r in self.data]

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.data[indices], self.row_ids[indices])

    def column(self, j: int) -> np.ndarray:
        return self.data[:, j]

    def validate(self) -> None:
        """Re-check every cell against the schema (used on generator output)."""
        for j, a in enumerate(self.schema.attributes):
            col = self.data[:, j]
            if not np.all(np.isfinite(col)):
                raise SchemaMismatch(f"non-finite cell in attribute {a.name!r}")
            if a.is_categorical:
                card = len(a.kind.values)
                if np.any((col < 0) | (col >= card) | (col != np.floor(col))):
                    raise SchemaMismatch(f"out-of-universe code in attribute {a.name!r}")

    def to_csv(self, path, header: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(self.schema.names)
            for rec in self.records():
                w.writerow([c if isinstance(c, str) else repr(c) for c in rec])


def load_dataset(path, schema_path, header: bool = True) -> Dataset:
    """Load a comma-separated data file against an explicit schema file.

    Categorical universes come from the schema; unknown symbols are rejected.
    Continuous bounds are recomputed from the loaded rows. Empty cells count as
    missing values and are rejected.
    """
    if not os.path.exists(path):
        raise MissingFile(f"data file not found: {path}")
    schema = load_schema(schema_path)
    F = schema.n_attributes
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, cells in enumerate(reader, start=1):
            if lineno == 1 and header:
                if [c.strip() for c in cells] != schema.names:
                    raise SchemaMismatch(
                        f"line 1: header {cells!r} does not match schema names {schema.names!r}"
                    )
                continue
            if not cells:
                continue
            if len(cells) != F:
                raise RowArityMismatch(lineno, F, len(cells))
            row = np.empty(F)
            for j, (a, raw) in enumerate(zip(schema.attributes, cells)):
                cell = raw.strip()
                if a.is_categorical:
                    try:
                        row[j] = schema.code_of(j, cell)
                    except KeyError:
                        raise UnknownCategoryValue(lineno, a.name, cell) from None
                else:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise NonNumericContinuous(lineno, a.name, cell) from None
                    if not math.isfinite(v):
                        raise NonNumericContinuous(lineno, a.name, cell)
                    row[j] = v
            rows.append(row)
    data = np.array(rows) if rows else np.empty((0, F))
    return Dataset(schema.with_bounds(data), data)


def sample_rows(dataset: Dataset, n: int, seed) -> Dataset:
    """Uniform sample of ``n`` row positions without replacement."""
    if n < 0 or n > len(dataset):
        raise SampleTooLarge(f"cannot sample {n} rows from a dataset of {len(dataset)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dataset), size=n, replace=False)
    return dataset.take(idx)


def partition(dataset: Dataset, sizes, seed) -> tuple:
    """Split into disjoint ``(aux, test)`` parts of the requested sizes."""
    n_aux, n_test = sizes
    if n_aux < 0 or n_test < 0 or n_aux + n_test > len(dataset):
        raise SampleTooLarge(
            f"partition sizes {n_aux}+{n_test} exceed dataset size {len(dataset)}"
        )
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.take(perm[:n_aux]), dataset.take(perm[n_aux : n_aux + n_test])
