"""Record encoding and mixed-type distances.

Categorical attributes are one-hot encoded and concatenated; continuous
attributes are min-max scaled to ``[0, 1]`` with statistics taken from a
reference dataset. Two distances are provided:

* a generalised cosine distance, ``1 - w_cat * cos(h_a, h_b) - w_cont * cos(c_a, c_b)``
* a weighted Minkowski distance, ``w_cat * L_p(h_a, h_b) + w_cont * L_p(c_a, c_b)``

where ``w_cat`` and ``w_cont`` are the fractions of categorical and continuous
attributes. Besides the per-record functions, :func:`pairwise_distances`
evaluates whole blocks at once and is what the scorers use.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Schema
from .errors import FingerprintMismatch, InvalidOrder, SchemaMismatch


@dataclass(frozen=True)
class NormalizationStats:
    mins: tuple  # one entry per continuous attribute, schema order
    maxs: tuple

    def __post_init__(self):
        for lo, hi in zip(self.mins, self.maxs):
            if not lo <= hi:
                raise ValueError(f"min {lo} exceeds max {hi}")

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "NormalizationStats":
        cont = dataset.schema.continuous_indices
        if len(dataset) == 0:
            return cls(tuple(0.0 for _ in cont), tuple(0.0 for _ in cont))
        block = dataset.data[:, cont]
        return cls(tuple(map(float, block.min(axis=0))), tuple(map(float, block.max(axis=0))))

    @classmethod
    def from_schema(cls, schema: Schema) -> "NormalizationStats":
        attrs = [schema.attributes[j].kind for j in schema.continuous_indices]
        return cls(tuple(a.observed_min for a in attrs), tuple(a.observed_max for a in attrs))


def fingerprint(schema: Schema, stats: NormalizationStats) -> str:
    payload = repr((schema.structure_key(), stats.mins, stats.maxs)).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EncodedRecord:
    cat_block: np.ndarray
    cont_block: np.ndarray
    schema_fingerprint: str


@dataclass(frozen=True, eq=False)
class EncodedBatch:
    """Encoded rows of a whole dataset: one-hot matrix plus scaled continuous matrix."""

    cat: np.ndarray  # (n, sum of universe sizes), 0/1 floats
    cont: np.ndarray  # (n, number of continuous attributes)
    n_cat: int
    n_cont: int
    schema_fingerprint: str

    def __len__(self) -> int:
        return len(self.cat)

    def row(self, i: int) -> EncodedRecord:
        return EncodedRecord(self.cat[i], self.cont[i], self.schema_fingerprint)


def _scale(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    lo = np.asarray(stats.mins, dtype=np.float64)
    hi = np.asarray(stats.maxs, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.clip((values - lo) / safe, 0.0, 1.0)
    # constant columns carry no information; pin them to 0
    return np.where(span > 0, scaled, 0.0)


def encode_rows(data: np.ndarray, schema: Schema, stats: NormalizationStats) -> EncodedBatch:
    data = np.asarray(data, dtype=np.float64).reshape(-1, schema.n_attributes)
    n = len(data)
    cat_idx = schema.categorical_indices
    cont_idx = schema.continuous_indices
    if len(stats.mins) != len(cont_idx):
        raise SchemaMismatch("normalization stats do not match the continuous attributes")
    cards = [schema.cardinalities[j] for j in cat_idx]
    offsets = np.concatenate([[0], np.cumsum(cards)]).astype(np.int64)
    cat = np.zeros((n, int(offsets[-1])))
    for pos, j in enumerate(cat_idx):
        codes = data[:, j].astype(np.int64)
        if n and (codes.min() < 0 or codes.max() >= cards[pos]):
            raise SchemaMismatch(f"code out of range for attribute {schema.attributes[j].name!r}")
        cat[np.arange(n), offsets[pos] + codes] = 1.0
    cont = _scale(data[:, cont_idx], stats) if cont_idx else np.zeros((n, 0))
    return EncodedBatch(cat, cont, len(cat_idx), len(cont_idx), fingerprint(schema, stats))


def encode_dataset(dataset: Dataset, stats: NormalizationStats | None = None) -> EncodedBatch:
    if stats is None:
        stats = NormalizationStats.from_dataset(dataset)
    return encode_rows(dataset.data, dataset.schema, stats)


def encode(record, schema: Schema, stats: NormalizationStats) -> EncodedRecord:
    """Encode one record (a tuple of cells or an already-coded row)."""
    if isinstance(record, np.ndarray):
        row = record
        if row.shape != (schema.n_attributes,):
            raise SchemaMismatch(f"row has shape {row.shape}, schema has {schema.n_attributes} attributes")
    else:
        row = schema.row_from_record(record)
    return encode_rows(row[None, :], schema, stats).row(0)


def _weights(schema: Schema) -> tuple:
    F = schema.n_attributes
    return len(schema.categorical_indices) / F, len(schema.continuous_indices) / F


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 and nv == 0:
        return 1.0
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _check(a: EncodedRecord, b: EncodedRecord) -> None:
    if a.schema_fingerprint != b.schema_fingerprint:
        raise FingerprintMismatch("records were encoded with different schemas or statistics")


def mixed_cosine_distance(a: EncodedRecord, b: EncodedRecord, schema: Schema) -> float:
    _check(a, b)
    w_cat, w_cont = _weights(schema)
    d = 1.0
    if w_cat:
        d -= w_cat * _cosine(a.cat_block, b.cat_block)
    if w_cont:
        d -= w_cont * _cosine(a.cont_block, b.cont_block)
    return min(max(d, 0.0), 1.0)


def minkowski_mixed_distance(a: EncodedRecord, b: EncodedRecord, schema: Schema, p: int) -> float:
    if p < 1:
        raise InvalidOrder(f"Minkowski order must be >= 1, got {p}")
    _check(a, b)
    w_cat, w_cont = _weights(schema)
    d = 0.0
    if w_cat:
        d += w_cat * float(np.sum(np.abs(a.cat_block - b.cat_block) ** p) ** (1.0 / p))
    if w_cont:
        d += w_cont * float(np.sum(np.abs(a.cont_block - b.cont_block) ** p) ** (1.0 / p))
    return d


@dataclass(frozen=True)
class Metric:
    """Distance selector: ``Metric("cosine")`` or ``Metric("minkowski", p)``."""

    name: str = "cosine"
    p: int = 2

    def __post_init__(self):
        if self.name not in ("cosine", "minkowski"):
            raise ValueError(f"unknown metric {self.name!r}")
        if self.name == "minkowski" and self.p < 1:
            raise InvalidOrder(f"Minkowski order must be >= 1, got {self.p}")

    @classmethod
    def parse(cls, text) -> "Metric":
        if isinstance(text, Metric):
            return text
        text = str(text).strip().lower()
        if text == "cosine":
            return cls("cosine")
        for prefix in ("minkowski", "minkowski-p", "minkowski_p", "p"):
            rest = text[len(prefix):]
            if text.startswith(prefix) and rest.isdigit():
                return cls("minkowski", int(rest))
        raise ValueError(f"cannot parse metric {text!r}; use 'cosine' or 'minkowskiP'")

    @property
    def id(self) -> str:
        return "cosine" if self.name == "cosine" else f"minkowski{self.p}"

    def between(self, a: EncodedRecord, b: EncodedRecord, schema: Schema) -> float:
        if self.name == "cosine":
            return mixed_cosine_distance(a, b, schema)
        return minkowski_mixed_distance(a, b, schema, self.p)


def _unit_rows(x: np.ndarray) -> tuple:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe[:, None], norms == 0


def pairwise_distances(a: EncodedBatch, b: EncodedBatch, metric: Metric = Metric()) -> np.ndarray:
    """Distance matrix of shape ``(len(a), len(b))``."""
    if a.schema_fingerprint != b.schema_fingerprint:
        raise FingerprintMismatch("batches were encoded with different schemas or statistics")
    F = a.n_cat + a.n_cont
    w_cat, w_cont = a.n_cat / F, a.n_cont / F
    if metric.name == "cosine":
        d = np.ones((len(a), len(b)))
        if a.n_cat:
            # every one-hot row has exactly n_cat ones, so the cosine is matches / n_cat
            d -= w_cat * ((a.cat @ b.cat.T) / a.n_cat)
        if a.n_cont:
            ua, za = _unit_rows(a.cont)
            ub, zb = _unit_rows(b.cont)
            cos = ua @ ub.T
            both = za[:, None] & zb[None, :]
            cos[za, :] = 0.0
            cos[:, zb] = 0.0
            cos[both] = 1.0
            d -= w_cont * cos
        return np.clip(d, 0.0, 1.0)

    p = metric.p
    d = np.zeros((len(a), len(b)))
    if a.n_cat:
        mismatches = a.n_cat - a.cat @ b.cat.T
        d += w_cat * (2.0 * mismatches) ** (1.0 / p)
    if a.n_cont:
        acc = np.zeros_like(d)
        for j in range(a.n_cont):
            acc += np.abs(a.cont[:, j][:, None] - b.cont[:, j][None, :]) ** p
        d += w_cont * acc ** (1.0 / p)
    return d
