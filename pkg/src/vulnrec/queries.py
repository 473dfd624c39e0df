"""Target-anchored counting queries.

A query picks a non-empty subset of attributes and counts the rows that agree
with the target on all of them: equality for categorical attributes and
``value <= target value`` for continuous ones (raw, unscaled values).

The fast path packs one predicate mask per attribute into 64-bit words, so a
query is an AND over a handful of word vectors followed by a popcount.
Distinct subsets are evaluated once and broadcast back to the full query list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Schema
from .errors import SchemaMismatch


@dataclass(frozen=True, eq=False)
class QuerySet:
    schema: Schema
    target: np.ndarray  # coded target row
    subsets: np.ndarray  # (N, F) bool, one attribute subset per query
    seed: object = None
    _unique: np.ndarray = field(default=None, repr=False)
    _inverse: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        subsets = np.asarray(self.subsets, dtype=bool)
        if subsets.ndim != 2 or subsets.shape[1] != self.schema.n_attributes:
            raise SchemaMismatch("query subsets must have one column per attribute")
        if not subsets.any(axis=1).all():
            raise ValueError("every query needs at least one attribute")
        uniq, inv = np.unique(subsets, axis=0, return_inverse=True)
        target = np.asarray(self.target, dtype=np.float64)
        for arr in (subsets, uniq, inv, target):
            arr.setflags(write=False)
        object.__setattr__(self, "subsets", subsets)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "_unique", uniq)
        object.__setattr__(self, "_inverse", inv.reshape(-1))

    def __len__(self) -> int:
        return len(self.subsets)

    @property
    def n_distinct(self) -> int:
        return len(self._unique)

    def attributes(self, i: int) -> list:
        return [int(j) for j in np.flatnonzero(self.subsets[i])]


def sample_queries(schema: Schema, target, N: int, seed=None) -> QuerySet:
    """Draw ``N`` subsets uniformly (with replacement) from the non-empty subsets."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    row = target if isinstance(target, np.ndarray) else schema.row_from_record(target)
    rng = np.random.default_rng(seed)
    F = schema.n_attributes
    subsets = rng.random((N, F)) < 0.5
    empty = ~subsets.any(axis=1)
    while empty.any():
        subsets[empty] = rng.random((int(empty.sum()), F)) < 0.5
        empty = ~subsets.any(axis=1)
    return QuerySet(schema, row, subsets, seed)


def _check(dataset: Dataset, queries: QuerySet) -> None:
    if not dataset.schema.compatible(queries.schema):
        raise SchemaMismatch("dataset schema does not match the query set")


def predicate_masks(dataset: Dataset, target: np.ndarray) -> np.ndarray:
    """(F, n) bool: does row r satisfy the target's predicate on attribute j."""
    cat = dataset.schema.categorical_mask
    data = dataset.data
    return np.where(cat[None, :], data == target[None, :], data <= target[None, :]).T


def pack_masks(masks: np.ndarray) -> np.ndarray:
    """Pack (F, n) bool masks into (F, ceil(n / 64)) uint64 words."""
    F, n = masks.shape
    n_words = (n + 63) // 64
    padded = np.zeros((F, n_words * 64), dtype=bool)
    padded[:, :n] = masks
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64)


def _popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


def answer_queries(dataset: Dataset, queries: QuerySet) -> np.ndarray:
    _check(dataset, queries)
    if len(dataset) == 0:
        return np.zeros(len(queries), dtype=np.int64)
    words = pack_masks(predicate_masks(dataset, queries.target))
    uniq = queries._unique
    acc = np.full((len(uniq), words.shape[1]), np.iinfo(np.uint64).max, dtype=np.uint64)
    for j in range(uniq.shape[1]):
        sel = uniq[:, j]
        if sel.any():
            acc[sel] &= words[j]
    return _popcount(acc)[queries._inverse]


def answer_queries_naive(dataset: Dataset, queries: QuerySet) -> np.ndarray:
    """Row-by-row reference evaluation."""
    _check(dataset, queries)
    cat = [a.is_categorical for a in dataset.schema.attributes]
    rows = dataset.data.tolist()
    t = queries.target.tolist()
    out = np.zeros(len(queries), dtype=np.int64)
    for qi in range(len(queries)):
        attrs = queries.attributes(qi)
        count = 0
        for row in rows:
            ok = True
            for j in attrs:
                if (row[j] != t[j]) if cat[j] else (row[j] > t[j]):
                    ok = False
                    break
            if ok:
                count += 1
        out[qi] = count
    return out


def query_features(datasets, queries: QuerySet) -> np.ndarray:
    """Stack the answers for a sequence of datasets into an (n_datasets, N) matrix."""
    return np.stack([answer_queries(d, queries) for d in datasets]) if datasets else np.zeros(
        (0, len(queries)), dtype=np.int64
    )
