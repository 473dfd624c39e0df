"""Vulnerable-record scoring and the target selectors.

The distance selector ranks records by the mean distance to their ``k``
nearest neighbours (self excluded by position, so duplicates count as
neighbours at distance zero). Three baselines are provided for comparison:
uniform random, rare value, and lowest independent log-likelihood.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .encoding import EncodedBatch, Metric, encode_dataset, pairwise_distances
from .errors import KTooLarge, NotEnoughQualifyingRecords, RTooLarge

METHODS = ("distance", "random", "rare_value", "log_likelihood")

DEFAULT_K = 5
RARE_THRESHOLD = 0.01
TAIL_PERCENTILE = 95.0
LL_BUCKETS = 10


@dataclass(frozen=True, eq=False)
class VulnerabilityRanking:
    scores: np.ndarray
    order: np.ndarray
    k: int
    metric_id: str

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    method: str
    selected: list
    diagnostics: np.ndarray = field(repr=False)


def _block(batch: EncodedBatch, lo: int, hi: int) -> EncodedBatch:
    return EncodedBatch(
        batch.cat[lo:hi], batch.cont[lo:hi], batch.n_cat, batch.n_cont, batch.schema_fingerprint
    )


def knn_mean_distances(
    batch: EncodedBatch, k: int, metric: Metric, block_size: int = 256, workers: int = 1
) -> np.ndarray:
    """Mean of the ``k`` smallest distances from each row to every other row."""
    n = len(batch)

    def run(lo: int) -> np.ndarray:
        hi = min(lo + block_size, n)
        d = pairwise_distances(_block(batch, lo, hi), batch, metric)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        nearest = np.partition(d, k - 1, axis=1)[:, :k]
        nearest.sort(axis=1)
        return nearest.mean(axis=1)

    starts = range(0, n, block_size)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    return np.concatenate(parts) if parts else np.empty(0)


def vulnerability_scores(
    dataset: Dataset, k: int = DEFAULT_K, metric=Metric(), workers: int = 1
) -> VulnerabilityRanking:
    """Score every row by its mean distance to its ``k`` nearest other rows.

    Normalisation statistics for continuous attributes come from ``dataset``.
    """
    metric = Metric.parse(metric)
    if k < 1 or k > len(dataset) - 1:
        raise KTooLarge(f"k={k} needs 1 <= k <= {len(dataset) - 1}")
    scores = knn_mean_distances(encode_dataset(dataset), k, metric, workers=workers)
    order = np.argsort(-scores, kind="stable")
    return VulnerabilityRanking(scores, order, k, metric.id)


def select_top_r(ranking: VulnerabilityRanking, R: int, seed=None) -> SelectionResult:
    """Take the ``R`` highest-scoring rows, breaking a tie at the boundary at random."""
    n = len(ranking)
    if R < 1 or R > n:
        raise RTooLarge(f"R={R} needs 1 <= R <= {n}")
    scores = ranking.scores
    cut = scores[ranking.order[R - 1]]
    above = [int(i) for i in ranking.order if scores[i] > cut]
    boundary = np.flatnonzero(scores == cut)
    need = R - len(above)
    if need < len(boundary):
        rng = np.random.default_rng(seed)
        boundary = np.sort(rng.choice(boundary, size=need, replace=False))
    return SelectionResult("distance", above + [int(i) for i in boundary], scores)


def select_distance(
    dataset: Dataset, R: int, seed=None, k: int = DEFAULT_K, metric=Metric()
) -> SelectionResult:
    return select_top_r(vulnerability_scores(dataset, k, metric), R, seed)


def select_random(dataset: Dataset, R: int, seed) -> SelectionResult:
    n = len(dataset)
    if R < 1 or R > n:
        raise RTooLarge(f"R={R} needs 1 <= R <= {n}")
    picked = np.random.default_rng(seed).choice(n, size=R, replace=False)
    return SelectionResult("random", [int(i) for i in picked], np.zeros(n))


def nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """Smallest value with at least ``q`` percent of the sample at or below it."""
    s = np.sort(values)
    rank = max(1, math.ceil(q / 100.0 * len(s)))
    return float(s[rank - 1])


def rare_value_flags(
    dataset: Dataset, rare_threshold: float = RARE_THRESHOLD, percentile: float = TAIL_PERCENTILE
) -> np.ndarray:
    """Per row, how many attributes make it qualify as a rare-value record."""
    n = len(dataset)
    hits = np.zeros(n, dtype=np.int64)
    if n == 0:
        return hits
    for j, a in enumerate(dataset.schema.attributes):
        col = dataset.data[:, j]
        if a.is_categorical:
            counts = np.bincount(col.astype(np.int64), minlength=len(a.kind.values))
            hits += (counts[col.astype(np.int64)] / n < rare_threshold).astype(np.int64)
        else:
            hits += (col > nearest_rank_percentile(col, percentile)).astype(np.int64)
    return hits


def select_rare_value(
    dataset: Dataset,
    R: int,
    seed,
    rare_threshold: float = RARE_THRESHOLD,
    percentile: float = TAIL_PERCENTILE,
) -> SelectionResult:
    flags = rare_value_flags(dataset, rare_threshold, percentile)
    qualifying = np.flatnonzero(flags > 0)
    if R < 1 or R > len(qualifying):
        raise NotEnoughQualifyingRecords(R, len(qualifying))
    picked = np.random.default_rng(seed).choice(qualifying, size=R, replace=False)
    return SelectionResult("rare_value", [int(i) for i in picked], flags)


def percentile_buckets(col: np.ndarray, n_buckets: int = LL_BUCKETS) -> np.ndarray:
    """Equal-frequency bucket index per value, cut points by nearest rank."""
    edges = np.array(
        [nearest_rank_percentile(col, 100.0 * b / n_buckets) for b in range(1, n_buckets)]
    )
    return np.searchsorted(edges, col, side="left")


def log_likelihoods(dataset: Dataset, n_buckets: int = LL_BUCKETS) -> np.ndarray:
    """Independent-attribute log-likelihood of every row under empirical marginals."""
    n = len(dataset)
    ll = np.zeros(n)
    if n == 0:
        return ll
    for j, a in enumerate(dataset.schema.attributes):
        col = dataset.data[:, j]
        codes = col.astype(np.int64) if a.is_categorical else percentile_buckets(col, n_buckets)
        counts = np.bincount(codes)
        ll += np.log(counts[codes] / n)
    return ll


def select_log_likelihood(dataset: Dataset, R: int, n_buckets: int = LL_BUCKETS) -> SelectionResult:
    n = len(dataset)
    if R < 1 or R > n:
        raise RTooLarge(f"R={R} needs 1 <= R <= {n}")
    ll = log_likelihoods(dataset, n_buckets)
    picked = np.argsort(ll, kind="stable")[:R]
    return SelectionResult("log_likelihood", [int(i) for i in picked], ll)


def select(method: str, dataset: Dataset, R: int, seed, k: int = DEFAULT_K, metric=Metric(), **opts):
    """Dispatch to one of the four selectors by name."""
    if method == "distance":
        return select_distance(dataset, R, seed, k, metric)
    if method == "random":
        return select_random(dataset, R, seed)
    if method == "rare_value":
        return select_rare_value(dataset, R, seed, **opts)
    if method == "log_likelihood":
        return select_log_likelihood(dataset, R, **opts)
    raise ValueError(f"unknown selection method {method!r}; choose from {METHODS}")
