"""Privacy game, shadow modelling and end-to-end experiments.

Every random choice is drawn from a seed stream keyed on
``(master seed, target row id, phase, world index)``. Worlds, features and
classifiers are therefore reproducible one by one, independent of how work
is scheduled across processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import attention
from .data import Dataset, partition
from .encoding import Metric, NormalizationStats
from .errors import LengthMismatch, SingleClassLabels, SourceTooSmall, TargetUbiquitous
from .forest import ForestConfig, predict_scores, train_random_forest
from .generators import GeneratorSpec, fit, generate
from .queries import QuerySet, query_features, sample_queries
from .seeding import seed_stream
from .selection import DEFAULT_K, METHODS, select

log = logging.getLogger(__name__)

ATTACKS = ("query_based", "target_attention")
IN, OUT = 1, 0


@dataclass(frozen=True)
class GameConfig:
    dataset_size: int = 1000
    n_shadow: int = 4000
    n_test: int = 200
    n_queries: int = 100000
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    forest: ForestConfig = field(default_factory=ForestConfig)
    attention: attention.TrainConfig = field(default_factory=attention.TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_shadow % 2 or self.n_test % 2:
            raise ValueError("n_shadow and n_test must be even so labels balance exactly")
        if self.n_shadow < 2 or self.n_test < 2 or self.dataset_size < 2:
            raise ValueError("n_shadow, n_test and dataset_size must be >= 2")
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")

    @classmethod
    def desk(cls, **overrides) -> "GameConfig":
        base = dict(
            dataset_size=100,
            n_shadow=300,
            n_test=100,
            n_queries=2000,
            forest=ForestConfig(n_trees=100, max_depth=6),
        )
        return cls(**{**base, **overrides})

    @classmethod
    def paper(cls, **overrides) -> "GameConfig":
        return cls(**overrides)


@dataclass(frozen=True, eq=False)
class ShadowWorld:
    synthetic: Dataset
    label: int
    world_seed: tuple
    training: Dataset | None = None


@dataclass(eq=False)
class AttackResult:
    target_row: int
    method: str
    attack: str
    scores: np.ndarray
    labels: np.ndarray
    auc: float
    epsilon: float | None = None


def _coded(target, schema) -> np.ndarray:
    return target if isinstance(target, np.ndarray) else schema.row_from_record(target)


def _pool_without(source: Dataset, target_row: np.ndarray) -> np.ndarray:
    keep = ~np.all(source.data == target_row[None, :], axis=1)
    return source.data[keep]


def _make_world(pool, target_row, label, spec, size, master, target_id, phase, w, keep_training, schema):
    key = (int(master), int(target_id), phase, int(w))
    rng = np.random.default_rng(seed_stream(master, target_id, phase, w))
    pick = rng.choice(len(pool), size=size, replace=False)
    extra = target_row if label == IN else pool[pick[-1]]
    training = Dataset(schema, np.vstack([pool[pick[:-1]], extra[None, :]]))
    model = fit(spec, training, seed_stream(master, target_id, phase, w, "fit"))
    synthetic = generate(model, size, seed_stream(master, target_id, phase, w, "generate"))
    return ShadowWorld(synthetic, label, key, training if keep_training else None)


def _world_chunk(args):
    pool, target_row, labels, indices, spec, size, master, target_id, phase, keep, schema = args
    return [
        _make_world(pool, target_row, labels[w], spec, size, master, target_id, phase, w, keep, schema)
        for w in indices
    ]


def balanced_labels(n_worlds: int, seed) -> np.ndarray:
    labels = np.array([IN] * (n_worlds // 2) + [OUT] * (n_worlds // 2))
    return labels[np.random.default_rng(seed).permutation(n_worlds)]


def build_worlds(
    source: Dataset,
    target,
    n_worlds: int,
    game: GameConfig,
    seed: int,
    target_id: int = 0,
    phase: str = "shadow",
    workers: int = 1,
    keep_training: bool = False,
) -> list:
    """Play the membership game ``n_worlds`` times against ``source``.

    Each world samples ``|D| - 1`` rows from ``source`` (minus any copy of the
    target), completes them with the target (IN) or one further sampled row
    (OUT), fits the generator and releases ``|D|`` synthetic rows.
    """
    if n_worlds % 2:
        raise ValueError("n_worlds must be even")
    target_row = _coded(target, source.schema)
    size = game.dataset_size
    pool = _pool_without(source, target_row)
    if len(pool) == 0 and len(source) > 0:
        raise TargetUbiquitous("every source row equals the target; no OUT record available")
    if len(pool) < size:
        raise SourceTooSmall(f"need {size} non-target rows, source offers {len(pool)}")
    labels = balanced_labels(n_worlds, seed_stream(seed, target_id, phase, "labels"))
    spec = game.generator.resolved()
    args = (pool, target_row, labels, None, spec, size, seed, target_id, phase, keep_training, source.schema)
    if workers <= 1 or n_worlds < 2:
        return _world_chunk(args[:3] + (range(n_worlds),) + args[4:])
    chunks = np.array_split(np.arange(n_worlds), workers)
    jobs = [args[:3] + (c.tolist(),) + args[4:] for c in chunks if len(c)]
    with ProcessPoolExecutor(workers) as pool_exec:
        parts = list(pool_exec.map(_world_chunk, jobs))
    return [w for part in parts for w in part]


def compute_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores earn half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    pos = labels == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise SingleClassLabels("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def run_query_attack(
    target,
    shadow_worlds,
    test_worlds,
    game: GameConfig,
    seed: int = 0,
    target_id: int = 0,
    queries: QuerySet | None = None,
) -> AttackResult:
    schema = shadow_worlds[0].synthetic.schema
    target_row = _coded(target, schema)
    if queries is None:
        queries = sample_queries(schema, target_row, game.n_queries, seed_stream(seed, target_id, "queries"))
    X_shadow = query_features([w.synthetic for w in shadow_worlds], queries)
    y_shadow = np.array([w.label for w in shadow_worlds])
    X_test = query_features([w.synthetic for w in test_worlds], queries)
    y_test = np.array([w.label for w in test_worlds])
    model = train_random_forest(X_shadow, y_shadow, game.forest, seed_stream(seed, target_id, "forest"))
    scores = predict_scores(model, X_test)
    return AttackResult(int(target_id), "", "query_based", scores, y_test, compute_auc(scores, y_test))


def run_attention_attack(
    target,
    shadow_worlds,
    test_worlds,
    game: GameConfig,
    stats: NormalizationStats,
    seed: int = 0,
    target_id: int = 0,
) -> AttackResult:
    schema = shadow_worlds[0].synthetic.schema
    target_row = _coded(target, schema)
    cfg = game.attention
    params = attention.train(
        shadow_worlds, target_row, schema, stats, cfg, seed_stream(seed, target_id, "attention")
    )
    scores = attention.score_worlds(params, test_worlds, target_row, schema, stats, cfg.top_x)
    y_test = np.array([w.label for w in test_worlds])
    return AttackResult(int(target_id), "", "target_attention", scores, y_test, compute_auc(scores, y_test))


def _attack_job(args):
    aux, test, target_row, target_id, attacks, game, stats = args
    shadow = build_worlds(aux, target_row, game.n_shadow, game, game.seed, target_id, "shadow")
    tests = build_worlds(test, target_row, game.n_test, game, game.seed, target_id, "test")
    out = {}
    for kind in attacks:
        if kind == "query_based":
            out[kind] = run_query_attack(target_row, shadow, tests, game, game.seed, target_id)
        elif kind == "target_attention":
            out[kind] = run_attention_attack(target_row, shadow, tests, game, stats, game.seed, target_id)
        else:
            raise ValueError(f"unknown attack {kind!r}; choose from {ATTACKS}")
    return out


@dataclass
class ExperimentResult:
    results: list  # AttackResult entries
    selections: dict  # method -> selected omega row ids
    epsilon: float | None = None

    def summary(self) -> dict:
        """(method, attack) -> (mean AUC, std AUC, count)."""
        groups = {}
        for r in self.results:
            groups.setdefault((r.method, r.attack), []).append(r.auc)
        return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}

    def mean_auc(self, method: str, attack: str = "query_based") -> float:
        return self.summary()[(method, attack)][0]


def run_record_experiment(
    omega: Dataset,
    methods=METHODS,
    R: int = 10,
    game: GameConfig = GameConfig(),
    attacks=("query_based",),
    sizes=(10000, 5000),
    k: int = DEFAULT_K,
    metric=Metric(),
    selection_options: dict | None = None,
    workers: int = 1,
    cache: dict | None = None,
) -> ExperimentResult:
    """Select ``R`` targets per method on ``omega`` and attack each one.

    ``omega`` is split into the attacker's auxiliary data (shadow worlds) and a
    disjoint test pool (evaluation worlds). A record picked by several methods
    is attacked once and the result shared. Passing the same ``cache`` dict to
    runs that differ only in selection settings (k, metric) reuses attacks on
    records already seen, since those depend only on data, game and target.
    """
    opts = selection_options or {}
    master = game.seed
    aux, test = partition(omega, sizes, seed_stream(master, 0, "partition"))
    stats = NormalizationStats.from_dataset(omega)
    selections = {}
    for mi, method in enumerate(methods):
        kw = {}
        if method == "rare_value":
            kw = {key: opts[key] for key in ("rare_threshold", "percentile") if key in opts}
        elif method == "log_likelihood":
            kw = {key: opts[key] for key in ("n_buckets",) if key in opts}
        sel = select(method, omega, R, seed_stream(master, mi, "select"), k=k, metric=metric, **kw)
        selections[method] = [int(omega.row_ids[i]) for i in sel.selected]
        log.info("method %s selected rows %s", method, selections[method])
    targets = sorted({rid for rows in selections.values() for rid in rows})
    cache = {} if cache is None else cache
    todo = [rid for rid in targets if rid not in cache]
    position = {int(rid): i for i, rid in enumerate(omega.row_ids)}
    jobs = [(aux, test, omega.data[position[rid]], rid, tuple(attacks), game, stats) for rid in todo]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            outputs = list(ex.map(_attack_job, jobs))
    else:
        outputs = []
        for i, job in enumerate(jobs):
            outputs.append(_attack_job(job))
            log.info("target %d/%d done (row %d)", i + 1, len(jobs), job[3])
    cache.update(zip(todo, outputs))
    by_target = cache
    eps = game.generator.epsilon if game.generator.kind == "privbayes" else None
    results = []
    for method in methods:
        for rid in selections[method]:
            for kind in attacks:
                r = by_target[rid][kind]
                results.append(replace(r, method=method, epsilon=eps))
    return ExperimentResult(results, selections, eps)


def dp_sweep(
    omega: Dataset,
    game: GameConfig,
    epsilons,
    methods=METHODS,
    R: int = 10,
    **kwargs,
) -> list:
    """Repeat the experiment for each privacy budget; ``inf`` runs plain BayNet."""
    out = []
    for eps in epsilons:
        eps = float(eps)
        spec = replace(game.generator, kind="privbayes", epsilon=eps)
        res = run_record_experiment(omega, methods, R, replace(game, generator=spec), **kwargs)
        res.epsilon = eps
        for r in res.results:
            r.epsilon = eps
        out.append(res)
    return out


def auc_trend_ok(sweep: list, method: str = "distance", attack: str = "query_based") -> bool:
    """Soft check: mean AUC does not decrease as epsilon grows."""
    pts = sorted((r.epsilon if r.epsilon is not None else math.inf, r.mean_auc(method, attack)) for r in sweep)
    return all(b[1] >= a[1] for a, b in zip(pts, pts[1:]))
