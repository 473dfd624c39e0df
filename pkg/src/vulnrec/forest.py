"""Random forest classifier written against numpy only.

Each tree is grown on a bootstrap sample. At every node ``ceil(sqrt(N))``
features are drawn at random and the Gini-optimal midpoint threshold is
chosen; if none of them can split the node, further features are drawn until
one can or all have been tried. Leaves store the fraction of class-1 rows.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EmptyFeatures, FeatureArityMismatch, SingleClassTraining
from .seeding import as_seed_sequence


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 10
    max_features: object = "sqrt"  # "sqrt", an int, or None for all features
    min_samples_split: int = 2

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if self.max_features is None:
            return n_features
        return max(1, min(int(self.max_features), n_features))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class-1 probability, meaningful at leaves

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):  # children always come after their parent
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    trees: tuple
    n_features: int
    config: ForestConfig
    seed: object

    def dump(self) -> str:
        """Tree structures as JSON, for debugging."""
        return json.dumps(
            {
                "n_features": self.n_features,
                "trees": [
                    {
                        "feature": t.feature.tolist(),
                        "threshold": t.threshold.tolist(),
                        "left": t.left.tolist(),
                        "right": t.right.tolist(),
                        "value": t.value.tolist(),
                    }
                    for t in self.trees
                ],
            }
        )


def _best_split(X, y, cols):
    """Best (impurity, feature, threshold) among ``cols``, or None if none splits."""
    n = len(y)
    block = X[:, cols]
    order = np.argsort(block, axis=0, kind="stable")
    xs = np.take_along_axis(block, order, axis=0)
    ys = y[order]
    pos_left = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    pos_right = ys.sum(axis=0)[None, :] - pos_left
    imp = 2.0 * pos_left * (n_left - pos_left) / n_left + 2.0 * pos_right * (n_right - pos_right) / n_right
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    imp = np.where(valid, imp, np.inf)
    flat = int(np.argmin(imp))
    i, c = divmod(flat, len(cols))
    lo, hi = xs[i, c], xs[i + 1, c]
    thr = lo + (hi - lo) / 2.0
    if not thr < hi:
        thr = lo
    return float(imp[i, c]), int(cols[c]), float(thr)


def _grow(X, y, config: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    n_features = X.shape[1]
    m = config.features_per_split(n_features)
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        yv = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(yv.mean()))
        if depth >= config.max_depth or len(idx) < config.min_samples_split or yv.min() == yv.max():
            continue
        perm = rng.permutation(n_features)
        split = None
        Xn = X[idx]
        for start in range(0, n_features, m):
            split = _best_split(Xn, yv, perm[start : start + m])
            if split is not None:
                break
        if split is None:
            continue
        _, f, t = split
        go_left = Xn[:, f] <= t
        feature[node], threshold[node] = f, t
        # right pushed first so the left subtree is numbered first
        stack.append((idx[~go_left], depth + 1, node, True))
        stack.append((idx[go_left], depth + 1, node, False))
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
    )


def train_random_forest(
    features, labels, config: ForestConfig = ForestConfig(), seed=None, workers: int = 1
) -> RandomForestModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyFeatures(f"feature matrix must be non-empty 2-D, got shape {X.shape}")
    if len(y) != len(X):
        raise FeatureArityMismatch(f"{len(X)} feature rows but {len(y)} labels")
    if len(X) < 2 or y.min() == y.max():
        raise SingleClassTraining("training labels must contain both classes")
    children = as_seed_sequence(seed).spawn(config.n_trees)
    n = len(y)

    def build(ss):
        rng = np.random.default_rng(ss)
        boot = rng.integers(n, size=n)
        return _grow(X[boot], y[boot], config, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trees = list(pool.map(build, children))
    else:
        trees = [build(ss) for ss in children]
    return RandomForestModel(tuple(trees), X.shape[1], config, seed)


def predict_scores(model: RandomForestModel, features) -> np.ndarray:
    """Mean class-1 leaf probability across trees."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise FeatureArityMismatch(f"expected {model.n_features} features, got shape {X.shape}")
    return np.mean([t.predict(X) for t in model.trees], axis=0)
