"""Sequential CART synthesizer.

The first attribute in the visit order is drawn from its empirical marginal.
Every later attribute gets a tree grown on the attributes visited before it:
Gini impurity for categorical targets, squared error for continuous ones.
Leaves keep the training values that reached them; sampling walks the tree
with the synthetic values generated so far and draws uniformly from the
leaf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, Schema
from ..errors import EmptyDataset

LE, EQ = 0, 1  # split kinds: numeric threshold, categorical equality


@dataclass(frozen=True)
class CartConfig:
    max_depth: int = 8
    min_leaf: int = 5
    random_order: bool = False

    def __post_init__(self):
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("max_depth and min_leaf must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    kind: np.ndarray
    threshold: np.ndarray
    left: np.ndarray  # -1 marks a leaf
    right: np.ndarray
    payload: tuple  # leaf id -> array of observed target values (None for internal nodes)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.left[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            active = self.left[node] >= 0
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            cur = node[rows]
            vals = X[rows, self.feature[cur]]
            go_left = np.where(self.kind[cur] == EQ, vals == self.threshold[cur], vals <= self.threshold[cur])
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])


@dataclass(frozen=True, eq=False)
class CartModel:
    schema: Schema
    order: tuple
    first_values: np.ndarray
    trees: tuple  # trees[i] predicts order[i + 1] from order[: i + 1]
    config: CartConfig


def _impurity_scan(y_sorted: np.ndarray, categorical: bool, n_classes: int):
    """Weighted child impurity for every prefix split of an already-sorted target.

    Entry ``i`` corresponds to putting the first ``i + 1`` rows on the left.
    """
    n = len(y_sorted)
    left_n = np.arange(1, n)
    right_n = n - left_n
    if categorical:
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y_sorted.astype(np.int64)] = 1.0
        cum = np.cumsum(onehot, axis=0)[:-1]
        rest = onehot.sum(axis=0) - cum
        return (left_n - (cum**2).sum(axis=1) / left_n) + (right_n - (rest**2).sum(axis=1) / right_n)
    cs = np.cumsum(y_sorted)[:-1]
    cs2 = np.cumsum(y_sorted**2)[:-1]
    tot, tot2 = y_sorted.sum(), (y_sorted**2).sum()
    return (cs2 - cs**2 / left_n) + ((tot2 - cs2) - (tot - cs) ** 2 / right_n)


def _node_impurity(y: np.ndarray, categorical: bool, n_classes: int) -> float:
    n = len(y)
    if categorical:
        counts = np.bincount(y.astype(np.int64), minlength=n_classes)
        return n - float((counts**2).sum()) / n
    return float(((y - y.mean()) ** 2).sum())


def _best_split(X, y, pred_cat, categorical, n_classes, min_leaf):
    n = len(y)
    best = (_node_impurity(y, categorical, n_classes) - 1e-12, None, None, None)
    for f in range(X.shape[1]):
        x = X[:, f]
        if pred_cat[f]:
            for c in np.unique(x):
                mask = x == c
                nl = int(mask.sum())
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                imp = _node_impurity(y[mask], categorical, n_classes) + _node_impurity(
                    y[~mask], categorical, n_classes
                )
                if imp < best[0]:
                    best = (imp, f, EQ, float(c))
            continue
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], y[order]
        imp = _impurity_scan(ys, categorical, n_classes)
        pos = np.arange(1, n)  # left size
        valid = (xs[:-1] < xs[1:]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not valid.any():
            continue
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if imp[i] < best[0]:
            best = (float(imp[i]), f, LE, float((xs[i] + xs[i + 1]) / 2.0))
    return best[1:]


def fit_tree(X, y, pred_cat, categorical, n_classes, config: CartConfig) -> Tree:
    feature, kind, threshold, left, right, payload = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (kind, 0), (threshold, 0.0), (left, -1), (right, -1), (payload, None)):
            lst.append(v)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        yv = y[idx]
        split = (None,)
        if depth < config.max_depth and len(idx) >= 2 * config.min_leaf and np.ptp(yv) > 0:
            split = _best_split(X[idx], yv, pred_cat, categorical, n_classes, config.min_leaf)
        if split[0] is None:
            payload[node] = yv.copy()
            return node
        f, k, t = split
        xv = X[idx, f]
        go_left = xv == t if k == EQ else xv <= t
        feature[node], kind[node], threshold[node] = f, k, t
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(kind, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        tuple(payload),
    )


def fit_synthpop(dataset: Dataset, config: CartConfig = CartConfig(), seed=None) -> CartModel:
    if len(dataset) == 0 or len(dataset) < config.min_leaf:
        raise EmptyDataset(f"need at least min_leaf={config.min_leaf} rows, got {len(dataset)}")
    rng = np.random.default_rng(seed)
    schema = dataset.schema
    F = schema.n_attributes
    first = int(rng.integers(F))
    rest = [j for j in range(F) if j != first]
    if config.random_order:
        rest = [rest[i] for i in rng.permutation(len(rest))]
    order = (first, *rest)
    cat = schema.categorical_mask
    cards = schema.cardinalities
    trees = []
    for i in range(1, F):
        target = order[i]
        preds = list(order[:i])
        trees.append(
            fit_tree(
                dataset.data[:, preds],
                dataset.data[:, target],
                cat[preds],
                bool(cat[target]),
                cards[target],
                config,
            )
        )
    return CartModel(schema, order, dataset.data[:, first].copy(), tuple(trees), config)


def sample_synthpop(model: CartModel, m: int, seed=None) -> Dataset:
    rng = np.random.default_rng(seed)
    F = model.schema.n_attributes
    out = np.zeros((m, F))
    if m == 0:
        return Dataset(model.schema, out)
    out[:, model.order[0]] = model.first_values[rng.integers(len(model.first_values), size=m)]
    for i, tree in enumerate(model.trees):
        preds = list(model.order[: i + 1])
        leaves = tree.apply(out[:, preds])
        col = np.empty(m)
        for leaf in np.unique(leaves):
            rows = np.flatnonzero(leaves == leaf)
            values = tree.payload[leaf]
            col[rows] = values[rng.integers(len(values), size=len(rows))]
        out[:, model.order[i + 1]] = col
    return Dataset(model.schema, out)
