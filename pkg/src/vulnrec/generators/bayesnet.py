"""GreedyBayes network generators, non-private and differentially private.

Continuous attributes are discretised into equal-width bins before fitting and
sampled back uniformly inside the drawn bin. Structure learning adds one
attribute at a time, choosing the (attribute, parent set) pair with the
highest mutual information among candidate parent sets of size
``min(max_parents, |placed|)``. The private variant replaces the argmax with
the exponential mechanism, perturbs the joint tables with Laplace noise and
only admits parent sets whose tables are large relative to that noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..data import Dataset, Schema
from ..errors import EmptyDataset, InvalidEpsilon


@dataclass(frozen=True, eq=False)
class Discretizer:
    cards: tuple  # number of discrete levels per attribute
    lows: tuple  # bin origin per attribute (unused for categorical)
    widths: tuple  # bin width per attribute (0 for categorical or constant columns)
    categorical: tuple

    @classmethod
    def fit(cls, dataset: Dataset, n_bins: int) -> "Discretizer":
        cards, lows, widths = [], [], []
        for j, a in enumerate(dataset.schema.attributes):
            if a.is_categorical:
                cards.append(len(a.kind.values))
                lows.append(0.0)
                widths.append(0.0)
                continue
            col = dataset.data[:, j]
            lo, hi = float(col.min()), float(col.max())
            if hi > lo:
                cards.append(n_bins)
                widths.append((hi - lo) / n_bins)
            else:
                cards.append(1)
                widths.append(0.0)
            lows.append(lo)
        cat = tuple(a.is_categorical for a in dataset.schema.attributes)
        return cls(tuple(cards), tuple(lows), tuple(widths), cat)

    def transform(self, data: np.ndarray) -> np.ndarray:
        out = np.empty(data.shape, dtype=np.int64)
        for j in range(data.shape[1]):
            if self.categorical[j] or self.widths[j] == 0.0:
                out[:, j] = data[:, j].astype(np.int64) if self.categorical[j] else 0
            else:
                b = np.floor((data[:, j] - self.lows[j]) / self.widths[j]).astype(np.int64)
                out[:, j] = np.clip(b, 0, self.cards[j] - 1)
        return out

    def inverse(self, codes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.empty(codes.shape)
        for j in range(codes.shape[1]):
            if self.categorical[j]:
                out[:, j] = codes[:, j]
            else:
                u = rng.random(len(codes))
                out[:, j] = self.lows[j] + (codes[:, j] + u) * self.widths[j]
        return out


@dataclass(frozen=True, eq=False)
class BayesNetModel:
    schema: Schema
    discretizer: Discretizer
    order: tuple
    parents: tuple  # parents[j] = tuple of attribute indices placed before j
    cpts: tuple  # cpts[j] has shape (number of parent configurations, cards[j])

    def conditional(self, j: int) -> np.ndarray:
        return self.cpts[j]


def _config_index(codes: np.ndarray, pset, cards) -> np.ndarray:
    idx = np.zeros(len(codes), dtype=np.int64)
    for p in pset:
        idx = idx * cards[p] + codes[:, p]
    return idx


def _n_configs(pset, cards) -> int:
    return int(np.prod([cards[p] for p in pset], dtype=np.int64)) if pset else 1


def _joint_counts(codes, child, pset, cards) -> np.ndarray:
    cfg = _config_index(codes, pset, cards)
    nc = _n_configs(pset, cards)
    flat = np.bincount(cfg * cards[child] + codes[:, child], minlength=nc * cards[child])
    return flat.reshape(nc, cards[child]).astype(np.float64)


def mutual_information(codes: np.ndarray, child: int, pset, cards) -> float:
    """Empirical mutual information (nats) between one attribute and a parent set."""
    n = len(codes)
    card = cards[child]
    # compact the parent configurations to those actually observed
    _, cfg = np.unique(_config_index(codes, pset, cards), return_inverse=True)
    n_cfg = int(cfg.max()) + 1
    joint = np.bincount(cfg * card + codes[:, child], minlength=n_cfg * card).reshape(n_cfg, card) / n
    outer = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))


def mi_sensitivity(n: int, binary: bool) -> float:
    """Sensitivity of empirical mutual information for datasets of size ``n``."""
    if n < 3:
        return math.log(2.0)
    if binary:
        return math.log(n) / n + (n - 1) / n * math.log(n / (n - 1))
    return 2.0 / n * math.log((n + 1) / 2.0) + (n - 1) / n * math.log((n + 1) / (n - 1))


def _candidates(placed, remaining, max_parents, cards=None, max_table=None):
    """(child, parent set) pairs with parent sets of the largest admissible size.

    With ``max_table`` set, a pair is admissible only if its joint table has at
    most that many cells; the empty parent set is always admissible.
    """
    top = min(max_parents, len(placed))
    for child in remaining:
        for size in range(top, -1, -1):
            psets = [
                p for p in combinations(sorted(placed), size)
                if max_table is None or size == 0 or cards[child] * _n_configs(p, cards) <= max_table
            ]
            if psets:
                for pset in psets:
                    yield child, pset
                break


def greedy_structure(codes, cards, max_parents, rng, structure_epsilon=None, max_table=None):
    """Greedy parent-set search; exponential mechanism when ``structure_epsilon`` is given."""
    F = codes.shape[1]
    n = len(codes)
    first = int(rng.integers(F))
    order = [first]
    parents = [()] * F
    remaining = [j for j in range(F) if j != first]
    step_eps = structure_epsilon / max(F - 1, 1) if structure_epsilon is not None else None
    while remaining:
        cands = list(_candidates(order, remaining, max_parents, cards, max_table))
        scores = np.array([mutual_information(codes, c, p, cards) for c, p in cands])
        if step_eps is None:
            pick = int(np.argmax(scores))
        else:
            binary = np.array(
                [cards[c] == 2 or _n_configs(p, cards) == 2 for c, p in cands], dtype=bool
            )
            sens = np.where(binary, mi_sensitivity(n, True), mi_sensitivity(n, False))
            logits = step_eps * scores / (2.0 * sens)
            logits -= logits.max()
            probs = np.exp(logits)
            pick = int(rng.choice(len(cands), p=probs / probs.sum()))
        child, pset = cands[pick]
        parents[child] = pset
        order.append(child)
        remaining.remove(child)
    return tuple(order), tuple(parents)


def _check_fit_inputs(dataset: Dataset, max_parents: int):
    if len(dataset) < 2:
        raise EmptyDataset(f"need at least 2 rows to fit a Bayesian network, got {len(dataset)}")
    if max_parents < 1:
        raise ValueError(f"max_parents must be >= 1, got {max_parents}")


def fit_baynet(
    dataset: Dataset, max_parents: int = 2, seed=None, n_bins: int = 20, smoothing: float = 1e-3
) -> BayesNetModel:
    _check_fit_inputs(dataset, max_parents)
    rng = np.random.default_rng(seed)
    disc = Discretizer.fit(dataset, n_bins)
    codes = disc.transform(dataset.data)
    cards = disc.cards
    order, parents = greedy_structure(codes, cards, max_parents, rng)
    cpts = []
    for j in range(len(cards)):
        counts = _joint_counts(codes, j, parents[j], cards) + smoothing
        cpts.append(counts / counts.sum(axis=1, keepdims=True))
    return BayesNetModel(dataset.schema, disc, order, parents, tuple(cpts))


def fit_privbayes(
    dataset: Dataset,
    epsilon: float,
    epsilon_split: float = 0.5,
    max_parents: int = 2,
    seed=None,
    n_bins: int = 20,
    table_sensitivity: float = 2.0,
    theta: float | None = 4.0,
) -> BayesNetModel:
    """Differentially private Bayesian network.

    ``epsilon_split`` of the budget goes to structure selection, the rest to
    the noisy tables. Each of the ``F`` joint tables receives Laplace noise of
    scale ``table_sensitivity * F / (n * eps2)`` on the normalised scale.
    Discretisation bounds are read from the data and are not protected.

    Parent sets are restricted to theta-useful ones: the mean cell mass of a
    joint table, ``1 / cells``, must be at least ``theta`` times the noise
    scale. Small budgets therefore get sparser networks instead of tables made
    of noise. ``theta=None`` lifts the restriction.
    """
    if not (epsilon > 0) or math.isnan(epsilon):
        raise InvalidEpsilon(f"epsilon must be > 0, got {epsilon}")
    if not 0.0 < epsilon_split < 1.0:
        raise InvalidEpsilon(f"epsilon_split must lie in (0, 1), got {epsilon_split}")
    _check_fit_inputs(dataset, max_parents)
    rng = np.random.default_rng(seed)
    disc = Discretizer.fit(dataset, n_bins)
    codes = disc.transform(dataset.data)
    cards = disc.cards
    n, F = codes.shape
    eps1, eps2 = epsilon_split * epsilon, (1.0 - epsilon_split) * epsilon
    scale = table_sensitivity * F / (n * eps2)
    max_table = None if theta is None else 1.0 / (theta * scale)
    order, parents = greedy_structure(codes, cards, max_parents, rng, eps1, max_table)
    cpts = []
    for j in range(F):
        joint = _joint_counts(codes, j, parents[j], cards) / n
        joint = np.clip(joint + rng.laplace(0.0, scale, size=joint.shape), 0.0, None)
        rows = joint.sum(axis=1, keepdims=True)
        # parent configurations that lost all mass fall back to uniform
        cond = np.where(rows > 0, joint / np.where(rows > 0, rows, 1.0), 1.0 / cards[j])
        cpts.append(cond)
    return BayesNetModel(dataset.schema, disc, order, parents, tuple(cpts))


def sample_baynet(model: BayesNetModel, m: int, seed=None) -> Dataset:
    rng = np.random.default_rng(seed)
    cards = model.discretizer.cards
    F = len(cards)
    codes = np.zeros((m, F), dtype=np.int64)
    for j in model.order:
        cfg = _config_index(codes, model.parents[j], cards)
        cdf = np.cumsum(model.cpts[j], axis=1)
        u = rng.random(m) * cdf[cfg, -1]
        codes[:, j] = np.minimum((u[:, None] >= cdf[cfg]).sum(axis=1), cards[j] - 1)
    return Dataset(model.schema, model.discretizer.inverse(codes, rng))
