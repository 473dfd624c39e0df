"""Synthetic data generators behind a common fit/generate interface."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..data import Dataset, Schema
from ..errors import ConfigError, InvalidEpsilon
from .bayesnet import BayesNetModel, fit_baynet, fit_privbayes, mutual_information, sample_baynet
from .synthpop import CartConfig, CartModel, fit_synthpop, sample_synthpop

KINDS = ("synthpop", "baynet", "privbayes", "independent")


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator kind plus hyperparameters, as known to the attacker."""

    kind: str = "baynet"
    max_parents: int = 2
    n_bins: int = 20
    smoothing: float = 1e-3
    epsilon: float = math.inf
    epsilon_split: float = 0.5
    table_sensitivity: float = 2.0
    theta: float | None = 4.0  # PrivBayes usefulness bound; None disables it
    max_depth: int = 8
    min_leaf: int = 5
    random_order: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown generator kind {self.kind!r}; choose from {KINDS}")
        if self.max_parents < 1:
            raise ConfigError(f"max_parents must be >= 1, got {self.max_parents}")
        if self.kind == "privbayes" and not (self.epsilon > 0):
            raise InvalidEpsilon(f"epsilon must be > 0, got {self.epsilon}")

    def resolved(self) -> "GeneratorSpec":
        """PrivBayes with an infinite budget is plain BayNet."""
        if self.kind == "privbayes" and math.isinf(self.epsilon):
            return GeneratorSpec(**{**asdict(self), "kind": "baynet"})
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class IndependentModel:
    """Ignores its training rows: uniform over the schema's universes and bounds."""

    schema: Schema


def fit(spec: GeneratorSpec, dataset: Dataset, seed=None):
    spec = spec.resolved()
    if spec.kind == "baynet":
        return fit_baynet(dataset, spec.max_parents, seed, spec.n_bins, spec.smoothing)
    if spec.kind == "privbayes":
        return fit_privbayes(
            dataset,
            spec.epsilon,
            spec.epsilon_split,
            spec.max_parents,
            seed,
            spec.n_bins,
            spec.table_sensitivity,
            spec.theta,
        )
    if spec.kind == "synthpop":
        return fit_synthpop(dataset, CartConfig(spec.max_depth, spec.min_leaf, spec.random_order), seed)
    return IndependentModel(dataset.schema)


def _sample_independent(model: IndependentModel, m: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    out = np.empty((m, model.schema.n_attributes))
    for j, a in enumerate(model.schema.attributes):
        if a.is_categorical:
            out[:, j] = rng.integers(len(a.kind.values), size=m)
        else:
            out[:, j] = rng.uniform(a.kind.observed_min, a.kind.observed_max, size=m)
    return Dataset(model.schema, out)


def generate(model, m: int, seed=None) -> Dataset:
    """Draw ``m`` i.i.d. synthetic records from a fitted model."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if isinstance(model, BayesNetModel):
        return sample_baynet(model, m, seed)
    if isinstance(model, CartModel):
        return sample_synthpop(model, m, seed)
    if isinstance(model, IndependentModel):
        return _sample_independent(model, m, seed)
    raise TypeError(f"not a fitted generator model: {type(model).__name__}")


__all__ = [
    "BayesNetModel",
    "CartConfig",
    "CartModel",
    "GeneratorSpec",
    "IndependentModel",
    "fit",
    "fit_baynet",
    "fit_privbayes",
    "fit_synthpop",
    "generate",
    "mutual_information",
]
