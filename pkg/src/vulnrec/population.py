"""A known, seeded ground-truth population for experiments and examples.

Eight attributes (three continuous, five categorical) are drawn from a small
hand-specified Bayesian network loosely modelled on census microdata:

    age -> education -> occupation -> hours -> income
    age -> marital;  sex -> occupation, hours;  region (independent, rare level)

Several levels are deliberately rare, so the population has a long tail of
outlying records next to a dense core of near-duplicates.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .data import Attribute, Categorical, Continuous, Dataset, Schema, load_dataset

SEX = ("female", "male")
EDUCATION = ("primary", "secondary", "bachelors", "masters", "doctorate")
OCCUPATION = ("manual", "clerical", "service", "professional", "executive", "farming", "military")
MARITAL = ("single", "married", "divorced", "widowed")
REGION = ("north", "south", "east", "west", "island")

# P(education | age band); bands: <30, 30-59, 60+
_EDU = np.array(
    [
        [0.20, 0.55, 0.20, 0.045, 0.005],
        [0.15, 0.45, 0.25, 0.12, 0.03],
        [0.40, 0.40, 0.13, 0.05, 0.02],
    ]
)
# P(occupation | education), before the sex adjustment
_OCC = np.array(
    [
        [0.50, 0.10, 0.25, 0.01, 0.005, 0.12, 0.015],
        [0.30, 0.30, 0.25, 0.06, 0.03, 0.05, 0.01],
        [0.05, 0.25, 0.10, 0.45, 0.13, 0.01, 0.01],
        [0.02, 0.10, 0.05, 0.55, 0.27, 0.005, 0.005],
        [0.01, 0.04, 0.02, 0.70, 0.22, 0.005, 0.005],
    ]
)
# multiplicative sex adjustment per occupation (female, male)
_OCC_SEX = np.array([[0.6, 1.4], [1.4, 0.6], [1.3, 0.7], [1.0, 1.0], [0.7, 1.3], [0.6, 1.4], [0.3, 1.7]])
# P(marital | age band)
_MAR = np.array([[0.75, 0.22, 0.025, 0.005], [0.20, 0.62, 0.16, 0.02], [0.08, 0.55, 0.14, 0.23]])
_REGION = np.array([0.30, 0.28, 0.22, 0.193, 0.007])
_HOURS_MEAN = np.array([42.0, 38.0, 32.0, 44.0, 52.0, 50.0, 48.0])
_INCOME_BASE = np.array([9.6, 9.9, 10.3, 10.6, 10.9])  # log-scale by education
_INCOME_OCC = np.array([0.0, 0.05, -0.1, 0.25, 0.6, -0.2, 0.1])


def population_schema() -> Schema:
    attrs = (
        Attribute("age", Continuous()),
        Attribute("sex", Categorical(SEX)),
        Attribute("education", Categorical(EDUCATION)),
        Attribute("occupation", Categorical(OCCUPATION)),
        Attribute("marital", Categorical(MARITAL)),
        Attribute("hours", Continuous()),
        Attribute("region", Categorical(REGION)),
        Attribute("income", Continuous()),
    )
    return Schema(attrs)


def _draw(rng, probs):
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return (u[:, None] >= cdf).sum(axis=1)


def sample_population(n: int, seed=None) -> Dataset:
    rng = np.random.default_rng(seed)
    age = np.round(18 + 72 * rng.beta(2.0, 3.0, size=n))
    band = np.digitize(age, [30, 60])
    sex = (rng.random(n) < 0.49).astype(np.int64)
    edu = _draw(rng, _EDU[band])
    occ_p = _OCC[edu] * _OCC_SEX[:, sex].T
    occ = _draw(rng, occ_p)
    mar = _draw(rng, _MAR[band])
    hours = np.round(rng.normal(_HOURS_MEAN[occ] - 4.0 * (sex == 0), 7.0))
    hours = np.clip(hours, 1, 99)
    region = _draw(rng, np.tile(_REGION, (n, 1)))
    log_inc = _INCOME_BASE[edu] + _INCOME_OCC[occ] + 0.012 * (hours - 40) + rng.normal(0, 0.35, size=n)
    income = np.round(np.exp(log_inc), -2)
    data = np.column_stack([age, sex, edu, occ, mar, hours, region, income]).astype(np.float64)
    schema = population_schema()
    return Dataset(schema.with_bounds(data), data)


def load_sample() -> Dataset:
    """The bundled 1000-row sample drawn from the ground-truth population."""
    base = resources.files("vulnrec") / "data"
    with resources.as_file(base / "sample.csv") as data, resources.as_file(base / "sample_schema.yaml") as schema:
        return load_dataset(data, schema)


SAMPLE_SEED = 20230611
SAMPLE_SIZE = 1000
