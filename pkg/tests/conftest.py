from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from vulnrec.data import Attribute, Categorical, Continuous, Dataset, Schema


def make_schema(kinds, cards=None) -> Schema:
    """``kinds`` is a string like "ccn": c = categorical, n = continuous."""
    attrs = []
    for j, k in enumerate(kinds):
        if k == "c":
            card = cards[j] if cards else 3
            attrs.append(Attribute(f"a{j}", Categorical(tuple(f"v{i}" for i in range(card)))))
        else:
            attrs.append(Attribute(f"a{j}", Continuous()))
    return Schema(tuple(attrs))


def random_dataset(rng: np.random.Generator, n: int, kinds: str, card_max: int = 4, int_grid: int | None = None):
    """Random mixed dataset; ``int_grid`` draws continuous values from a small grid to force ties."""
    cards = [int(rng.integers(1, card_max + 1)) for _ in kinds]
    schema = make_schema(kinds, cards)
    cols = []
    for k, card in zip(kinds, cards):
        if k == "c":
            cols.append(rng.integers(card, size=n).astype(np.float64))
        elif int_grid:
            cols.append(rng.integers(int_grid, size=n).astype(np.float64))
        else:
            cols.append(np.round(rng.normal(0, 10, size=n), 3))
    data = np.column_stack(cols) if n else np.empty((0, len(kinds)))
    return Dataset(schema.with_bounds(data), data)


@st.composite
def mixed_datasets(draw, min_rows=2, max_rows=30, max_attrs=5):
    kinds = draw(st.text(alphabet="cn", min_size=1, max_size=max_attrs))
    n = draw(st.integers(min_rows, max_rows))
    seed = draw(st.integers(0, 2**32 - 1))
    grid = draw(st.sampled_from([None, 3]))
    return random_dataset(np.random.default_rng(seed), n, kinds, int_grid=grid)


@pytest.fixture(scope="session")
def sample():
    from vulnrec.population import load_sample

    return load_sample()


def planted_worlds(n_worlds: int, seed: int, copies: int = 1, size: int = 40):
    """Labelled worlds where IN releases hold exact copies of an outlying target.

    Pool rows never use the last level of either categorical attribute; the
    target uses both. Returns (worlds, target_row, schema, stats).
    """
    from types import SimpleNamespace

    from vulnrec.encoding import NormalizationStats

    rng = np.random.default_rng(seed)
    fixed = np.random.default_rng(12345)
    pool = np.column_stack(
        [fixed.integers(3, size=(400, 2)), np.round(fixed.normal(0, 10, size=(400, 2)), 3)]
    ).astype(np.float64)
    target = np.array([3.0, 3.0, 0.0, 0.0])
    schema = make_schema("ccnn", [4, 4, None, None]).with_bounds(np.vstack([pool, target]))
    labels = np.array([1, 0] * (n_worlds // 2))
    worlds = []
    for label in labels:
        rows = pool[rng.choice(len(pool), size=size, replace=False)]
        if label:
            rows[:copies] = target
        worlds.append(SimpleNamespace(synthetic=Dataset(schema, rows), label=int(label)))
    return worlds, target, schema, NormalizationStats.from_dataset(Dataset(schema, np.vstack([pool, target])))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
