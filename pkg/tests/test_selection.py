import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_schema, mixed_datasets, random_dataset
from vulnrec.data import Dataset
from vulnrec.errors import KTooLarge, NotEnoughQualifyingRecords, RTooLarge
from vulnrec.selection import (
    DEFAULT_K,
    VulnerabilityRanking,
    log_likelihoods,
    nearest_rank_percentile,
    rare_value_flags,
    select,
    select_log_likelihood,
    select_random,
    select_rare_value,
    select_top_r,
    vulnerability_scores,
)


def ranking(scores):
    scores = np.asarray(scores, dtype=float)
    return VulnerabilityRanking(scores, np.argsort(-scores, kind="stable"), 1, "cosine")


def test_default_k_is_five():
    assert DEFAULT_K == 5


def test_identical_rows_score_zero():
    s = make_schema("cn")
    ds = Dataset(s, np.array([[1, 2.0]] * 3))
    assert vulnerability_scores(ds, 2).scores.tolist() == [0.0, 0.0, 0.0]


def test_k_bounds():
    s = make_schema("n")
    ds = Dataset(s, np.arange(4.0)[:, None])
    with pytest.raises(KTooLarge):
        vulnerability_scores(ds, 4)
    with pytest.raises(KTooLarge):
        vulnerability_scores(ds, 0)


def test_categorical_toy_against_oracle():
    s = make_schema("ccc", [2, 3, 2])
    rows = [("v0", "v0", "v0"), ("v0", "v1", "v0"), ("v1", "v2", "v1"), ("v0", "v0", "v0"), ("v1", "v0", "v1"), ("v0", "v2", "v1")]
    ds = Dataset.from_records(s, rows)
    for k in (1, 2, 5):
        want = oracles.knn_scores(ds.records(), s, k)
        got = vulnerability_scores(ds, k).scores
        assert np.max(np.abs(got - want)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(mixed_datasets(min_rows=3, max_rows=25), st.sampled_from(["cosine", "minkowski2"]))
def test_scores_match_oracle(ds, metric):
    name, p = ("cosine", 2) if metric == "cosine" else ("minkowski", 2)
    recs = ds.records()
    for k in {1, min(5, len(ds) - 1)}:
        want = np.array(oracles.knn_scores(recs, ds.schema, k, name, p))
        assert np.max(np.abs(vulnerability_scores(ds, k, metric).scores - want)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(mixed_datasets(min_rows=6, max_rows=25))
def test_ranking_invariants_and_monotone_in_k(ds):
    prev = None
    for k in range(1, min(6, len(ds))):
        r = vulnerability_scores(ds, k)
        assert sorted(r.order.tolist()) == list(range(len(ds)))
        assert np.all(np.diff(r.scores[r.order]) <= 0)
        assert np.all(r.scores >= 0) and np.all(r.scores <= 1)
        if prev is not None:
            assert np.all(r.scores >= prev - 1e-12)
        prev = r.scores


def test_blocked_and_threaded_scoring_agree():
    ds = random_dataset(np.random.default_rng(0), 700, "ccnnc")
    a = vulnerability_scores(ds, 5).scores
    b = vulnerability_scores(ds, 5, workers=3).scores
    assert np.array_equal(a, b)


def test_top_r_without_ties():
    res = select_top_r(ranking([0.1, 0.9, 0.5, 0.7, 0.3]), 3, seed=0)
    assert res.selected == [1, 3, 2]
    assert select_top_r(ranking([0.1, 0.9, 0.5, 0.7, 0.3]), 3, seed=99).selected == [1, 3, 2]


def test_top_r_boundary_tie_is_seeded_uniform():
    r = ranking([0.9, 0.5, 0.5, 0.5])
    picks = []
    for seed in range(600):
        sel = select_top_r(r, 2, seed).selected
        assert sel[0] == 0 and sel[1] in (1, 2, 3)
        picks.append(sel[1])
    freq = np.bincount(picks, minlength=4)[1:] / len(picks)
    assert np.all(np.abs(freq - 1 / 3) < 0.07)
    assert select_top_r(r, 2, 5).selected == select_top_r(r, 2, 5).selected


def test_top_r_exhaustive_and_too_large():
    r = ranking([0.2, 0.2, 0.1])
    assert sorted(select_top_r(r, 3, 0).selected) == [0, 1, 2]
    with pytest.raises(RTooLarge):
        select_top_r(r, 4, 0)


def test_random_selection():
    ds = random_dataset(np.random.default_rng(1), 20, "cn")
    assert sorted(select_random(ds, 20, 0).selected) == list(range(20))
    assert select_random(ds, 10, 4).selected == select_random(ds, 10, 4).selected
    with pytest.raises(RTooLarge):
        select_random(ds, 21, 0)


def test_rare_value_continuous_tail():
    s = make_schema("n")
    ds = Dataset(s, np.arange(1.0, 101.0)[:, None])
    assert nearest_rank_percentile(np.arange(1.0, 101.0), 95) == oracles.nearest_rank(range(1, 101), 95) == 95
    flags = rare_value_flags(ds)
    assert flags[98] == 1  # value 99
    assert flags[94] == 0  # value 95 is not strictly above
    assert np.flatnonzero(flags).tolist() == [95, 96, 97, 98, 99]


def test_rare_value_categorical_frequency():
    s = make_schema("c", [2])
    data = np.zeros((1000, 1))
    data[123, 0] = 1
    ds = Dataset(s, data)
    flags = rare_value_flags(ds)
    assert flags[123] == 1 and flags.sum() == 1
    assert select_rare_value(ds, 1, 0).selected == [123]


def test_rare_value_no_qualifier():
    s = make_schema("cn")
    ds = Dataset(s, np.array([[0, 1.0]] * 10))
    with pytest.raises(NotEnoughQualifyingRecords) as e:
        select_rare_value(ds, 1, 0)
    assert e.value.qualifying == 0


def test_log_likelihood_frequency_oracle():
    s = make_schema("c", [2])
    ds = Dataset.from_records(s, [("v0",), ("v0",), ("v0",), ("v1",)])
    ll = log_likelihoods(ds)
    assert ll[3] == pytest.approx(math.log(0.25)) and ll[0] == pytest.approx(math.log(0.75))
    assert select_log_likelihood(ds, 1).selected == [3]


def test_log_likelihood_degenerate_ties():
    s = make_schema("cn")
    ds = Dataset(s, np.array([[1, 3.0]] * 7))
    assert select_log_likelihood(ds, 3).selected == [0, 1, 2]
    # independent uniform grid: every record equally likely
    grid = np.array([[a, b] for a in range(2) for b in range(2)] * 5, dtype=float)
    ds2 = Dataset(make_schema("cc", [2, 2]), grid)
    assert np.ptp(log_likelihoods(ds2)) == 0.0


@settings(max_examples=30, deadline=None)
@given(mixed_datasets(min_rows=12, max_rows=40), st.integers(0, 1000))
def test_selectors_return_distinct_valid_rows(ds, seed):
    R = 3
    for method in ("distance", "random", "log_likelihood", "rare_value"):
        try:
            a = select(method, ds, R, seed, k=2)
        except NotEnoughQualifyingRecords:
            continue
        b = select(method, ds, R, seed, k=2)
        assert a.selected == b.selected
        assert len(set(a.selected)) == R and all(0 <= i < len(ds) for i in a.selected)


def test_distance_selection_equals_oracle_ranking(sample):
    r = vulnerability_scores(sample, 5)
    want = oracles.top_r_ranking(r.scores.tolist(), 10)
    assert select_top_r(r, 10, 0).selected == want
