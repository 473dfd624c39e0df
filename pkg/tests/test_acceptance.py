"""Acceptance criteria 1-9. Each test records one PASS/FAIL line, printed at the end of the run."""

import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES, make_schema, planted_worlds, random_dataset
from vulnrec.attack import GameConfig, build_worlds, compute_auc, run_query_attack
from vulnrec.attention import (
    AttentionModelParams,
    TrainConfig,
    attention_weights,
    gradient_check,
    score_worlds,
    train,
)
from vulnrec.cli import run_config
from vulnrec.config import load_config
from vulnrec.data import Dataset, partition
from vulnrec.encoding import Metric
from vulnrec.generators import GeneratorSpec, fit_baynet, fit_privbayes, generate
from vulnrec.population import sample_population
from vulnrec.queries import answer_queries, answer_queries_naive, sample_queries
from vulnrec.report import extract_body
from vulnrec.selection import select_top_r, vulnerability_scores

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
WORKERS = min(8, os.cpu_count() or 1)
SEEDS = range(5)


def verdict(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_scores_match_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(51, 201))
        kinds = "".join(rng.choice(["c", "n"], size=int(rng.integers(1, 7))))
        ds = random_dataset(rng, n, kinds, card_max=5, int_grid=None if rng.random() < 0.5 else 4)
        want = oracles.knn_scores_multi(ds.records(), ds.schema, (1, 5, 50))
        for k in (1, 5, 50):
            got = vulnerability_scores(ds, k).scores
            worst = max(worst, float(np.max(np.abs(got - np.array(want[k])))))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-12 and elapsed < 60, f"max |score - oracle| = {worst:.2e} over 50 datasets, {elapsed:.1f}s")


def test_criterion_2_fast_queries_equal_naive():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    instances = mismatches = 0
    for d in range(100):
        n = int(rng.integers(0, 1001))
        kinds = "".join(rng.choice(["c", "n"], size=int(rng.integers(1, 9))))
        ds = random_dataset(rng, n, kinds, int_grid=None if d % 2 else 6)
        if n and rng.random() < 0.7:
            target = ds.data[rng.integers(n)]
        else:
            target = np.array([
                rng.integers(len(a.kind.values)) if a.is_categorical else rng.normal(0, 10)
                for a in ds.schema.attributes
            ], dtype=float)
        qs = sample_queries(ds.schema, target, 100, int(rng.integers(2**31)))
        fast, naive = answer_queries(ds, qs), answer_queries_naive(ds, qs)
        instances += len(qs)
        mismatches += int(np.sum(fast != naive))
    elapsed = time.perf_counter() - start
    verdict(2, mismatches == 0 and instances == 10000 and elapsed < 120,
            f"{mismatches} mismatches in {instances} instances, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def desk_reports():
    start = time.perf_counter()
    reports = {s: run_config(load_config(CONFIGS / "desk.yaml", seed=s), WORKERS) for s in SEEDS}
    return reports, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_3_distance_beats_random(desk_reports):
    reports, elapsed = desk_reports
    gaps = []
    for s in SEEDS:
        means = {m: mean for _, m, a, mean, _, _ in reports[s].summary()}
        gaps.append(means["distance"] - means["random"])
    wins = sum(g >= 0.05 for g in gaps)
    verdict(3, wins >= 4 and elapsed < 45 * 60,
            f"AUC gap distance-random per seed {[round(g, 3) for g in gaps]}, {wins}/5 >= 0.05, "
            f"{elapsed / 60:.1f} min on {WORKERS} worker(s)")


@pytest.mark.slow
def test_criterion_4_privacy_budget():
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "dp.yaml", seed=0)
    cfg = replace(cfg, sweep=("epsilon", (1.0, 100.0)))
    report = run_config(cfg, WORKERS)
    means = {g: mean for g, m, a, mean, _, _ in report.summary() if m == "distance"}
    low, high = means["epsilon=1"], means["epsilon=100"]
    elapsed = time.perf_counter() - start
    ok = 0.4 <= low <= 0.6 and high - low >= 0.05 and elapsed < 3600
    verdict(4, ok, f"mean AUC eps=1 {low:.3f}, eps=100 {high:.3f} (diff {high - low:+.3f}), {elapsed:.0f}s")


def test_criterion_5_privbayes_limit_is_baynet():
    rng = np.random.default_rng(5)
    a = rng.integers(2, size=2000)
    b = np.where(rng.random(2000) < 0.9, a, 1 - a)
    c = rng.integers(2, size=2000)
    ds = Dataset(make_schema("ccc", [2, 2, 2]), np.column_stack([a, b, c]).astype(float))
    pb = generate(fit_privbayes(ds, 1e6, seed=1), 10000, seed=2)
    bn = generate(fit_baynet(ds, seed=3), 10000, seed=4)
    tv = oracles.total_variation([tuple(r) for r in pb.data], [tuple(r) for r in bn.data])
    verdict(5, tv <= 0.05, f"TV(PrivBayes eps=1e6, BayNet) = {tv:.4f}")


def test_criterion_6_target_attention():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    cfg = TrainConfig(dropout=0.0)
    worst_grad, worst_sum = 0.0, 0.0
    for i in range(20):
        width, B, X = int(rng.integers(3, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 7))
        params = AttentionModelParams.init(width, cfg, seed=i)
        R = rng.normal(size=(B, X, width))
        mask = rng.random((B, X)) < 0.7
        mask[:, 0] = True
        T = rng.normal(size=(B, width))
        y = rng.integers(0, 2, size=B).astype(float)
        worst_grad = max(worst_grad, gradient_check(params, (R, mask, T, y)).max_rel_error)
        a = attention_weights(params, R, mask, T)
        worst_sum = max(worst_sum, float(np.max(np.abs(a.sum(axis=1) - 1.0))))
    worlds, target, schema, stats = planted_worlds(300, seed=0)
    held, *_ = planted_worlds(200, seed=1)
    pcfg = TrainConfig(epochs=60, top_x=20)
    params = train(worlds, target, schema, stats, pcfg, seed=2)
    auc = compute_auc(score_worlds(params, held, target, schema, stats, pcfg.top_x), [w.label for w in held])
    elapsed = time.perf_counter() - start
    ok = worst_grad < 1e-4 and auc > 0.9 and worst_sum <= 1e-9 and elapsed < 600
    verdict(6, ok, f"max grad rel err {worst_grad:.2e}, planted AUC {auc:.3f}, "
                   f"max |sum(softmax) - 1| {worst_sum:.1e}, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_null_signal():
    aucs = []
    for s in SEEDS:
        pop = sample_population(20000, s)
        aux, test = partition(pop, (10000, 5000), s)
        game = GameConfig.desk(n_test=200, generator=GeneratorSpec("independent"), seed=s)
        target = aux.data[int(np.random.default_rng(s).integers(len(aux)))]
        shadow = build_worlds(aux, target, game.n_shadow, game, s, 0, "shadow", WORKERS)
        tests = build_worlds(test, target, game.n_test, game, s, 0, "test", WORKERS)
        aucs.append(run_query_attack(target, shadow, tests, game, s).auc)
    ok = all(0.4 <= a <= 0.6 for a in aucs)
    verdict(7, ok, f"independent-generator AUC per seed {[round(a, 3) for a in aucs]}")


# top-10 selections from the brute-force oracle on the bundled sample (oracle run, frozen)
ORACLE_TOP10 = {
    "k4": [262, 710, 344, 189, 335, 531, 500, 221, 308, 422],
    "k5": [262, 710, 344, 189, 335, 531, 221, 500, 308, 422],
    "minkowski2": [262, 710, 344, 221, 189, 531, 500, 308, 422, 583],
}


def test_criterion_8_robust_to_k_and_metric(sample):
    top = {
        "k4": select_top_r(vulnerability_scores(sample, 4), 10, 0).selected,
        "k5": select_top_r(vulnerability_scores(sample, 5), 10, 0).selected,
        "minkowski2": select_top_r(vulnerability_scores(sample, 5, Metric("minkowski", 2)), 10, 0).selected,
    }
    matches_oracle = all(top[key] == ORACLE_TOP10[key] for key in top)
    k_overlap = len(set(top["k4"]) & set(top["k5"]))
    m_overlap = len(set(top["k5"]) & set(top["minkowski2"]))
    ok = matches_oracle and k_overlap >= 6 and m_overlap >= 5
    verdict(8, ok, f"top-10 overlap k=4/k=5 {k_overlap}, cosine/minkowski2 {m_overlap}, "
                   f"selections equal oracle: {matches_oracle}")


@pytest.mark.slow
def test_criterion_9_rerun_is_byte_identical(desk_reports, tmp_path):
    reports, _ = desk_reports
    first = reports[0].write(tmp_path / "first.txt")
    again = run_config(load_config(CONFIGS / "desk.yaml", seed=0), 1).write(tmp_path / "again.txt")
    a, b = extract_body(first.read_text()), extract_body(again.read_text())
    verdict(9, a.encode() == b.encode(), f"report bodies identical: {a == b} ({len(a.encode())} bytes)")
