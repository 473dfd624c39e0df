import math

import numpy as np
import pytest

from conftest import make_schema
from vulnrec.cli import main, run_config
from vulnrec.config import ConfigFieldError, default_sweep_values, load_config, parse_config
from vulnrec.data import Dataset, write_schema
from vulnrec.encoding import Metric
from vulnrec.report import Entry, ExperimentReport, extract_body, parse_ranking, parse_report
from vulnrec.selection import vulnerability_scores

TINY = """\
seed: 4
population: {size: 600}
partition: [300, 200]
methods: [distance, random, rare_value, log_likelihood]
R: 2
game: {dataset_size: 20, n_shadow: 20, n_test: 20, n_queries: 50}
forest: {n_trees: 10, max_depth: 4}
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(TINY)
    return path


@pytest.fixture
def sample_files(sample, tmp_path):
    sample.to_csv(tmp_path / "d.csv")
    write_schema(sample.schema, tmp_path / "s.yaml")
    return str(tmp_path / "d.csv"), str(tmp_path / "s.yaml")


def test_score_writes_a_parseable_ranking(sample, sample_files, tmp_path):
    data, schema = sample_files
    out = tmp_path / "rank.tsv"
    assert main(["score", "--data", data, "--schema", schema, "--out", str(out)]) == 0
    text = out.read_text()
    assert "# k: 5" in text.splitlines()[:4]
    back = parse_ranking(text)
    want = vulnerability_scores(sample, 5)
    assert np.array_equal(back.scores, want.scores) and np.array_equal(back.order, want.order)
    assert back.k == 5 and back.metric_id == "cosine"


def test_score_identical_rows_are_zero(tmp_path, capsys):
    s = make_schema("cn", [2, None])
    Dataset(s, np.array([[1, 3.0]] * 4)).to_csv(tmp_path / "d.csv")
    write_schema(s, tmp_path / "s.yaml")
    assert main(["score", "--data", str(tmp_path / "d.csv"), "--schema", str(tmp_path / "s.yaml"), "--k", "2"]) == 0
    assert parse_ranking(capsys.readouterr().out).scores.tolist() == [0.0] * 4


def test_select_requires_a_seed(sample_files, capsys):
    data, schema = sample_files
    assert main(["select", "--data", data, "--schema", schema, "--R", "3"]) == 1
    assert main(["select", "--data", data, "--schema", schema, "--R", "3", "--seed", "2"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[-4] == "position\trow_id" and len(rows) == 7


def test_exit_codes(tmp_path, tiny, sample_files):
    data, schema = sample_files
    assert main(["score", "--data", str(tmp_path / "missing.csv"), "--schema", schema]) == 2
    assert main(["score", "--data", data, "--schema", schema, "--k", "5000"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["attack", "--config", str(tmp_path / "nope.yaml"), "--seed", "1"]) == 1
    assert main(["report", str(tmp_path / "nope.txt")]) == 1


def test_odd_shadow_count_is_rejected_with_its_line(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(TINY.replace("n_shadow: 20", "n_shadow: 21"))
    assert main(["attack", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "game.n_shadow" in err and "line 6" in err
    assert not (tmp_path / "o").exists()


def test_missing_seed_is_an_error():
    text = "\n".join(l for l in TINY.splitlines() if not l.startswith("seed"))
    with pytest.raises(ConfigFieldError):
        parse_config(text)
    assert parse_config(text, seed=3).seed == 3


def test_config_validation():
    with pytest.raises(ConfigFieldError) as e:
        parse_config(TINY + "colour: blue\n")
    assert e.value.line == 8
    with pytest.raises(ConfigFieldError):
        parse_config(TINY + "data: x.csv\nschema: s.yaml\n")
    with pytest.raises(ConfigFieldError):
        parse_config(TINY.replace("random,", "lucky,"))
    with pytest.raises(ConfigFieldError):
        parse_config(TINY + "generator: {kind: privbayes, epsilon: 0}\n")
    with pytest.raises(ConfigFieldError):
        parse_config(TINY + "sweep: {k: []}\n")
    with pytest.raises(ConfigFieldError):
        parse_config(TINY + "sweep: {k: [1], metric: [cosine]}\n")
    cfg = parse_config(TINY + "generator: {kind: privbayes, epsilon: inf}\nsweep: {metric: [cosine, minkowski2]}\n")
    assert cfg.game.generator.epsilon == math.inf
    assert cfg.sweep == ("metric", (Metric("cosine"), Metric("minkowski", 2)))
    assert cfg.game.n_queries == 50 and cfg.game.forest.n_trees == 10


def test_default_sweep_ranges():
    assert default_sweep_values("k") == tuple(range(1, 51))
    assert [m.id for m in default_sweep_values("metric")] == [
        "cosine", "minkowski1", "minkowski2", "minkowski3", "minkowski4"
    ]
    assert math.inf in default_sweep_values("epsilon")


def test_empty_sweep_list_writes_nothing(tiny, tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "k", "--values", "--config", str(tiny), "--out", str(out)]) == 1
    assert not out.exists()


def test_attack_run_is_reproducible(tiny, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["attack", "--config", str(tiny), "--out", str(a)]) == 0
    assert main(["attack", "--config", str(tiny), "--out", str(b), "--threads", "2"]) == 0
    ta, tb = (a / "report.txt").read_text(), (b / "report.txt").read_text()
    assert extract_body(ta) == extract_body(tb)
    report = parse_report(ta)
    assert {e.method for e in report.entries} == {"distance", "random", "rare_value", "log_likelihood"}
    assert len(report.entries) == 8
    assert (a / "box_query_based.svg").read_text().startswith("<svg")
    # report subcommand recomputes the summary from the entries
    capsys.readouterr()
    assert main(["report", str(a / "report.txt"), "--out", str(tmp_path / "plots")]) == 0
    shown = capsys.readouterr().out
    for g, m, att, mean, std, n in report.summary():
        assert f"{mean:>8.4f}" in shown
    assert (tmp_path / "plots" / "box_query_based.svg").exists()


def test_seed_flag_overrides_file(tiny):
    cfg = load_config(tiny, seed=11)
    assert cfg.seed == 11 and cfg.game.seed == 11
    assert cfg.population == (600, 11)


def test_k_sweep_runs_and_plots(tiny, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "k", "--values", "2", "3", "--config", str(tiny), "--out", str(out)]) == 0
    report = parse_report((out / "report.txt").read_text())
    assert report.sweep == ("k", ["k=2", "k=3"])
    assert (out / "sweep_k_query_based.svg").exists()
    assert (out / "box_query_based_k-2.svg").exists()


def test_epsilon_sweep_sets_flags():
    cfg = parse_config(TINY.replace("distance, random, rare_value, log_likelihood", "distance") + "sweep: {epsilon: [1, inf]}\n")
    report = run_config(cfg)
    assert report.sweep == ("epsilon", ["epsilon=1", "epsilon=inf"])
    assert list(report.flags) == ["auc_nondecreasing_in_epsilon.distance.query_based"]
    assert {e.epsilon for e in report.entries} == {1.0, math.inf}


def test_report_statistics_recompute_from_entries():
    entries = [Entry("-", "distance", i, "query_based", None, auc) for i, auc in enumerate([0.6, 0.8, 0.7])]
    entries += [Entry("-", "random", 9, "query_based", None, 0.5)]
    report = ExperimentReport({"seed": 1}, entries)
    rows = report.summary()
    assert rows[0][:3] == ("-", "distance", "query_based")
    assert rows[0][3] == pytest.approx(0.7) and rows[0][4] == pytest.approx(np.std([0.6, 0.8, 0.7])) and rows[0][5] == 3
    back = parse_report(report.render())
    assert back.entries == report.entries and back.summary() == rows
    with pytest.raises(ValueError):
        ExperimentReport({}, [Entry("-", "distance", 0, "query_based", None, 1.2)])
    with pytest.raises(ValueError):
        extract_body("no marker here")
