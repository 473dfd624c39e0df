"""Command-line interface.

    vulnrec score  --data D.csv --schema S.yaml [--k 5] [--metric cosine] [--out ranking.tsv]
    vulnrec select --data D.csv --schema S.yaml --method distance --R 10 --seed 1
    vulnrec attack --config exp.yaml --seed 1 [--preset desk] [--out results/]
    vulnrec sweep  {k,metric,epsilon} --config exp.yaml --seed 1 [--values ...]
    vulnrec report results/report.txt [--out plots/]

Exit codes: 0 success, 1 configuration error (including out-of-range k, R or p),
2 data error (including too few records qualifying for a method), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .attack import auc_trend_ok, run_record_experiment
from .config import (
    SWEEPS,
    ConfigFieldError,
    ExperimentConfig,
    default_sweep_values,
    load_config,
    parse_epsilon,
)
from .data import load_dataset
from .encoding import Metric
from .errors import ConfigError, DataError, InvalidOrder, KTooLarge, NotEnoughQualifyingRecords, RTooLarge
from .population import sample_population
from .report import Entry, ExperimentReport, format_ranking, parse_report, write_plots
from .selection import DEFAULT_K, METHODS, log_likelihoods, rare_value_flags, select, vulnerability_scores

log = logging.getLogger("vulnrec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_omega(cfg: ExperimentConfig):
    if cfg.population is not None:
        size, seed = cfg.population
        return sample_population(size, seed)
    return load_dataset(cfg.data, cfg.schema)


def _label(param: str, value) -> str:
    if isinstance(value, Metric):
        return f"{param}={value.id}"
    if isinstance(value, float) and math.isinf(value):
        return f"{param}=inf"
    if isinstance(value, float) and value.is_integer():
        return f"{param}={int(value)}"
    return f"{param}={value}"


def run_config(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Run the experiment (and sweep, if any) described by ``cfg``; returns the report."""
    workers = workers or cfg.workers
    start = time.perf_counter()
    omega = _load_omega(cfg)
    kw = dict(sizes=cfg.partition, selection_options=cfg.selection, workers=workers)
    points = [(None, cfg.game, cfg.k, cfg.metric)]
    if cfg.sweep:
        param, values = cfg.sweep
        if param == "k":
            points = [(v, cfg.game, v, cfg.metric) for v in values]
        elif param == "metric":
            points = [(v, cfg.game, cfg.k, v) for v in values]
        else:
            points = [
                (v, replace(cfg.game, generator=replace(cfg.game.generator, kind="privbayes", epsilon=v)), cfg.k, cfg.metric)
                for v in values
            ]
    # selection-only sweeps reuse attacks on targets already seen
    cache = {} if cfg.sweep and cfg.sweep[0] in ("k", "metric") else None
    entries, selections, labels, trend = [], {}, [], []
    for value, game, k, metric in points:
        group = "-" if value is None else _label(cfg.sweep[0], value)
        log.info("running %s", group)
        res = run_record_experiment(
            omega, cfg.methods, cfg.R, game, cfg.attacks, k=k, metric=metric, cache=cache, **kw
        )
        eps = game.generator.epsilon if game.generator.kind == "privbayes" else None
        if cfg.sweep and cfg.sweep[0] == "epsilon":
            res.epsilon = eps
            for r in res.results:
                r.epsilon = eps
            trend.append(res)
        labels.append(group)
        selections[group] = {m: list(rows) for m, rows in res.selections.items()}
        for r in res.results:
            entries.append(Entry(group, r.method, r.target_row, r.attack, r.epsilon, float(r.auc)))
    flags = {}
    if trend:
        for attack in cfg.attacks:
            for method in cfg.methods:
                flags[f"auc_nondecreasing_in_epsilon.{method}.{attack}"] = auc_trend_ok(trend, method, attack)
    runtime = {
        "generated": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "workers": workers,
        "wall_seconds": f"{time.perf_counter() - start:.1f}",
    }
    sweep = (cfg.sweep[0], labels) if cfg.sweep else None
    return ExperimentReport(cfg.echo(), entries, selections, sweep, flags, runtime)


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_score(args) -> int:
    ds = load_dataset(args.data, args.schema)
    ranking = vulnerability_scores(ds, args.k, Metric.parse(args.metric), workers=args.threads)
    flags = rare_value_flags(ds)
    ll = log_likelihoods(ds)
    _emit(format_ranking(ranking, ds.row_ids, flags, ll), args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    if args.seed is None:
        raise ConfigFieldError("--seed", "a seed is required")
    ds = load_dataset(args.data, args.schema)
    res = select(args.method, ds, args.R, args.seed, k=args.k, metric=Metric.parse(args.metric))
    lines = [f"# method: {args.method}", f"# R: {args.R}", f"# seed: {args.seed}", "position\trow_id"]
    lines += [f"{i}\t{int(ds.row_ids[i])}" for i in res.selected]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _experiment(args, sweep=None) -> int:
    cfg = load_config(args.config, seed=args.seed, preset=args.preset, data=args.data, schema=args.schema)
    if sweep is not None:
        cfg = replace(cfg, sweep=sweep(cfg))
    report = run_config(cfg, args.threads)
    out = Path(args.out)
    path = report.write(out / "report.txt")
    print(f"report written to {path}")
    if cfg.plots:
        for p in write_plots(report, out):
            print(f"plot written to {p}")
    return EXIT_OK


def cmd_attack(args) -> int:
    return _experiment(args)


def cmd_sweep(args) -> int:
    param = args.parameter

    def sweep_of(cfg):
        if args.values is not None:
            if not args.values:
                raise ConfigFieldError("--values", "empty sweep list")
            try:
                if param == "k":
                    vals = tuple(int(v) for v in args.values)
                elif param == "metric":
                    vals = tuple(Metric.parse(v) for v in args.values)
                else:
                    vals = tuple(parse_epsilon(v) for v in args.values)
            except ValueError as exc:
                raise ConfigFieldError("--values", str(exc)) from None
        elif cfg.sweep and cfg.sweep[0] == param:
            vals = cfg.sweep[1]
        else:
            vals = default_sweep_values(param)
        return (param, vals)

    return _experiment(args, sweep_of)


def cmd_report(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise ConfigFieldError("report", f"no such file: {path}")
    report = parse_report(path.read_text())
    print(f"{'group':<16}{'method':<16}{'attack':<18}{'mean':>8}{'std':>8}{'n':>5}")
    for g, m, a, mean, std, n in report.summary():
        print(f"{g:<16}{m:<16}{a:<18}{mean:>8.4f}{std:>8.4f}{n:>5}")
    if args.out:
        for p in write_plots(report, args.out):
            print(f"plot written to {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vulnrec", description="Find and audit membership-inference-vulnerable records.")
    parser.add_argument("--version", action="version", version=f"vulnrec {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p, required):
        p.add_argument("--data", required=required, help="CSV file with a header row")
        p.add_argument("--schema", required=required, help="YAML schema file")

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed (required for experiments)")
        p.add_argument("--threads", type=int, default=None, help="worker processes/threads")

    p = sub.add_parser("score", help="rank every record by its vulnerability score")
    data_flags(p, True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--metric", default="cosine", help="cosine or minkowskiP, e.g. minkowski2")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="pick R target records with one selection method")
    data_flags(p, True)
    p.add_argument("--method", choices=METHODS, default="distance")
    p.add_argument("--R", type=int, default=10)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--metric", default="cosine")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_select)

    for name, func, text in (
        ("attack", cmd_attack, "run the membership-inference experiment in a config"),
        ("sweep", cmd_sweep, "run the experiment across values of k, metric or epsilon"),
    ):
        p = sub.add_parser(name, help=text)
        if name == "sweep":
            p.add_argument("parameter", choices=SWEEPS)
            p.add_argument("--values", nargs="*", default=None, help="values to sweep (default: full range)")
        p.add_argument("--config", required=True, help="YAML experiment config")
        data_flags(p, False)
        common(p)
        p.add_argument("--preset", choices=("desk", "paper"), default=None)
        p.add_argument("--out", default="vulnrec-out", help="output directory")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="summarise a report file and redraw its plots")
    p.add_argument("report")
    p.add_argument("--out", help="directory for regenerated plots")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, KTooLarge, RTooLarge, InvalidOrder) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NotEnoughQualifyingRecords) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
