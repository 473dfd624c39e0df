"""Experiment configuration files (YAML).

A config names the data (files, or the built-in ground-truth population),
the game sizes, generator, attacks and an optional sweep. Unknown keys and
bad values are reported with the offending field and its line number.

Example::

    seed: 7
    preset: desk
    population: {size: 20000, seed: 7}
    partition: [10000, 5000]
    methods: [distance, random, rare_value, log_likelihood]
    R: 10
    generator: {kind: baynet}
    sweep: {epsilon: [1, 10, 100, inf]}
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .attack import ATTACKS, GameConfig
from .attention import TrainConfig
from .encoding import Metric
from .errors import ConfigError
from .generators import GeneratorSpec
from .selection import DEFAULT_K, METHODS

SWEEPS = ("k", "metric", "epsilon")
PRESETS = ("desk", "paper")

_TOP_KEYS = {
    "seed", "preset", "data", "schema", "population", "partition", "methods", "R", "k", "metric",
    "attacks", "game", "generator", "forest", "attention", "selection", "sweep", "plots", "workers",
}
_GAME_KEYS = {"dataset_size", "n_shadow", "n_test", "n_queries"}
_FOREST_KEYS = {"n_trees", "max_depth", "max_features", "min_samples_split"}
_SELECTION_KEYS = {"rare_threshold", "percentile", "n_buckets"}


class ConfigFieldError(ConfigError):
    def __init__(self, field_name: str, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_name}: {message}")
        self.field = field_name
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    game: GameConfig
    preset: str = "desk"
    data: str | None = None
    schema: str | None = None
    population: tuple | None = None  # (size, seed) of the built-in population
    partition: tuple = (10000, 5000)
    methods: tuple = METHODS
    R: int = 10
    k: int = DEFAULT_K
    metric: Metric = field(default_factory=Metric)
    attacks: tuple = ("query_based",)
    selection: dict = field(default_factory=dict)
    sweep: tuple | None = None  # (parameter, values)
    plots: bool = True
    workers: int = 1

    def echo(self) -> dict:
        """Every resolved setting, in a stable order, for the report header."""
        g = self.game
        out = {
            "seed": self.seed,
            "preset": self.preset,
            "data": self.data,
            "schema": self.schema,
            "population": list(self.population) if self.population else None,
            "partition": list(self.partition),
            "methods": list(self.methods),
            "R": self.R,
            "k": self.k,
            "metric": self.metric.id,
            "attacks": list(self.attacks),
            "game.dataset_size": g.dataset_size,
            "game.n_shadow": g.n_shadow,
            "game.n_test": g.n_test,
            "game.n_queries": g.n_queries,
        }
        out.update({f"generator.{k}": v for k, v in g.generator.to_dict().items()})
        out.update({f"forest.{k}": getattr(g.forest, k) for k in sorted(_FOREST_KEYS)})
        if "target_attention" in self.attacks:
            out.update({f"attention.{k}": v for k, v in sorted(vars(g.attention).items())})
        out.update({f"selection.{k}": v for k, v in sorted(self.selection.items())})
        if self.sweep:
            out["sweep.parameter"] = self.sweep[0]
            out["sweep.values"] = [_fmt_value(v) for v in self.sweep[1]]
        return {k: list(v) if isinstance(v, tuple) else _fmt_value(v) for k, v in out.items()}


def _fmt_value(v):
    if isinstance(v, Metric):
        return v.id
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _lines(text: str) -> dict:
    """Map 'key' and 'key.sub' paths to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    out = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}{k.value}"
                out[path] = k.start_mark.line + 1
                walk(v, path + ".")

    walk(root, "")
    return out


class _Reader:
    def __init__(self, raw: dict, lines: dict):
        self.raw = raw
        self.lines = lines

    def fail(self, path: str, message: str):
        top = path.split(".")[0]
        raise ConfigFieldError(path, message, self.lines.get(path, self.lines.get(top)))

    def section(self, key: str, allowed: set) -> dict:
        val = self.raw.get(key) or {}
        if not isinstance(val, dict):
            self.fail(key, "expected a mapping")
        for sub in val:
            if sub not in allowed:
                self.fail(f"{key}.{sub}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return val

    def integer(self, path: str, value, minimum: int = 0) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if value < minimum:
            self.fail(path, f"must be >= {minimum}, got {value}")
        return value


def parse_epsilon(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    eps = float(value)
    if not eps > 0:
        raise ValueError(f"epsilon must be > 0, got {value!r}")
    return eps


def parse_config(
    text: str,
    base_dir: Path | None = None,
    seed: int | None = None,
    preset: str | None = None,
    data: str | None = None,
    schema: str | None = None,
) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from YAML text.

    ``seed``, ``preset``, ``data`` and ``schema`` override the file
    (command-line flags win).
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigFieldError("<file>", f"invalid YAML: {exc}", mark.line + 1 if mark else None) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigFieldError("<file>", "top level must be a mapping", 1)
    rd = _Reader(raw, _lines(text))
    for key in raw:
        if key not in _TOP_KEYS:
            rd.fail(str(key), "unknown key")

    if seed is None:
        if "seed" not in raw:
            raise ConfigFieldError("seed", "a master seed is required (config 'seed' or --seed)")
        seed = rd.integer("seed", raw["seed"])
    preset = preset or raw.get("preset", "desk")
    if preset not in PRESETS:
        rd.fail("preset", f"expected one of {PRESETS}, got {preset!r}")

    def resolve(p):
        if p is None:
            return None
        p = Path(str(p))
        return os.path.normpath(p if p.is_absolute() or base_dir is None else base_dir / p)

    if data is not None:
        raw = {k: v for k, v in raw.items() if k != "population"}
    data = data if data is not None else resolve(raw.get("data"))
    schema = schema if schema is not None else resolve(raw.get("schema"))
    population = None
    if "population" in raw:
        pop = rd.section("population", {"size", "seed"})
        population = (
            rd.integer("population.size", pop.get("size", 20000), 2),
            rd.integer("population.seed", pop.get("seed", seed)),
        )
    if (data is None) == (population is None):
        rd.fail("data", "give either data+schema files or a population section, not both")
    if data is not None and schema is None:
        rd.fail("schema", "required together with data")

    part = raw.get("partition", [10000, 5000])
    if not isinstance(part, list) or len(part) != 2:
        rd.fail("partition", "expected [n_aux, n_test]")
    part = tuple(rd.integer("partition", v, 1) for v in part)

    methods = tuple(raw.get("methods", METHODS))
    for m in methods:
        if m not in METHODS:
            rd.fail("methods", f"unknown method {m!r} (choose from {', '.join(METHODS)})")
    if not methods:
        rd.fail("methods", "empty list")
    attacks = tuple(raw.get("attacks", ["query_based"]))
    for a in attacks:
        if a not in ATTACKS:
            rd.fail("attacks", f"unknown attack {a!r} (choose from {', '.join(ATTACKS)})")
    if not attacks:
        rd.fail("attacks", "empty list")

    R = rd.integer("R", raw.get("R", 10), 1)
    k = rd.integer("k", raw.get("k", DEFAULT_K), 1)
    try:
        metric = Metric.parse(raw.get("metric", "cosine"))
    except ValueError as exc:
        rd.fail("metric", str(exc))

    game_kw = {key: rd.integer(f"game.{key}", v, 1) for key, v in rd.section("game", _GAME_KEYS).items()}
    for key in ("n_shadow", "n_test"):
        if key in game_kw and game_kw[key] % 2:
            rd.fail(f"game.{key}", f"must be even so IN/OUT labels balance, got {game_kw[key]}")

    gen_raw = dict(rd.section("generator", set(GeneratorSpec.__dataclass_fields__)))
    if "epsilon" in gen_raw:
        try:
            gen_raw["epsilon"] = parse_epsilon(gen_raw["epsilon"])
        except (TypeError, ValueError) as exc:
            rd.fail("generator.epsilon", str(exc))
    try:
        generator = GeneratorSpec(**gen_raw)
    except (TypeError, ValueError) as exc:
        rd.fail("generator", str(exc))

    base = GameConfig.desk() if preset == "desk" else GameConfig.paper()
    forest_raw = rd.section("forest", _FOREST_KEYS)
    att_raw = rd.section("attention", set(TrainConfig.__dataclass_fields__))
    try:
        forest = replace(base.forest, **forest_raw)
        att = replace(base.attention, **att_raw)
        game = replace(base, generator=generator, forest=forest, attention=att, seed=seed, **game_kw)
    except (TypeError, ValueError) as exc:
        rd.fail("game", str(exc))

    selection = dict(rd.section("selection", _SELECTION_KEYS))

    sweep = None
    if "sweep" in raw:
        sw = rd.section("sweep", set(SWEEPS))
        if len(sw) != 1:
            rd.fail("sweep", f"name exactly one of {', '.join(SWEEPS)}")
        (param, values), = sw.items()
        if not isinstance(values, list) or not values:
            rd.fail(f"sweep.{param}", "needs a non-empty list of values")
        sweep = (param, _sweep_values(rd, param, values))

    workers = rd.integer("workers", raw.get("workers", 1), 1)
    plots = raw.get("plots", True)
    if not isinstance(plots, bool):
        rd.fail("plots", "expected true or false")

    return ExperimentConfig(
        seed=seed,
        game=game,
        preset=preset,
        data=data,
        schema=schema,
        population=population,
        partition=part,
        methods=methods,
        R=R,
        k=k,
        metric=metric,
        attacks=attacks,
        selection=selection,
        sweep=sweep,
        plots=plots,
        workers=workers,
    )


def _sweep_values(rd: _Reader, param: str, values: list) -> tuple:
    path = f"sweep.{param}"
    if param == "k":
        return tuple(rd.integer(path, v, 1) for v in values)
    if param == "metric":
        try:
            return tuple(Metric.parse(v) for v in values)
        except ValueError as exc:
            rd.fail(path, str(exc))
    try:
        return tuple(parse_epsilon(v) for v in values)
    except (TypeError, ValueError) as exc:
        rd.fail(path, str(exc))


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigFieldError("<file>", f"config file not found: {path}")
    return parse_config(path.read_text(), path.parent, **overrides)


def default_sweep_values(param: str) -> tuple:
    """Ranges used when ``sweep`` is requested from the command line without values."""
    if param == "k":
        return tuple(range(1, 51))
    if param == "metric":
        return (Metric("cosine"),) + tuple(Metric("minkowski", p) for p in (1, 2, 3, 4))
    if param == "epsilon":
        return (1.0, 10.0, 100.0, math.inf)
    raise ConfigError(f"unknown sweep {param!r}")
