"""Experiment configuration: YAML loading, defaults and validation."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..estimators import ESTIMATORS, canonical_name
from ..noise import NoiseError, NoiseModel

__all__ = ["ConfigError", "EstimatorSpec", "ExperimentConfig", "load_config", "parse_config"]

EXPERIMENTS = ("steady_state", "step_size_sweep", "time_varying", "noise_dump", "theory")
GRAPH_KINDS = ("sensor", "knn", "edgelist")

_TOP_KEYS = {
    "experiment", "graph", "dataset", "bandwidth", "samples", "estimators", "step_sizes",
    "noise", "runs", "iterations", "seed", "outdir", "threads", "window", "signal_scale",
    "tracked_node", "burn_in", "noise_samples", "p_s", "flom_draws", "cache_dir",
}
_EST_KEYS = {"name", "mu", "mu_bound_fraction", "p"}

DEFAULTS = {
    "runs": 100,
    "iterations": 2400,
    "seed": 0,
    "outdir": "results",
    "threads": 1,
    "window": 500,
    "signal_scale": 1.0,
    "tracked_node": 0,
    "burn_in": 50,
    "noise_samples": 100_000,
    "p_s": 0.99,
    "flom_draws": 1_000_000,
    "cache_dir": None,
}
TIME_VARYING_MU = 1.5


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violation found."""

    def __init__(self, problems, source=None):
        self.problems = list(problems)
        where = f"{source}: " if source else ""
        super().__init__(where + "invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass
class EstimatorSpec:
    name: str
    mu: float | None = None
    mu_bound_fraction: float | None = None
    p: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name}
        for k in ("mu", "mu_bound_fraction", "p"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        return d


@dataclass
class ExperimentConfig:
    experiment: str
    graph: dict
    noise: NoiseModel | None
    estimators: list[EstimatorSpec] = field(default_factory=list)
    dataset: dict | None = None
    bandwidth: int | None = None
    samples: int | None = None
    step_sizes: list[float] = field(default_factory=list)
    runs: int = DEFAULTS["runs"]
    iterations: int | None = DEFAULTS["iterations"]
    seed: int = DEFAULTS["seed"]
    outdir: str = DEFAULTS["outdir"]
    threads: int = DEFAULTS["threads"]
    window: int = DEFAULTS["window"]
    signal_scale: float = DEFAULTS["signal_scale"]
    tracked_node: int = DEFAULTS["tracked_node"]
    burn_in: int = DEFAULTS["burn_in"]
    noise_samples: int = DEFAULTS["noise_samples"]
    p_s: float = DEFAULTS["p_s"]
    flom_draws: int = DEFAULTS["flom_draws"]
    cache_dir: str | None = DEFAULTS["cache_dir"]
    warnings: list[str] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        """Fully resolved configuration, suitable for echoing next to outputs."""
        d = {
            "experiment": self.experiment,
            "graph": copy.deepcopy(self.graph),
            "noise": self.noise.to_dict() if self.noise else None,
            "estimators": [e.to_dict() for e in self.estimators],
        }
        for key in (
            "dataset", "bandwidth", "samples", "step_sizes", "runs", "iterations", "seed",
            "outdir", "threads", "window", "signal_scale", "tracked_node", "burn_in",
            "noise_samples", "p_s", "flom_draws", "cache_dir",
        ):
            d[key] = copy.deepcopy(getattr(self, key))
        d["warnings"] = list(self.warnings)
        return d


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _default_p(noise: NoiseModel | None) -> float:
    if noise is not None and noise.kind == "sas":
        return round(noise.alpha - 0.05, 12)
    return 1.5


def _parse_estimators(raw, noise, experiment, problems, warnings) -> list[EstimatorSpec]:
    if raw is None and experiment == "step_size_sweep":
        raw = [{"name": "gsign"}]
    if not isinstance(raw, list) or not raw:
        problems.append("'estimators' must be a non-empty list")
        return []
    specs, seen = [], set()
    for i, entry in enumerate(raw):
        if isinstance(entry, str):
            entry = {"name": entry}
        if not isinstance(entry, dict) or "name" not in entry:
            problems.append(f"estimators[{i}] must be a mapping with a 'name'")
            continue
        unknown = set(entry) - _EST_KEYS
        if unknown:
            problems.append(f"estimators[{i}]: unknown keys {sorted(unknown)}")
        try:
            name = canonical_name(entry["name"])
        except ValueError:
            problems.append(
                f"estimators[{i}]: unknown estimator {entry['name']!r}; "
                f"valid estimators: {', '.join(ESTIMATORS)}"
            )
            continue
        if name in seen:
            problems.append(f"estimators[{i}]: duplicate estimator {name!r}")
            continue
        seen.add(name)
        spec = EstimatorSpec(name, entry.get("mu"), entry.get("mu_bound_fraction"), entry.get("p"))
        if spec.mu is not None and spec.mu_bound_fraction is not None:
            problems.append(f"estimators[{i}]: give either 'mu' or 'mu_bound_fraction', not both")
        if spec.mu is not None and not (_is_num(spec.mu) and spec.mu > 0):
            problems.append(f"estimators[{i}]: mu must be a positive number, got {spec.mu!r}")
        if spec.mu_bound_fraction is not None:
            if name != "gsign":
                problems.append(f"estimators[{i}]: mu_bound_fraction only applies to gsign")
            elif not (_is_num(spec.mu_bound_fraction) and spec.mu_bound_fraction > 0):
                problems.append(f"estimators[{i}]: mu_bound_fraction must be positive")
        if spec.mu is None and spec.mu_bound_fraction is None:
            if experiment == "time_varying":
                spec.mu = TIME_VARYING_MU
            elif experiment != "step_size_sweep":
                problems.append(f"estimators[{i}] ({name}): a step size 'mu' is required")
        if name == "glmp":
            if spec.p is None:
                spec.p = _default_p(noise)
            if not (_is_num(spec.p) and 1 < spec.p < 2):
                problems.append(f"estimators[{i}]: GLMP needs 1 < p < 2, got {spec.p!r}")
            if noise is not None and noise.kind == "cauchy":
                warnings.append("GLMP is not run under Cauchy noise (p must exceed alpha = 1)")
                continue
        elif spec.p is not None:
            problems.append(f"estimators[{i}]: 'p' only applies to glmp")
        specs.append(spec)
    return specs


def _parse_graph(raw, experiment, problems) -> dict:
    if raw is None and experiment == "time_varying":
        raw = {"kind": "knn", "k": 8}
    if not isinstance(raw, dict):
        problems.append("'graph' must be a mapping with a 'kind'")
        return {}
    g = dict(raw)
    kind = g.get("kind")
    if kind not in GRAPH_KINDS:
        problems.append(f"graph.kind must be one of {GRAPH_KINDS}, got {kind!r}")
        return g
    allowed = {
        "sensor": {"kind", "n", "seed"},
        "knn": {"kind", "k", "coords"},
        "edgelist": {"kind", "edges", "coords"},
    }[kind]
    unknown = set(g) - allowed
    if unknown:
        problems.append(f"graph: unknown keys {sorted(unknown)} for kind {kind!r}")
    if kind == "sensor":
        if not (_is_int(g.get("n")) and g["n"] >= 2):
            problems.append("graph.n must be an integer >= 2")
        g.setdefault("seed", 0)
        if not _is_int(g["seed"]):
            problems.append("graph.seed must be an integer")
    elif kind == "knn":
        g.setdefault("k", 8)
        if not (_is_int(g["k"]) and g["k"] >= 1):
            problems.append("graph.k must be a positive integer")
        if "coords" not in g and experiment != "time_varying":
            problems.append("graph.coords (CSV path) is required for a knn graph")
    else:
        if "edges" not in g:
            problems.append("graph.edges (edge-list path) is required")
    return g


def _parse_dataset(raw, problems) -> dict | None:
    if raw is None:
        problems.append("time_varying experiments need a 'dataset' (files or synthetic)")
        return None
    if not isinstance(raw, dict):
        problems.append("'dataset' must be a mapping")
        return None
    d = dict(raw)
    if "synthetic" in d:
        syn = d["synthetic"] if isinstance(d["synthetic"], dict) else {}
        syn = {"n": 205, "t": 95, "seed": 0, **syn}
        for key in ("n", "t", "seed"):
            if not _is_int(syn[key]):
                problems.append(f"dataset.synthetic.{key} must be an integer")
        if _is_int(syn["t"]) and syn["t"] < 2:
            problems.append("dataset.synthetic.t must be >= 2")
        return {"synthetic": syn}
    missing = [k for k in ("readings", "coords") if k not in d]
    if missing:
        problems.append(f"dataset needs {missing} (or a 'synthetic' block)")
    return d


def parse_config(raw: dict, base_dir=None, source=None) -> ExperimentConfig:
    """Validate a configuration mapping and apply defaults."""
    problems: list[str] = []
    warnings: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"], source)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown top-level keys {sorted(unknown)}")

    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        problems.append(f"'experiment' must be one of {EXPERIMENTS}, got {experiment!r}")
        raise ConfigError(problems, source)

    noise = None
    if "noise" in raw:
        try:
            noise = NoiseModel.from_dict(raw["noise"] or {})
        except (NoiseError, TypeError) as exc:
            problems.append(f"noise: {exc}")
    else:
        problems.append("'noise' model is required")

    opts = {k: raw.get(k, v) for k, v in DEFAULTS.items() if k != "iterations"}
    for key in ("runs", "seed", "threads", "window", "tracked_node", "burn_in",
                "noise_samples", "flom_draws"):
        if not _is_int(opts[key]):
            problems.append(f"'{key}' must be an integer, got {opts[key]!r}")
    if _is_int(opts["runs"]) and opts["runs"] < 1:
        problems.append("'runs' must be >= 1")
    if _is_int(opts["threads"]) and opts["threads"] < 1:
        problems.append("'threads' must be >= 1")
    if _is_int(opts["window"]) and opts["window"] < 1:
        problems.append("'window' must be >= 1")
    if not (_is_num(opts["p_s"]) and 0 < opts["p_s"] < 1):
        problems.append(f"'p_s' must be in (0, 1), got {opts['p_s']!r}")
    if not (_is_num(opts["signal_scale"]) and opts["signal_scale"] > 0):
        problems.append("'signal_scale' must be a positive number")

    iterations = raw.get("iterations", None if experiment == "time_varying" else DEFAULTS["iterations"])
    if iterations is not None and not (_is_int(iterations) and iterations >= 1):
        problems.append(f"'iterations' must be a positive integer, got {iterations!r}")

    cfg = ExperimentConfig(
        experiment=experiment, graph={}, noise=noise, iterations=iterations,
        warnings=warnings, base_dir=Path(base_dir) if base_dir else Path.cwd(), **opts,
    )
    if experiment == "noise_dump":
        if problems:
            raise ConfigError(problems, source)
        return cfg

    cfg.graph = _parse_graph(raw.get("graph"), experiment, problems)
    if experiment == "time_varying":
        cfg.dataset = _parse_dataset(raw.get("dataset"), problems)
    estimators_raw = raw.get("estimators")
    if experiment == "theory" and estimators_raw is None:
        problems.append("theory needs a gsign estimator entry with 'mu' or 'mu_bound_fraction'")
    cfg.estimators = _parse_estimators(estimators_raw, noise, experiment, problems, warnings)
    if experiment in ("theory", "step_size_sweep") and any(e.name != "gsign" for e in cfg.estimators):
        problems.append(f"{experiment} uses the gsign estimator only")

    for key in ("bandwidth", "samples"):
        v = raw.get(key)
        if v is None:
            problems.append(f"'{key}' is required")
        elif not (_is_int(v) and v >= 1):
            problems.append(f"'{key}' must be a positive integer, got {v!r}")
        setattr(cfg, key, v)
    if _is_int(cfg.bandwidth) and _is_int(cfg.samples):
        if cfg.samples < cfg.bandwidth:
            problems.append(f"need |F| <= |S|: bandwidth {cfg.bandwidth} > samples {cfg.samples}")
        n = cfg.graph.get("n") if cfg.graph.get("kind") == "sensor" else None
        if experiment == "time_varying" and cfg.dataset and "synthetic" in cfg.dataset:
            n = cfg.dataset["synthetic"]["n"]
        if _is_int(n) and cfg.samples > n:
            problems.append(f"need |S| <= N: samples {cfg.samples} > {n} nodes")

    if experiment == "step_size_sweep":
        steps = raw.get("step_sizes")
        if not isinstance(steps, list) or len(steps) < 1:
            problems.append("'step_sizes' must be a list of positive numbers")
            steps = []
        clean = []
        for s in steps:
            if not (_is_num(s) and s > 0):
                problems.append(f"step size {s!r} must be a positive number")
            elif s in clean:
                warnings.append(f"duplicate step size {s:g} dropped")
            else:
                clean.append(float(s))
        if len(clean) < 2 and not problems:
            problems.append("a step-size sweep needs at least 2 distinct step sizes")
        cfg.step_sizes = clean

    if _is_int(cfg.window) and _is_int(cfg.iterations) and cfg.window > cfg.iterations:
        problems.append(f"window {cfg.window} exceeds iterations {cfg.iterations}")
    if problems:
        raise ConfigError(problems, source)
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML experiment file; ``overrides`` replace top-level keys."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"], path) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([f"YAML parse error at {where}{problem}"], path) from None
    raw = raw or {}
    if overrides and isinstance(raw, dict):
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(raw, base_dir=path.parent, source=path)
