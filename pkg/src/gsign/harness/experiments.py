"""Monte Carlo experiment drivers."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..analysis import (
    MetricsTrace,
    StepSizeError,
    detect_convergence,
    run_converged,
    spectral_radius,
    stability_context,
    step_size_bound,
    theoretical_msd,
)
from ..estimators import EstimatorConfig, StepOperator, run_estimation
from ..graph import build_laplacian, knn_geographic_graph, load_coords, load_edge_list, random_sensor_graph
from ..noise import flom_inverse_moment, make_rng, sample
from ..spectral import cached_eigendecompose, greedy_sampling, lowpass_bandlimit
from .config import ExperimentConfig
from .data import ingest_station_dataset, synthetic_station_dataset

__all__ = ["ExperimentResult", "Setup", "build_setup", "run_experiment", "run_steady_state",
           "run_step_size_sweep", "run_time_varying", "run_theory", "run_noise_dump"]

log = logging.getLogger(__name__)

# stream keys under the master seed
SIGNAL_STREAM = 1
RUN_STREAM = 2
NOISE_DUMP_STREAM = 3
# runs whose peak MSD reaches this multiple of the G-Sign steady MSD count as blown up
BLOWUP_FACTOR = 100.0
EXCURSION_FACTOR = 10.0


@dataclass
class Setup:
    graph: object
    basis: object
    band: object
    sampling: object


@dataclass
class ExperimentResult:
    """Everything :func:`~gsign.harness.output.emit_results` writes."""

    config: ExperimentConfig
    msd: dict = field(default_factory=dict)
    mad: dict = field(default_factory=dict)
    timing: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tracked: dict | None = None
    noise: np.ndarray | None = None
    traces: dict = field(default_factory=dict)


def _graph_from_config(cfg: ExperimentConfig, coords=None):
    g = cfg.graph
    kind = g["kind"]
    if kind == "sensor":
        return random_sensor_graph(g["n"], g["seed"])
    if kind == "knn":
        if "coords" in g:
            coords = load_coords(cfg.path(g["coords"]))
        return knn_geographic_graph(coords, min(g["k"], len(coords) - 1))
    gc = load_coords(cfg.path(g["coords"])) if "coords" in g else coords
    return load_edge_list(cfg.path(g["edges"]), coords=gc)


def build_setup(cfg: ExperimentConfig, coords=None) -> Setup:
    """Graph, spectral basis, low-pass band and greedy sampling set."""
    graph = _graph_from_config(cfg, coords)
    n = graph.n_nodes
    if cfg.samples > n:
        raise ValueError(f"need |S| <= N: samples {cfg.samples} > {n} nodes")
    cache = cfg.path(cfg.cache_dir) if cfg.cache_dir else None
    basis = cached_eigendecompose(build_laplacian(graph), cache)
    band = lowpass_bandlimit(basis, cfg.bandwidth)
    sampling = greedy_sampling(band.U_F, cfg.samples)
    return Setup(graph, basis, band, sampling)


def _map_runs(cfg: ExperimentConfig, fn):
    """Evaluate ``fn(run)`` for every run; results ordered by run index."""
    if cfg.threads == 1:
        return [fn(r) for r in range(cfg.runs)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, range(cfg.runs)))


def _timing_row(name: str, results, n_iters: int) -> dict:
    times = np.stack([r.step_times for r in results])
    return {
        "estimator": name,
        "total_s": float(np.median(times.sum(axis=1))),
        "per_iter_us": float(np.median(times) * 1e6),
        "n_iters": n_iters,
    }


def _stability(cfg: ExperimentConfig, setup: Setup) -> tuple[object, float, float]:
    r = flom_inverse_moment(cfg.noise, cfg.p_s, cfg.flom_draws, seed=cfg.seed)
    ctx = stability_context(setup.band, setup.sampling, r)
    return ctx, r, step_size_bound(ctx)


def _theory_or_none(ctx, mu, warnings):
    try:
        return theoretical_msd(ctx, mu)
    except StepSizeError as exc:
        warnings.append(f"no theoretical MSD at mu={mu:g}: {exc}")
        return None


def _convergence_summary(trace: MetricsTrace, window: int) -> dict:
    rep = detect_convergence(trace, window)
    per_run = [
        run_converged(trace.run_msd[i], window, rep.steady_value, diverged=bool(trace.diverged[i]))
        for i in range(len(trace.run_msd))
    ]
    return {
        "converged": rep.converged,
        "steady_msd": rep.steady_value,
        "steady_mad": float(np.mean(trace.mad[-window:])),
        "iterations_to_converge": rep.iterations_to_converge,
        "runs_diverged": int(trace.diverged.sum()),
        "runs_converged": int(sum(per_run)),
        "max_msd": float(np.max(trace.run_msd)) if np.all(np.isfinite(trace.run_msd)) else None,
    }


def _estimator_configs(cfg: ExperimentConfig, bound: float | None) -> list[EstimatorConfig]:
    out = []
    for spec in cfg.estimators:
        mu = spec.mu
        if spec.mu_bound_fraction is not None:
            if bound is None:
                raise StepSizeError("mu_bound_fraction needs the stability bound")
            mu = spec.mu_bound_fraction * bound
        out.append(EstimatorConfig(spec.name, mu, spec.p))
    return out


def _steady_signal(cfg: ExperimentConfig, setup: Setup) -> np.ndarray:
    coef = make_rng(cfg.seed, SIGNAL_STREAM).standard_normal(setup.band.size)
    return cfg.signal_scale * (setup.band.U_F @ coef)


def _simulate(cfg, ecfgs, signal, setup, n_iters, *, track_node=None):
    """Monte Carlo runs of several estimators.

    Within a run every estimator sees the same noise realization, and the
    estimators execute back to back, so slow drifts of the machine's speed
    affect their timings alike. Returns per-estimator lists of run results
    and the step operators.
    """
    ops = [StepOperator(e, setup.sampling, setup.band) for e in ecfgs]

    def one(run):
        return [
            run_estimation(
                e, signal, cfg.noise, setup.sampling, setup.band, n_iters,
                make_rng(cfg.seed, RUN_STREAM, run), record_estimates=False,
                track_node=track_node, time_steps=True, operator=op,
            )
            for e, op in zip(ecfgs, ops)
        ]

    per_run = _map_runs(cfg, one)
    return [[r[i] for r in per_run] for i in range(len(ecfgs))], ops


def _base_summary(cfg: ExperimentConfig, setup: Setup | None) -> dict:
    s = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seeds": {"master": cfg.seed, "runs": [[cfg.seed, RUN_STREAM, r] for r in range(cfg.runs)]
                  if cfg.experiment != "noise_dump" else []},
    }
    if setup is not None:
        s["graph"] = {"n_nodes": setup.graph.n_nodes, "n_edges": len(setup.graph.edges())}
        s["sampling_set"] = setup.sampling.nodes.tolist()
    return s


def run_steady_state(cfg: ExperimentConfig) -> ExperimentResult:
    setup = build_setup(cfg)
    warnings = cfg.warnings
    ctx, r, bound = _stability(cfg, setup)
    signal = _steady_signal(cfg, setup)
    res = ExperimentResult(cfg)
    summary = _base_summary(cfg, setup)
    summary.update({"flom_inverse_moment": r, "step_size_bound": bound, "estimators": {}})

    ecfgs = _estimator_configs(cfg, bound)
    for ecfg in ecfgs:
        if ecfg.kind == "gsign" and ecfg.mu >= bound:
            warnings.append(f"gsign step size {ecfg.mu:g} is not below the bound {bound:g}")
    all_results, _ = _simulate(cfg, ecfgs, signal, setup, cfg.iterations)
    for ecfg, results in zip(ecfgs, all_results):
        trace = MetricsTrace.from_runs(results)
        res.traces[ecfg.kind] = trace
        res.msd[ecfg.kind] = trace.msd
        res.mad[ecfg.kind] = trace.mad
        res.timing.append(_timing_row(ecfg.kind, results, cfg.iterations))
        entry = {"mu": ecfg.mu, "p": ecfg.p, **_convergence_summary(trace, cfg.window)}
        if ecfg.kind == "gsign":
            entry["theory_msd"] = _theory_or_none(ctx, ecfg.mu, warnings)
            if entry["theory_msd"] is not None:
                res.msd["theory"] = np.full(cfg.iterations, entry["theory_msd"])
        summary["estimators"][ecfg.kind] = entry

    gs = summary["estimators"].get("gsign")
    if gs is not None and gs["steady_msd"] > 0:
        # peaks are taken once G-Sign has settled, so the shared start-up
        # transient from the zero initial estimate does not count
        ref = gs["steady_msd"]
        start = gs["iterations_to_converge"]
        start = cfg.iterations - cfg.window if start is None else start
        for name, trace in res.traces.items():
            tail = trace.run_msd[:, start:]
            peak = np.max(np.where(np.isfinite(tail), tail, np.inf), axis=1)
            blown = trace.diverged | (peak >= BLOWUP_FACTOR * ref)
            summary["estimators"][name]["runs_blown_up"] = int(blown.sum())
        summary["blowup_reference"] = {"gsign_steady_msd": ref, "from_iteration": start,
                                       "factor": BLOWUP_FACTOR}
    summary["warnings"] = list(warnings)
    res.summary = summary
    return res


def run_step_size_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    setup = build_setup(cfg)
    warnings = cfg.warnings
    ctx, r, bound = _stability(cfg, setup)
    signal = _steady_signal(cfg, setup)
    res = ExperimentResult(cfg)
    summary = _base_summary(cfg, setup)
    summary.update({"flom_inverse_moment": r, "step_size_bound": bound, "sweep": []})
    for mu in cfg.step_sizes:
        if mu >= bound:
            warnings.append(f"step size {mu:g} is not below the bound {bound:g}; running anyway")
    ecfgs = [EstimatorConfig("gsign", mu) for mu in cfg.step_sizes]
    all_results, _ = _simulate(cfg, ecfgs, signal, setup, cfg.iterations)
    for mu, results in zip(cfg.step_sizes, all_results):
        trace = MetricsTrace.from_runs(results)
        col = f"mu={mu:.17g}"
        res.traces[col] = trace
        res.msd[col] = trace.msd
        res.mad[col] = trace.mad
        res.timing.append(_timing_row(col, results, cfg.iterations))
        entry = {"mu": mu, **_convergence_summary(trace, cfg.window)}
        entry["theory_msd"] = _theory_or_none(ctx, mu, warnings) if mu < bound else None
        summary["sweep"].append(entry)
    summary["warnings"] = list(warnings)
    res.summary = summary
    return res


def load_time_varying_signal(cfg: ExperimentConfig):
    """``(signal, coords)`` from the dataset block of a time-varying config."""
    ds = cfg.dataset
    if "synthetic" in ds:
        syn = ds["synthetic"]
        return synthetic_station_dataset(syn["n"], syn["t"], syn["seed"])
    signal, coords, _ = ingest_station_dataset(cfg.path(ds["readings"]), cfg.path(ds["coords"]))
    return signal, coords


def run_time_varying(cfg: ExperimentConfig) -> ExperimentResult:
    signal, coords = load_time_varying_signal(cfg)
    T, n = signal.shape
    if T < 2:
        raise ValueError("time-varying signal needs at least 2 time steps")
    n_iters = T if cfg.iterations is None else cfg.iterations
    if n_iters > T:
        raise ValueError(f"iterations {n_iters} exceed the {T} available time steps")
    setup = build_setup(cfg, coords)
    if setup.graph.n_nodes != n:
        raise ValueError(f"graph has {setup.graph.n_nodes} nodes but the signal has {n} stations")
    node = cfg.tracked_node
    if not 0 <= node < n:
        raise ValueError(f"tracked node {node} outside [0, {n})")
    if cfg.burn_in >= n_iters:
        raise ValueError(f"burn_in {cfg.burn_in} must be below the {n_iters} time steps")

    res = ExperimentResult(cfg)
    summary = _base_summary(cfg, setup)
    truth = signal[:n_iters]
    field_range = float(truth.max() - truth.min())
    node_range = float(truth[:, node].max() - truth[:, node].min())
    summary.update({
        "n_stations": n, "n_steps": n_iters, "tracked_node": node,
        "tracked_node_sampled": bool(setup.sampling.mask[node]),
        "signal_range": field_range, "tracked_signal_range": node_range, "estimators": {},
    })
    res.tracked = {"time": np.arange(n_iters), "truth": truth[:, node].copy()}

    ecfgs = _estimator_configs(cfg, None)
    all_results, ops = _simulate(cfg, ecfgs, truth, setup, n_iters, track_node=node)
    max_change = float(np.max(np.abs(np.diff(truth, axis=0))))
    summary["max_step_change"] = max_change
    for ecfg, results, op in zip(ecfgs, all_results, ops):
        # a sign tracker lags a moving target by at most one increment plus
        # the target's own per-step change
        tracking_bound = op.increment_bound + max_change
        trace = MetricsTrace.from_runs(results)
        res.traces[ecfg.kind] = trace
        res.msd[ecfg.kind] = trace.msd
        res.mad[ecfg.kind] = trace.mad
        res.timing.append(_timing_row(ecfg.kind, results, n_iters))
        tracks = np.stack([r.tracked for r in results])
        res.tracked[ecfg.kind] = tracks[0]
        res.tracked[f"{ecfg.kind}_mean"] = tracks.mean(axis=0)
        dev = np.abs(tracks - truth[:, node][None, :])
        after = dev[:, cfg.burn_in:]
        with np.errstate(invalid="ignore"):
            max_dev = float(np.max(after)) if np.all(np.isfinite(after)) else None
            excursions = int(np.sum(np.any(~(dev <= EXCURSION_FACTOR * field_range), axis=1)))
        summary["estimators"][ecfg.kind] = {
            "mu": ecfg.mu,
            "p": ecfg.p,
            "increment_bound": op.increment_bound,
            "tracking_bound": tracking_bound,
            "max_tracking_deviation_after_burn_in": max_dev,
            "runs_exceeding_increment_bound": int(np.sum(np.any(~(after <= op.increment_bound), axis=1))),
            "runs_exceeding_tracking_bound": int(np.sum(np.any(~(after <= tracking_bound), axis=1))),
            "runs_with_excursion": excursions,
            "max_excursion_over_range": (float(np.max(dev)) / field_range
                                          if np.all(np.isfinite(dev)) and field_range > 0 else None),
            "runs_diverged": int(trace.diverged.sum()),
            "final_msd": float(trace.msd[-1]),
        }
    summary["warnings"] = list(cfg.warnings)
    res.summary = summary
    return res


def run_theory(cfg: ExperimentConfig) -> ExperimentResult:
    setup = build_setup(cfg)
    warnings = cfg.warnings
    ctx, r, bound = _stability(cfg, setup)
    summary = _base_summary(cfg, setup)
    summary.update({"flom_inverse_moment": r, "step_size_bound": bound, "theory": []})
    for ecfg in _estimator_configs(cfg, bound):
        summary["theory"].append({
            "mu": ecfg.mu,
            "spectral_radius": spectral_radius(ctx, ecfg.mu),
            "theory_msd": _theory_or_none(ctx, ecfg.mu, warnings),
        })
    summary["warnings"] = list(warnings)
    return ExperimentResult(cfg, summary=summary)


def run_noise_dump(cfg: ExperimentConfig) -> ExperimentResult:
    draws = sample(cfg.noise, cfg.noise_samples, make_rng(cfg.seed, NOISE_DUMP_STREAM))
    summary = _base_summary(cfg, None)
    summary["noise"] = {"model": cfg.noise.to_dict(), "n_samples": cfg.noise_samples,
                        "stream": [cfg.seed, NOISE_DUMP_STREAM]}
    summary["warnings"] = list(cfg.warnings)
    return ExperimentResult(cfg, summary=summary, noise=draws)


_RUNNERS = {
    "steady_state": run_steady_state,
    "step_size_sweep": run_step_size_sweep,
    "time_varying": run_time_varying,
    "theory": run_theory,
    "noise_dump": run_noise_dump,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    log.info("running %s experiment (%d runs, seed %d)", cfg.experiment, cfg.runs, cfg.seed)
    return _RUNNERS[cfg.experiment](cfg)
