"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, EstimatorSpec, load_config
from .data import DatasetError, synthetic_station_dataset, write_station_dataset
from .experiments import run_experiment
from .output import OutputError, emit_results

log = logging.getLogger("gsign")

_COMMAND_EXPERIMENT = {"theory": "theory", "noise-dump": "noise_dump"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsign", description="Adaptive graph signal estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("run", "run the experiment described by a config file"),
        ("theory", "step-size bound and theoretical steady-state MSD only"),
        ("noise-dump", "write noise samples to noise.csv"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="YAML experiment file")
        p.add_argument("--outdir", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--runs", type=int, help="override the number of Monte Carlo runs")
        p.add_argument("--threads", type=int, help="override the worker count")

    p = sub.add_parser("synth-data", help="write a synthetic station dataset")
    p.add_argument("--n", type=int, default=205, help="number of stations (default 205)")
    p.add_argument("--t", type=int, default=95, help="number of hourly steps (default 95)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for readings.csv and coords.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth-data":
            signal, coords = synthetic_station_dataset(args.n, args.t, args.seed)
            for path in write_station_dataset(signal, coords, args.out):
                print(path)
            return 0
        overrides = {"outdir": args.outdir, "seed": args.seed, "runs": args.runs, "threads": args.threads}
        cfg = load_config(args.config, overrides)
        wanted = _COMMAND_EXPERIMENT.get(args.command)
        if wanted is not None and cfg.experiment != wanted:
            # theory of a simulation config, or the noise model of any config
            if wanted == "theory" and cfg.experiment in ("steady_state", "step_size_sweep"):
                gs = [e for e in cfg.estimators if e.name == "gsign" and (e.mu or e.mu_bound_fraction)]
                gs += [EstimatorSpec("gsign", mu) for mu in cfg.step_sizes]
                if not gs:
                    raise ConfigError(["no gsign step size to evaluate"], args.config)
                cfg.estimators, cfg.experiment = gs, "theory"
            elif wanted == "noise_dump":
                cfg.experiment = "noise_dump"
            else:
                raise ConfigError([f"'{args.command}' cannot run a {cfg.experiment} config"], args.config)
        for w in cfg.warnings:
            log.warning(w)
        result = run_experiment(cfg)
        if cfg.experiment == "theory":
            print(f"step_size_bound {result.summary['step_size_bound']:.17g}")
            for entry in result.summary["theory"]:
                msd = entry["theory_msd"]
                shown = "unstable" if msd is None else f"{msd:.17g}"
                print(f"mu {entry['mu']:.17g} theory_msd {shown}")
        outdir = cfg.path(cfg.outdir) if args.outdir is None else args.outdir
        for path in emit_results(result, outdir):
            print(path)
    except (ConfigError, DatasetError, OutputError, ValueError) as exc:
        print(f"gsign: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
