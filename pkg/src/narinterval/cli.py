"""Command-line entry point: ``narinterval run`` and ``narinterval synth``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings

from .pipeline import (
    DEFAULT_SYSTEM,
    PipelineConfig,
    PipelineError,
    SimulationDivergedError,
    generate_synthetic,
    run_pipeline,
)

__all__ = ["build_parser", "main"]

_HELP = {
    "input": "signal CSV (one numeric column, optional header)",
    "decimal": "decimal separator of the input, '.' or ','",
    "split": "fraction of samples used for identification",
    "degree": "maximum polynomial degree of candidate terms",
    "ny": "maximum output lag of candidate terms",
    "tau_max": "largest lag of the autocovariance used for decimation",
    "horizon": "prediction horizon k for validation",
    "radius": "interval radius around every sample, in signal units",
    "residual_lags": "lags of the residual correlation curves",
    "max_aic_terms": "largest model size scored by AIC",
    "delays": "output delays fed to the neural model",
    "hidden_min": "smallest hidden layer size in the sweep",
    "hidden_max": "largest hidden layer size in the sweep",
    "max_epochs": "training epochs per network",
    "seed": "seed for every random choice",
    "out_dir": "directory receiving the artifacts",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narinterval",
        description="Polynomial NAR identification with interval uncertainty propagation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the identification pipeline on a signal")
    run.add_argument("--config", help="key=value file; command-line flags take precedence")
    for f in dataclasses.fields(PipelineConfig):
        if f.name == "neural":
            continue
        flag = "--" + f.name.replace("_", "-")
        typ = {"int": int, "float": float}.get(f.type, str)
        run.add_argument(flag, dest=f.name, type=typ, default=None,
                         help=f"{_HELP[f.name]} (default: {f.default})")
    run.add_argument("--neural", dest="neural", action="store_true", default=None,
                     help="train the neural comparison model (default)")
    run.add_argument("--no-neural", dest="neural", action="store_false",
                     help="skip the neural comparison model")

    syn = sub.add_parser("synth", help="simulate a polynomial NAR series")
    syn.add_argument("--out", required=True, help="signal CSV to write")
    syn.add_argument("--truth", help="JSON file receiving the generating system")
    syn.add_argument("--terms", nargs="+", default=[str(t) for t in DEFAULT_SYSTEM[0]],
                     help="model terms, e.g. 1 'y(k-1)' 'y(k-1)^3'")
    syn.add_argument("--theta", nargs="+", type=float, default=list(DEFAULT_SYSTEM[1]),
                     help="one coefficient per term")
    syn.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    syn.add_argument("-n", "--samples", type=int, default=2000, help="samples after burn-in")
    syn.add_argument("--burn-in", type=int, default=500)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def _run(args) -> int:
    values = PipelineConfig.read_file(args.config) if args.config else {}
    flags = {f.name: getattr(args, f.name) for f in dataclasses.fields(PipelineConfig)}
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        cfg = PipelineConfig.from_mapping(values)
    except ValueError as exc:
        print(f"narinterval: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if not cfg.input:
        print("narinterval: an input file is required (--input or config)", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            report = run_pipeline(cfg)
        except PipelineError as exc:
            print(f"narinterval: {exc}", file=sys.stderr)
            return 1
    m = report.model
    print(f"decimation factor {report.decimation['delta']} (tau_m = {report.decimation['tau_m']})")
    print(f"selected {len(m['terms'])} terms:")
    for term, v, (lo, hi) in zip(m["terms"], m["theta"], m["theta_interval"]):
        print(f"  {term:>28s}  {v: .6e}  [{lo: .6e}, {hi: .6e}]")
    for k in sorted(key for key in report.rmse if key.startswith("point_k")):
        band = report.rmse["interval" + k[len("point"):]]
        print(f"RMSE {k[len('point_'):]}: {report.rmse[k]:.4f}  interval [{band[0]:.4f}, {band[1]:.4f}]")
    if report.neural:
        print(f"neural: {report.neural['hidden']} hidden units, RMSE k1 {report.neural['rmse_k1']:.4f}")
    print(f"artifacts written to {cfg.out_dir}")
    return 0


def _synth(args) -> int:
    if len(args.terms) != len(args.theta):
        print("narinterval: --terms and --theta need the same length", file=sys.stderr)
        return 2
    try:
        generate_synthetic(args.terms, args.theta, args.sigma, args.samples, args.seed,
                           args.burn_in, path=args.out, truth_path=args.truth)
    except (SimulationDivergedError, ValueError) as exc:
        print(f"narinterval: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return _synth(args)


if __name__ == "__main__":
    sys.exit(main())
