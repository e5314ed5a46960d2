"""Command line entry point: ``pevo <experiment> --config <path> [--jobs N] [--out DIR]``."""
from __future__ import annotations

import argparse
import os
import sys
import traceback

from .errors import ConfigError, ContractError, NumericalError, PevoError
from .harness import EXPERIMENTS, ExperimentConfig, emit_outputs, load_config, run, write_record_json

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_MODULE_NAMES = {
    "pevo.grid": "spectral-core",
    "pevo.gevrey": "gevrey-kit",
    "pevo.jets": "gevrey-kit",
    "pevo.symbols": "symbol-engine",
    "pevo.operator": "model-operator",
    "pevo.evolve": "evolver",
    "pevo.energy": "energy-lab",
    "pevo.harness": "cli-harness",
}


def _origin(exc: BaseException) -> str:
    name = "pevo"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod in _MODULE_NAMES:
            name = _MODULE_NAMES[mod]
    return name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pevo", description="Gevrey well-posedness experiments for p-evolution equations.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent per-nu jobs (default 1)")
    parser.add_argument("--out", default=None, help="output directory (PEVO_OUT overrides)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = args.config
    try:
        cfg = load_config(path)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"experiment: config says {cfg.experiment!r} but {args.experiment!r} was requested")
        if args.jobs < 1:
            raise ConfigError("--jobs: must be >= 1")
    except ConfigError as exc:
        print(f"pevo: config error: {exc} (config: {path})", file=sys.stderr)
        return EXIT_CONFIG
    out = os.environ.get("PEVO_OUT") or args.out or cfg.out_dir or "pevo-out"
    try:
        record = run(cfg, jobs=args.jobs, commit=lambda rec: write_record_json(rec, out))
        files = emit_outputs(record, out)
    except ConfigError as exc:
        print(f"pevo: config error: {exc} (config: {path})", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"pevo: numeric error in {_origin(exc)}: {exc} (config: {path})", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractError as exc:
        print(f"pevo: config error in {_origin(exc)}: {exc} (config: {path})", file=sys.stderr)
        return EXIT_CONFIG
    except PevoError as exc:
        print(f"pevo: error in {_origin(exc)}: {exc} (config: {path})", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{cfg.experiment}: {record.verdict}")
    for f in files:
        print(f"  wrote {f}")
    return EXIT_PASS if record.verdict == "PASS" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
