"""Command-line runner: ``ecnls <experiment> --config run.json --out dir``.

Exit status 0 on success, 2 for configuration errors, 3 for numerical
failures (partial outputs are still written) and 4 for I/O failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import schema
from .config import EXPERIMENTS, ConfigError, load_config, parse_config
from .diagnostics import CSV_COLUMNS
from .dynamics import IntegrationError
from .experiments import RunResult, run_experiment
from .operator import OperatorError
from .spectral import GridError, set_workers

log = logging.getLogger("ecnls")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def write_outputs(result: RunResult, out_dir: Path, plots: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(result.records, out_dir / "diagnostics.csv")
    for name, payload in result.reports.items():
        (out_dir / name).write_text(json.dumps(_jsonable(payload), indent=2))
    for label, state in result.snapshots:
        schema.dump(state, out_dir / f"snapshot_{label}.json")
    if plots:
        from .plotting import render

        try:
            result.summary["figures"] = [p.name for p in render(result, out_dir)]
        except (ValueError, RuntimeError) as exc:  # a figure is never worth failing the run
            log.warning("figure rendering failed: %s", exc)
    (out_dir / "summary.json").write_text(json.dumps(_jsonable(result.summary), indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecnls", description="Expectation-coupled NLS experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="FFT worker threads (overrides ECNLS_THREADS)")
    p.add_argument("--nmax", type=int, help="maximal degree for sphere-lemma")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _resolve_config(args):
    if args.config is not None:
        cfg = load_config(args.config)
        raw = dict(cfg.raw)
        base = cfg.base_dir
    else:
        raw, base = {"experiment": args.experiment}, Path(".")
    if raw.get("experiment", args.experiment) != args.experiment:
        raise ConfigError(f"config describes {raw['experiment']!r}, command line asks for {args.experiment!r}")
    raw["experiment"] = args.experiment
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.nmax is not None:
        raw["nmax"] = args.nmax
    if args.out is not None:
        raw["output_dir"] = str(args.out)
    return parse_config(raw, base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # ECNLS_THREADS is read when the FFT module loads; the flag wins over it
    if args.threads is not None:
        try:
            set_workers(args.threads)
        except ValueError as exc:
            print(f"error: bad thread count: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    result = RunResult()
    status = EXIT_OK
    try:
        run_experiment(cfg, result)
    except (ConfigError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OperatorError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        partial = getattr(exc, "trajectory", None)
        if not result.records and partial is not None:
            result.records = partial.records
        result.summary.update({"termination": "numerical_failure", "error": str(exc)})
        status = EXIT_NUMERICAL

    plots = not args.no_plots and cfg.get("plots", True)
    try:
        write_outputs(result, cfg.output_dir, plots)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    inv = result.summary.get("invariants", {})
    log.info("%s finished: %s", cfg.experiment, inv)
    return status


if __name__ == "__main__":
    sys.exit(main())
