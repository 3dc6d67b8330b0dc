"""Command-line front end: ``smurf {simulate,fit,summarize,sweep}``.

Exit codes: 0 success, 2 input or config error, 3 IO error, 4 numerical
abort. Logs go to stderr; ``--json`` prints a machine-readable summary to
stdout. Every run writes a manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from .core import InvalidArgumentError, NumericalAbortError
from .gibbs import FitConfig, fit_em
from .io import (
    atomic_write_json, load_fit_result, load_raster, save_fit_result, save_raster, write_detection_json,
    write_effect_csv, write_matrix_csv, write_sweep_csv,
)
from .simulate import SimConfig, sensitivity_sweep, simulate_raster
from .summaries import BaselineSpec, summarize

log = logging.getLogger("smurf")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class InputError(Exception):
    """Raised for anything the user must fix in their inputs (exit 2)."""


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected a JSON object")
    return d


def _from_dict(cls, d: dict, what: str):
    try:
        return cls.from_dict(d)
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid {what} config: {e}") from None


def _resolve_seed(flag: int | None, config_seed: int) -> int:
    """``--seed`` wins, then ``SMURF_SEED``, then the config file."""
    if flag is not None:
        return flag
    env = os.environ.get("SMURF_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"SMURF_SEED={env!r} is not an integer") from None
    return config_seed


def _with_seed(cfg, seed: int, what: str):
    try:
        return replace(cfg, seed=seed)
    except ValueError as e:
        raise InputError(f"invalid {what} seed: {e}") from None


class Manifest:
    """Run record written atomically once the command finishes."""

    def __init__(self, command: str, path: Path, config_path):
        self.path = path
        self.data = {
            "command": command,
            "config_path": str(config_path) if config_path else None,
            "seed": None,
            "inputs": [],
            "outputs": [],
            "tool_version": tool_version(),
            "started": _now(),
            "finished": None,
        }

    def write(self):
        self.data["finished"] = _now()
        atomic_write_json(self.path, self.data)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> dict:
    cfg = SimConfig()
    if args.config:
        cfg = _from_dict(SimConfig, _read_json(args.config), "simulation")
    cfg = _with_seed(cfg, _resolve_seed(args.seed, cfg.seed), "simulation")
    out = Path(args.out)
    man = Manifest("simulate", out.with_name(out.name + ".manifest.json"), args.config)
    raster = simulate_raster(cfg)
    save_raster(raster, out)
    log.info("wrote %d x %d raster to %s", raster.n_trials, raster.n_bins, out)
    man.data.update(seed=cfg.seed, outputs=[str(out)])
    man.write()
    return {"raster": str(out), "n_bins": raster.n_bins, "n_trials": raster.n_trials,
            "events": int(raster.bins.sum()), "seed": cfg.seed}


def _load_raster_arg(args):
    try:
        return load_raster(args.raster, delta_s=args.delta_s, cue_bin=args.cue_bin,
                           cond_start_trial=args.cond_start_trial)
    except OSError as e:
        raise InputError(f"cannot read raster {args.raster}: {e.strerror or e}") from None


def cmd_fit(args) -> dict:
    cfg = FitConfig()
    if args.config:
        cfg = _from_dict(FitConfig, _read_json(args.config), "fit")
    cfg = _with_seed(cfg, _resolve_seed(args.seed, cfg.seed), "fit")
    raster = _load_raster_arg(args)
    if args.jobs > 1:
        log.warning("--jobs %d ignored for fit: the sampler runs on one worker", args.jobs)
    out_dir = Path(args.out_dir)
    man = Manifest("fit", out_dir / "manifest.json", args.config)
    man.data.update(seed=cfg.seed, inputs=[str(args.raster)])
    result = fit_em(raster, cfg)
    path = save_fit_result(result, cfg, out_dir, with_draws=args.draws_sidecar)
    outputs = [str(path)] + ([str(out_dir / "draws.bin")] if args.draws_sidecar else [])
    if not result.converged:
        log.warning("EM stopped after %d iterations without meeting conv_tol=%g",
                    result.iterations, cfg.conv_tol)
    man.data["outputs"] = outputs
    man.write()
    return {"fit_result": str(path), "converged": result.converged, "iterations": result.iterations,
            "params": result.params_hat.to_dict()}


def cmd_summarize(args) -> dict:
    try:
        meta, draws = load_fit_result(args.fit)
    except OSError as e:
        raise InputError(f"cannot read fit result {args.fit}: {e.strerror or e}") from None
    if draws is None:
        raise InputError(f"{args.fit} has no draws sidecar; rerun fit with --draws-sidecar")
    raster = _load_raster_arg(args)
    default = BaselineSpec.default_for(raster)
    baseline = BaselineSpec(
        args.baseline_trials if args.baseline_trials is not None else default.baseline_trials,
        args.baseline_bins if args.baseline_bins is not None else default.baseline_bins,
    )
    surf = summarize(draws, raster, baseline, args.threshold)
    out_dir = Path(args.out_dir)
    man = Manifest("summarize", out_dir / "manifest.json", None)
    man.data.update(seed=meta.get("seed"), inputs=[str(args.fit), str(args.raster)])
    files = {
        "prob_map.csv": lambda p: write_matrix_csv(p, surf.prob_map),
        "cif_mean.csv": lambda p: write_matrix_csv(p, surf.cif_mean),
        "wt_effect.csv": lambda p: write_effect_csv(p, surf.wt_effect),
        "ct_effect.csv": lambda p: write_effect_csv(p, surf.ct_effect),
        "detection.json": lambda p: write_detection_json(p, surf.detection),
    }
    for name, writer in files.items():
        writer(out_dir / name)
    man.data["outputs"] = [str(out_dir / n) for n in files]
    man.write()
    det = surf.detection.to_dict()
    log.info("detection: %s", det)
    return det


def _sweep_config(d: dict):
    known = {"base", "conditioned_rates_hz", "replicates", "fit", "threshold"}
    unknown = set(d) - known
    if unknown:
        raise InputError(f"unknown sweep config keys: {sorted(unknown)}")
    if "conditioned_rates_hz" not in d:
        raise InputError("sweep config needs 'conditioned_rates_hz'")
    base = _from_dict(SimConfig, d.get("base", {}), "sweep base")
    fit = _from_dict(FitConfig, d.get("fit", {}), "sweep fit")
    rates = d["conditioned_rates_hz"]
    if not isinstance(rates, list) or not rates or not all(isinstance(r, (int, float)) for r in rates):
        raise InputError("'conditioned_rates_hz' must be a non-empty list of numbers")
    replicates = d.get("replicates", 1)
    threshold = d.get("threshold", 0.95)
    if not isinstance(replicates, int) or replicates < 1:
        raise InputError("'replicates' must be a positive integer")
    if not isinstance(threshold, (int, float)) or not 0 < threshold <= 1:
        raise InputError("'threshold' must lie in (0, 1]")
    return base, fit, rates, replicates, float(threshold)


def cmd_sweep(args) -> dict:
    base, fit, rates, replicates, threshold = _sweep_config(_read_json(args.config))
    base = _with_seed(base, _resolve_seed(args.seed, base.seed), "sweep")
    if args.jobs < 1:
        raise InputError("--jobs must be >= 1")
    out_dir = Path(args.out_dir)
    man = Manifest("sweep", out_dir / "manifest.json", args.config)
    man.data["seed"] = base.seed
    rows = sensitivity_sweep(base, rates, replicates, fit, threshold, jobs=args.jobs)
    path = out_dir / "sweep.csv"
    write_sweep_csv(path, rows)
    man.data["outputs"] = [str(path)]
    man.write()
    return {"sweep": str(path), "rows": [vars(r) for r in rows]}


# --------------------------------------------------------------------------
# argument parsing


def _landmark_flags(p):
    g = p.add_argument_group("CSV raster landmarks (ignored for JSON rasters)")
    g.add_argument("--delta-s", type=float, help="bin width in seconds")
    g.add_argument("--cue-bin", type=int, help="1-based first post-cue bin")
    g.add_argument("--cond-start-trial", type=int, help="1-based first conditioning trial")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smurf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a two-region raster")
    p.add_argument("--config", help="SimConfig JSON (defaults used when omitted)")
    p.add_argument("--out", required=True, help="raster JSON to write")
    p.add_argument("--seed", type=int, help="overrides the config and SMURF_SEED")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="Monte-Carlo EM fit of a raster")
    p.add_argument("--raster", required=True, help="raster JSON or CSV")
    p.add_argument("--config", help="FitConfig JSON (defaults used when omitted)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--draws-sidecar", action="store_true",
                   help="also store the final posterior draws (needed by summarize)")
    p.add_argument("--seed", type=int, help="overrides the config and SMURF_SEED")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; fits run on one worker")
    _landmark_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", parents=[common], help="posterior summaries and learning detection")
    p.add_argument("--fit", required=True, help="fit_result.json written with --draws-sidecar")
    p.add_argument("--raster", required=True, help="the raster that was fitted")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--baseline-trials", type=int, help="default: cond_start_trial - 1")
    p.add_argument("--baseline-bins", type=int, help="default: cue_bin - 1")
    p.add_argument("--threshold", type=float, default=0.95)
    _landmark_flags(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("sweep", parents=[common], help="learning-detection sensitivity sweep")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="overrides the base seed and SMURF_SEED")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    try:
        summary = args.func(args)
    except (InputError, InvalidArgumentError) as e:
        log.error("%s", e)
        return EXIT_INPUT
    except NumericalAbortError as e:
        log.error("numerical abort: %s", e)
        return EXIT_NUMERIC
    except OSError as e:
        log.error("IO error: %s", e)
        return EXIT_IO
    if args.json:
        json.dump(summary, sys.stdout, indent=2, default=str)
        sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
