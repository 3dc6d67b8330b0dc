"""On-disk formats: rasters, fit results, draw sidecars and summary tables.

All writers go through :func:`atomic_write_bytes` so a crash never leaves a
half-written file behind, and all serializations are deterministic so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import InvalidArgumentError, ModelParams, PosteriorDraws, Raster, check_raster, make_raster
from .gibbs import FitConfig, FitResult
from .summaries import QUANTILES, Detection, EffectSummary

SIDECAR_MAGIC = b"SMRFDRW1"
FIT_FORMAT = "smurf-fit/1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2) + "\n").encode())


# --------------------------------------------------------------------------
# rasters


def raster_to_dict(raster: Raster) -> dict:
    return {
        "delta_s": raster.delta_s,
        "cue_bin": raster.cue_bin,
        "cond_start_trial": raster.cond_start_trial,
        "u_x": raster.u_x.tolist(),
        "u_z": raster.u_z.tolist(),
        "bins": raster.bins.T.tolist(),
    }


def raster_from_dict(d: dict) -> Raster:
    try:
        bins = np.asarray(d["bins"])
        if bins.ndim != 2:
            raise InvalidArgumentError("'bins' must be an array of R equal-length arrays")
        raster = Raster(bins.T, d["delta_s"], d["cue_bin"], d["cond_start_trial"], d["u_x"], d["u_z"])
    except KeyError as e:
        raise InvalidArgumentError(f"raster JSON missing key {e}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"malformed raster JSON: {e}") from None
    return check_raster(raster)


def dumps_raster(raster: Raster) -> str:
    d = raster_to_dict(raster)
    bins = d.pop("bins")
    head = json.dumps(d)[:-1]
    rows = ",\n".join(json.dumps(row, separators=(",", ":")) for row in bins)
    return f'{head}, "bins": [\n{rows}\n]}}\n'


def save_raster(raster: Raster, path) -> None:
    atomic_write_bytes(path, dumps_raster(raster).encode())


def load_raster(path, *, delta_s: float | None = None, cue_bin: int | None = None,
                cond_start_trial: int | None = None) -> Raster:
    """Read a raster from canonical JSON, or from CSV (R rows x K columns) plus landmarks."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if None in (delta_s, cue_bin, cond_start_trial):
            raise InvalidArgumentError("CSV rasters need delta_s, cue_bin and cond_start_trial")
        try:
            rows = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as e:
            raise InvalidArgumentError(f"malformed raster CSV: {e}") from None
        return check_raster(make_raster(rows.T, delta_s, cue_bin, cond_start_trial))
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(d, dict):
        raise InvalidArgumentError(f"{path}: raster JSON must be an object")
    return raster_from_dict(d)


# --------------------------------------------------------------------------
# fits and draws


def write_draws_sidecar(path, draws: PosteriorDraws) -> None:
    """Magic header, then float64 little-endian rows ``[x_1..x_K, z_1..z_R]`` per draw."""
    rows = np.concatenate([draws.x, draws.z], axis=1).astype("<f8")
    atomic_write_bytes(path, SIDECAR_MAGIC + rows.tobytes(order="C"))


def read_draws_sidecar(path, n_bins: int, n_trials: int) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != SIDECAR_MAGIC:
        raise InvalidArgumentError(f"{path}: not a draws sidecar (bad magic)")
    flat = np.frombuffer(raw[8:], dtype="<f8")
    width = n_bins + n_trials
    if flat.size == 0 or flat.size % width:
        raise InvalidArgumentError(f"{path}: size inconsistent with K={n_bins}, R={n_trials}")
    rows = flat.reshape(-1, width)
    return rows[:, :n_bins].astype(np.float64), rows[:, n_bins:].astype(np.float64)


def fit_result_to_dict(result: FitResult, cfg: FitConfig, sidecar: str | None) -> dict:
    return {
        "format": FIT_FORMAT,
        "params": result.params_hat.to_dict(),
        "init_params": result.init_params.to_dict(),
        "theta_at_draws": result.draws.theta_at.to_dict(),
        "converged": result.converged,
        "iterations": result.iterations,
        "trace": result.trace,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "n_bins": result.draws.n_bins,
        "n_trials": result.draws.n_trials,
        "n_draws": result.draws.n,
        "burn_in_discarded": result.draws.burn_in_discarded,
        "n_clamped": result.n_clamped,
        "draws_sidecar": sidecar,
    }


def save_fit_result(result: FitResult, cfg: FitConfig, out_dir, with_draws: bool = False,
                    name: str = "fit_result.json") -> Path:
    out_dir = Path(out_dir)
    sidecar = None
    if with_draws:
        sidecar = "draws.bin"
        write_draws_sidecar(out_dir / sidecar, result.draws)
    path = out_dir / name
    atomic_write_json(path, fit_result_to_dict(result, cfg, sidecar))
    return path


def load_fit_result(path) -> tuple[dict, PosteriorDraws | None]:
    """Parse a fit-result JSON; also load its draws when a sidecar is recorded."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(d, dict) or d.get("format") != FIT_FORMAT:
        raise InvalidArgumentError(f"{path}: not a {FIT_FORMAT} document")
    if not d.get("draws_sidecar"):
        return d, None
    side = path.parent / d["draws_sidecar"]
    if not side.exists():
        raise InvalidArgumentError(f"draws sidecar {side} is missing")
    x, z = read_draws_sidecar(side, d["n_bins"], d["n_trials"])
    draws = PosteriorDraws(x, z, ModelParams.from_dict(d["theta_at_draws"]),
                           burn_in_discarded=d.get("burn_in_discarded", 0), seed=d.get("seed", 0))
    return d, draws


# --------------------------------------------------------------------------
# summary tables


def _csv_text(rows, header=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path, mat: np.ndarray) -> None:
    """K x R matrix written as R rows of K columns (one row per trial)."""
    atomic_write_bytes(path, _csv_text([[_fmt(v) for v in row] for row in np.asarray(mat).T]).encode())


def write_effect_csv(path, effect: EffectSummary) -> None:
    """One row per (1-based) index with the pointwise posterior quantiles."""
    header = ["index", "q025", "q25", "median", "q75", "q975"]
    assert len(QUANTILES) == 5
    rows = [[i + 1] + [_fmt(v) for v in effect.quantiles[:, i]] for i in range(effect.quantiles.shape[1])]
    atomic_write_bytes(path, _csv_text(rows, header).encode())


def write_detection_json(path, det: Detection) -> None:
    atomic_write_json(path, det.to_dict())


def write_sweep_csv(path, rows) -> None:
    header = ["conditioned_rate_hz", "ratio", "detections", "mean_learning_time_ms", "mean_learning_trial"]
    body = [[_fmt(r.conditioned_rate_hz), _fmt(r.ratio), r.detections,
             _fmt(r.mean_learning_time_ms), _fmt(r.mean_learning_trial)] for r in rows]
    atomic_write_bytes(path, _csv_text(body, header).encode())
