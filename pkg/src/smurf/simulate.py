"""Synthetic rasters for the two-region conditioning design, and the rate-ratio sweep."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import InvalidArgumentError, ModelParams, Raster, cif, make_raster

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Two-region raster: ``conditioned_rate_hz`` after the cue on conditioning
    trials, ``baseline_rate_hz`` everywhere else."""

    n_trials: int = 45
    trial_len_s: float = 2.0
    delta_s: float = 0.001
    cue_onset_s: float = 1.0
    cond_start_trial: int = 16
    baseline_rate_hz: float = 20.0
    conditioned_rate_hz: float = 60.0
    error_trials: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.error_trials is not None:
            object.__setattr__(self, "error_trials", tuple(int(v) for v in self.error_trials))
        if self.n_trials < 1:
            raise InvalidArgumentError("n_trials must be >= 1")
        if not (self.delta_s > 0 and self.trial_len_s > 0):
            raise InvalidArgumentError("delta_s and trial_len_s must be > 0")
        if not 0 <= self.cue_onset_s < self.trial_len_s:
            raise InvalidArgumentError("need 0 <= cue_onset_s < trial_len_s")
        if self.n_bins < 1 or not 1 <= self.cue_bin <= self.n_bins:
            raise InvalidArgumentError(
                f"cue onset maps to bin {self.cue_bin} of {self.n_bins}; need a post-cue bin")
        if not 1 <= self.cond_start_trial <= self.n_trials:
            raise InvalidArgumentError("cond_start_trial out of range")
        for name in ("baseline_rate_hz", "conditioned_rate_hz"):
            rate = getattr(self, name)
            if not rate >= 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
            if rate * self.delta_s > 1:
                raise InvalidArgumentError(f"{name} * delta_s = {rate * self.delta_s:g} > 1")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    @property
    def n_bins(self) -> int:
        return int(round(self.trial_len_s / self.delta_s))

    @property
    def cue_bin(self) -> int:
        """1-based index of the first bin at or after cue onset."""
        return int(round(self.cue_onset_s / self.delta_s)) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error_trials"] = list(self.error_trials) if self.error_trials else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown simulation config keys: {sorted(unknown)}")
        return cls(**d)


def simulate_raster(cfg: SimConfig, rng: np.random.Generator | None = None) -> Raster:
    """Independent Bernoulli bins at the region rates; ``rng`` defaults to ``cfg.seed``."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    K, R = cfg.n_bins, cfg.n_trials
    in_region = ((np.arange(1, K + 1) >= cfg.cue_bin)[:, None]
                 & (np.arange(1, R + 1) >= cfg.cond_start_trial)[None, :])
    p = np.where(in_region, cfg.conditioned_rate_hz * cfg.delta_s, cfg.baseline_rate_hz * cfg.delta_s)
    bins = (rng.random((K, R)) < p).astype(np.int64)
    raster = make_raster(bins, cfg.delta_s, cfg.cue_bin, cfg.cond_start_trial)
    if cfg.error_trials:
        raster = inject_error_trials(raster, *cfg.error_trials)
    return raster


def inject_error_trials(raster: Raster, start_trial: int, count: int) -> Raster:
    """Zero trials ``start_trial .. start_trial + count - 1`` (1-based)."""
    if count < 0:
        raise InvalidArgumentError("count must be >= 0")
    if count == 0:
        return raster
    if start_trial < 1 or start_trial + count - 1 > raster.n_trials:
        raise InvalidArgumentError(
            f"error trials {start_trial}..{start_trial + count - 1} outside 1..{raster.n_trials}")
    bins = raster.bins.copy()
    bins[:, start_trial - 1:start_trial - 1 + count] = 0
    return raster.replace_bins(bins)


def simulate_smurf(params: ModelParams, n_bins: int, n_trials: int, delta_s: float,
                   cue_bin: int, cond_start_trial: int, rng: np.random.Generator):
    """Draw (x, z) from the random-walk state equations, then Bernoulli bins.

    Test utility: returns ``(raster, x, z)``.
    """
    u_x = (np.arange(1, n_bins + 1) >= cue_bin).astype(float)
    u_z = (np.arange(1, n_trials + 1) >= cond_start_trial).astype(float)

    def path(n, rho, alpha, u, s2):
        out = np.empty(n)
        prev = 0.0
        for i in range(n):
            prev = rho * prev + alpha * u[i] + math.sqrt(s2) * rng.standard_normal()
            out[i] = prev
        return out

    x = path(n_bins, params.rho_x, params.alpha_x, u_x, params.sigma2_eps)
    z = path(n_trials, params.rho_z, params.alpha_z, u_z, params.sigma2_del)
    p = cif(x[:, None], z[None, :])
    bins = (rng.random((n_bins, n_trials)) < p).astype(np.int64)
    return make_raster(bins, delta_s, cue_bin, cond_start_trial, u_x, u_z), x, z


# --------------------------------------------------------------------------
# sensitivity sweep


@dataclass(frozen=True)
class SweepRow:
    conditioned_rate_hz: float
    ratio: float
    detections: int
    mean_learning_time_ms: float
    mean_learning_trial: float


def replicate_seed(seed: int, rate_index: int, replicate_index: int) -> int:
    """Deterministic 64-bit seed for one (rate, replicate) cell."""
    ss = np.random.SeedSequence(seed, spawn_key=(rate_index, replicate_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_replicate(base_cfg: SimConfig, fit_cfg, rate_hz: float, seed: int, threshold: float,
                  baseline=None):
    """Simulate, fit and detect for one sweep cell.

    Returns ``(learning_time_ms, learning_trial, detected)``; a missed
    detection reports the last bin and trial of the raster.
    """
    from .gibbs import fit_em
    from .summaries import BaselineSpec, detect_learning, learning_probability_map

    sim_cfg = replace(base_cfg, conditioned_rate_hz=rate_hz, seed=seed)
    raster = simulate_raster(sim_cfg)
    fit = fit_em(raster, replace(fit_cfg, seed=seed))
    spec = baseline or BaselineSpec.default_for(raster)
    pmap = learning_probability_map(fit.draws, spec)
    det = detect_learning(pmap, spec, threshold, raster=raster)
    if det.detected:
        return det.learning_time_ms, det.learning_trial, True
    last_time_ms = (raster.n_bins - raster.cue_bin) * raster.delta_s * 1000.0
    return last_time_ms, raster.n_trials, False


def _run_cell(args):
    return run_replicate(*args)


def sensitivity_sweep(base_cfg: SimConfig, conditioned_rates_hz, replicates: int, fit_cfg,
                      threshold: float = 0.95, jobs: int = 1) -> list[SweepRow]:
    """Average detected learning time and trial over replicate rasters per rate.

    Each (rate, replicate) cell is seeded from ``base_cfg.seed`` and its
    indices alone, so results do not depend on ``jobs`` or execution order.
    """
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    rates = [float(r) for r in conditioned_rates_hz]
    for r in rates:
        replace(base_cfg, conditioned_rate_hz=r)  # validates rate * delta_s <= 1
    cells = [(base_cfg, fit_cfg, rate, replicate_seed(base_cfg.seed, i, j), threshold)
             for i, rate in enumerate(rates) for j in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    rows = []
    for i, rate in enumerate(rates):
        cell = results[i * replicates:(i + 1) * replicates]
        times = [t for t, _, _ in cell]
        trials = [r for _, r, _ in cell]
        rows.append(SweepRow(
            conditioned_rate_hz=rate,
            ratio=rate / base_cfg.baseline_rate_hz if base_cfg.baseline_rate_hz > 0 else math.inf,
            detections=sum(d for _, _, d in cell),
            mean_learning_time_ms=float(np.mean(times)),
            mean_learning_trial=float(np.mean(trials)),
        ))
        log.info("rate %.1f Hz: %d/%d detections", rate, rows[-1].detections, replicates)
    return rows
