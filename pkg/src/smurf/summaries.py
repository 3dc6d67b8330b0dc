"""Posterior functionals of the fitted field.

Every quantity is computed draw by draw from ``lambda_i(k, r) =
logistic(x_ik + z_ir)`` and then reduced over draws, in fixed-size chunks
so memory does not grow with the number of draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
from scipy.special import expit

from .core import InvalidArgumentError, PosteriorDraws, Raster

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
_CHUNK = 32


@dataclass(frozen=True)
class BaselineSpec:
    """Trials ``1..baseline_trials`` and bins ``1..baseline_bins`` used as references."""

    baseline_trials: int
    baseline_bins: int

    @classmethod
    def default_for(cls, raster: Raster) -> "BaselineSpec":
        return cls(baseline_trials=raster.cond_start_trial - 1, baseline_bins=raster.cue_bin - 1)

    def check(self, n_bins: int, n_trials: int) -> None:
        if not 1 <= self.baseline_trials < n_trials:
            raise InvalidArgumentError(
                f"baseline_trials={self.baseline_trials} must lie in [1, {n_trials - 1}]")
        if not 1 <= self.baseline_bins < n_bins:
            raise InvalidArgumentError(
                f"baseline_bins={self.baseline_bins} must lie in [1, {n_bins - 1}]")


@dataclass(frozen=True)
class EffectSummary:
    """Per-draw samples (n, N) with their pointwise mean and quantiles (len(QUANTILES), N)."""

    samples: np.ndarray
    mean: np.ndarray
    quantiles: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EffectSummary":
        return cls(samples, samples.mean(axis=0), np.quantile(samples, QUANTILES, axis=0))


@dataclass(frozen=True)
class CifSummary:
    mean: np.ndarray
    quantiles: np.ndarray


@dataclass(frozen=True)
class Detection:
    detected: bool
    learning_trial: int | None
    learning_bin: int | None
    learning_time_ms: float | None
    threshold: float

    def to_dict(self) -> dict:
        return {
            "learning_trial": self.learning_trial,
            "learning_bin": self.learning_bin,
            "learning_time_ms": self.learning_time_ms,
            "threshold": self.threshold,
            "detected": self.detected,
        }


@dataclass(frozen=True)
class SummarySurface:
    prob_map: np.ndarray
    cif_mean: np.ndarray
    wt_effect: EffectSummary
    ct_effect: EffectSummary
    n_draws: int
    detection: Detection | None = None


def _chunks(draws: PosteriorDraws, size: int = _CHUNK) -> Iterator[np.ndarray]:
    for i in range(0, draws.n, size):
        yield expit(draws.x[i:i + size, :, None] + draws.z[i:i + size, None, :])


def iter_cif_surfaces(draws: PosteriorDraws) -> Iterator[np.ndarray]:
    """Yield the K x R surface ``lambda * Delta`` of each draw in turn."""
    for block in _chunks(draws):
        yield from block


def cif_surface(draws: PosteriorDraws, quantiles: Iterable[float] = QUANTILES,
                bin_block: int = 16) -> CifSummary:
    """Pointwise posterior mean and quantiles of ``lambda * Delta``."""
    q = tuple(quantiles)
    n, K = draws.x.shape
    R = draws.z.shape[1]
    mean = np.zeros((K, R))
    for block in _chunks(draws):
        mean += block.sum(axis=0)
    mean /= n
    qs = np.empty((len(q), K, R))
    for k0 in range(0, K if q else 0, bin_block):
        lam = expit(draws.x[:, k0:k0 + bin_block, None] + draws.z[:, None, :])
        qs[:, k0:k0 + bin_block, :] = np.quantile(lam, q, axis=0)
    return CifSummary(mean, qs)


def _wt_ct(block: np.ndarray, reference_trials: int | None):
    ref = block if reference_trials is None else block[:, :, :reference_trials]
    wt = ref.mean(axis=2)
    ct = (block / wt[:, :, None]).mean(axis=1)
    return block.mean(axis=2), ct


def within_trial_effect(draws: PosteriorDraws, delta_s: float | None = None) -> EffectSummary:
    """Trial-averaged CIF per bin and draw; in Hz when ``delta_s`` is given."""
    out = np.concatenate([b.mean(axis=2) for b in _chunks(draws)])
    if delta_s is not None:
        if not delta_s > 0:
            raise InvalidArgumentError("delta_s must be > 0")
        out = out / delta_s
    return EffectSummary.from_samples(out)


def cross_trial_effect(draws: PosteriorDraws, reference_trials: int | None = None) -> EffectSummary:
    """Per-trial bin-average of the CIF divided by the same draw's within-trial effect.

    By construction the trial-average of this quantity is exactly 1 for
    every draw. ``reference_trials=B`` instead normalizes by the
    within-trial effect of trials ``1..B`` only, which makes the first ``B``
    trials average to 1 and reads later trials as multiples of that block.
    """
    if reference_trials is not None and not 1 <= reference_trials <= draws.n_trials:
        raise InvalidArgumentError("reference_trials out of range")
    out = np.concatenate([_wt_ct(b, reference_trials)[1] for b in _chunks(draws)])
    return EffectSummary.from_samples(out)


def probability_map_from_surfaces(surfaces: Iterable[np.ndarray], baseline: BaselineSpec) -> np.ndarray:
    """Fraction of surfaces where a cell exceeds both its baseline-trial and baseline-bin averages.

    Ties count as non-exceedance.
    """
    count = None
    n = 0
    for lam in surfaces:
        if count is None:
            baseline.check(*lam.shape)
            count = np.zeros(lam.shape, dtype=np.int64)
        over_trials = lam > lam[:, :baseline.baseline_trials].mean(axis=1, keepdims=True)
        over_bins = lam > lam[:baseline.baseline_bins, :].mean(axis=0, keepdims=True)
        count += over_trials & over_bins
        n += 1
    if n == 0:
        raise InvalidArgumentError("need at least one surface")
    return count / n


def learning_probability_map(draws: PosteriorDraws, baseline: BaselineSpec) -> np.ndarray:
    """Posterior probability, per cell, that the rate exceeds both baselines.

    Defined on the whole K x R grid; only cells past both baselines are
    meaningful.
    """
    baseline.check(draws.n_bins, draws.n_trials)
    count = np.zeros((draws.n_bins, draws.n_trials), dtype=np.int64)
    for lam in _chunks(draws):
        over_trials = lam > lam[:, :, :baseline.baseline_trials].mean(axis=2, keepdims=True)
        over_bins = lam > lam[:, :baseline.baseline_bins, :].mean(axis=1, keepdims=True)
        count += (over_trials & over_bins).sum(axis=0)
    return count / draws.n


def detect_learning(prob_map: np.ndarray, baseline: BaselineSpec, threshold: float = 0.95, *,
                    raster: Raster | None = None, cue_bin: int | None = None,
                    delta_s: float | None = None) -> Detection:
    """First conditioning trial, then first post-baseline bin in it, with ``P >= threshold``.

    The learning time is measured from ``cue_bin`` (taken from ``raster``
    if given, else ``baseline_bins + 1``); it is reported in ms only when a
    bin width is known.
    """
    if not 0 < threshold <= 1:
        raise InvalidArgumentError(f"threshold must lie in (0, 1], got {threshold}")
    prob_map = np.asarray(prob_map)
    baseline.check(*prob_map.shape)
    if raster is not None:
        cue_bin = raster.cue_bin if cue_bin is None else cue_bin
        delta_s = raster.delta_s if delta_s is None else delta_s
    if cue_bin is None:
        cue_bin = baseline.baseline_bins + 1
    region = prob_map[baseline.baseline_bins:, baseline.baseline_trials:] >= threshold
    trials = np.flatnonzero(region.any(axis=0))
    if trials.size == 0:
        return Detection(False, None, None, None, float(threshold))
    col = trials[0]
    learning_trial = baseline.baseline_trials + int(col) + 1
    learning_bin = baseline.baseline_bins + int(np.flatnonzero(region[:, col])[0]) + 1
    time_ms = None if delta_s is None else (learning_bin - cue_bin) * delta_s * 1000.0
    return Detection(True, learning_trial, learning_bin, time_ms, float(threshold))


def summarize(draws: PosteriorDraws, raster: Raster, baseline: BaselineSpec | None = None,
              threshold: float = 0.95) -> SummarySurface:
    draws.check_against(raster)
    baseline = baseline or BaselineSpec.default_for(raster)
    pmap = learning_probability_map(draws, baseline)
    return SummarySurface(
        prob_map=pmap,
        cif_mean=cif_surface(draws, quantiles=()).mean,
        wt_effect=within_trial_effect(draws, raster.delta_s),
        ct_effect=cross_trial_effect(draws),
        n_draws=draws.n,
        detection=detect_learning(pmap, baseline, threshold, raster=raster),
    )
