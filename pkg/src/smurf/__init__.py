"""Separably-Markov random field (SMuRF) models for binary event rasters.

A K x R raster of events is modelled as Bernoulli bins with log-odds
``x_k + z_r``: a within-trial latent path ``x`` and a cross-trial latent
path ``z``, each a first-order autoregression. Parameters are fitted by
Monte-Carlo EM using a Polya-Gamma augmented block Gibbs sampler, and the
posterior draws feed summaries that locate when and on which trial a rate
change appears.
"""

from .core import (
    InvalidArgumentError, LatentState, ModelParams, NumericalAbortError, PosteriorDraws, Raster,
    SmurfError, Violation, check_raster, cif, make_raster, rate_hz, validate_raster,
)
from .ffbs import backward_sample, collapse_pseudo_obs, forward_filter, sample_path_given
from .gibbs import FitConfig, FitResult, e_step, fit_em, gibbs_sweep, initialize, m_step
from .pg import pg1_mean, pg1_var, sample_pg1, sample_pg1_array, sample_pg1_truncated
from .simulate import SimConfig, SweepRow, inject_error_trials, sensitivity_sweep, simulate_raster
from .summaries import (
    BaselineSpec, Detection, EffectSummary, SummarySurface, cif_surface, cross_trial_effect,
    detect_learning, learning_probability_map, summarize, within_trial_effect,
)

__all__ = [
    "BaselineSpec", "Detection", "EffectSummary", "FitConfig", "FitResult", "InvalidArgumentError",
    "LatentState", "ModelParams", "NumericalAbortError", "PosteriorDraws", "Raster", "SimConfig",
    "SmurfError", "SummarySurface", "SweepRow", "Violation", "backward_sample", "check_raster", "cif",
    "cif_surface", "collapse_pseudo_obs", "cross_trial_effect", "detect_learning", "e_step", "fit_em",
    "forward_filter", "gibbs_sweep", "initialize", "inject_error_trials", "learning_probability_map",
    "m_step", "make_raster", "pg1_mean", "pg1_var", "rate_hz", "sample_path_given", "sample_pg1",
    "sample_pg1_array", "sample_pg1_truncated", "sensitivity_sweep", "simulate_raster", "summarize",
    "validate_raster", "within_trial_effect",
]
