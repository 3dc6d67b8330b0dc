"""Forward filtering, backward sampling for one latent axis given the other.

Conditioned on the PG auxiliaries and the other axis, each Bernoulli bin
acts as a Gaussian observation ``(dN - 1/2) / w - other ~ N(state, 1/w)``.
Collapsing these over the other axis gives one scalar observation per step
of a random-walk (AR(1)) state-space model, which a scalar Kalman filter
and a backward sampler solve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import InvalidArgumentError, ModelParams, Raster

AXES = ("within", "cross")


@dataclass(frozen=True)
class PseudoObs:
    """Per-step collapsed Gaussian observation; precision 0 means no data."""

    mean: np.ndarray
    precision: np.ndarray


@dataclass(frozen=True)
class FilterState:
    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray


@numba.njit(cache=True)
def _collapse(bins, other, w, axis, mean, prec):
    K, R = bins.shape
    if axis == 0:
        for k in range(K):
            p = 0.0
            s = 0.0
            for r in range(R):
                p += w[k, r]
                s += bins[k, r] - 0.5 - w[k, r] * other[r]
            prec[k] = p
            mean[k] = s / p if p > 0.0 else 0.0
    else:
        for r in range(R):
            p = 0.0
            s = 0.0
            for k in range(K):
                p += w[k, r]
                s += bins[k, r] - 0.5 - w[k, r] * other[k]
            prec[r] = p
            mean[r] = s / p if p > 0.0 else 0.0


@numba.njit(cache=True)
def _forward(mean, prec, rho, alpha, u, sigma2, pm, pv, fm, fv):
    m_prev = 0.0
    v_prev = 0.0
    for k in range(mean.size):
        m_pred = rho * m_prev + alpha * u[k]
        v_pred = rho * rho * v_prev + sigma2
        pm[k] = m_pred
        pv[k] = v_pred
        if prec[k] > 0.0:
            v_f = v_pred / (1.0 + prec[k] * v_pred)
            m_f = m_pred + v_f * prec[k] * (mean[k] - m_pred)
        else:
            v_f = v_pred
            m_f = m_pred
        fm[k] = m_f
        fv[k] = v_f
        m_prev = m_f
        v_prev = v_f


@numba.njit(cache=True)
def _backward(fm, fv, rho, alpha, u, sigma2, rng, out):
    n = fm.size
    out[n - 1] = fm[n - 1] + np.sqrt(fv[n - 1]) * rng.standard_normal()
    for k in range(n - 2, -1, -1):
        denom = rho * rho * fv[k] + sigma2
        gain = rho * fv[k] / denom
        m = fm[k] + gain * (out[k + 1] - rho * fm[k] - alpha * u[k + 1])
        v = fv[k] * sigma2 / denom
        out[k] = m + np.sqrt(v) * rng.standard_normal()


@numba.njit(cache=True)
def _backward_many(fm, fv, rho, alpha, u, sigma2, rng, out):
    for i in range(out.shape[0]):
        _backward(fm, fv, rho, alpha, u, sigma2, rng, out[i])


@numba.njit(cache=True)
def _sample_axis(bins, other, w, axis, rho, alpha, u, sigma2, rng, out,
                 mean, prec, pm, pv, fm, fv):
    _collapse(bins, other, w, axis, mean, prec)
    _forward(mean, prec, rho, alpha, u, sigma2, pm, pv, fm, fv)
    _backward(fm, fv, rho, alpha, u, sigma2, rng, out)


def _axis_index(axis: str) -> int:
    if axis not in AXES:
        raise InvalidArgumentError(f"axis must be one of {AXES}, got {axis!r}")
    return AXES.index(axis)


def collapse_pseudo_obs(raster: Raster, other, w, axis: str) -> PseudoObs:
    """Collapse PG-augmented bins into one Gaussian observation per step.

    For ``axis="within"`` the steps are bins k, ``other`` is z and the sum
    runs over trials; ``axis="cross"`` is the transpose.
    """
    ax = _axis_index(axis)
    bins = np.asarray(raster.bins, dtype=np.float64)
    other = np.ascontiguousarray(other, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    K, R = bins.shape
    if w.shape != (K, R):
        raise InvalidArgumentError(f"w has shape {w.shape}, raster is {(K, R)}")
    if other.shape != ((R,) if ax == 0 else (K,)):
        raise InvalidArgumentError(f"other path has length {other.size}, expected {R if ax == 0 else K}")
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise InvalidArgumentError("w entries must be finite and > 0")
    n = K if ax == 0 else R
    mean = np.empty(n)
    prec = np.empty(n)
    _collapse(bins, other, w, ax, mean, prec)
    return PseudoObs(mean, prec)


def _check_dyn(n: int, u, sigma2: float) -> np.ndarray:
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise InvalidArgumentError(f"sigma2 must be > 0, got {sigma2}")
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (n,):
        raise InvalidArgumentError(f"input sequence has length {u.size}, expected {n}")
    return u


def forward_filter(obs: PseudoObs, rho: float, alpha: float, u, sigma2: float) -> FilterState:
    """Kalman filter for ``s_k = rho s_{k-1} + alpha u_k + N(0, sigma2)`` from ``s_0 = 0``."""
    mean = np.ascontiguousarray(obs.mean, dtype=np.float64)
    prec = np.ascontiguousarray(obs.precision, dtype=np.float64)
    if mean.shape != prec.shape or mean.ndim != 1:
        raise InvalidArgumentError("pseudo-observation mean and precision must be equal-length 1-D")
    if np.any(prec < 0):
        raise InvalidArgumentError("pseudo-observation precision must be >= 0")
    u = _check_dyn(mean.size, u, sigma2)
    pm, pv, fm, fv = (np.empty(mean.size) for _ in range(4))
    _forward(mean, prec, float(rho), float(alpha), u, float(sigma2), pm, pv, fm, fv)
    return FilterState(pm, pv, fm, fv)


def backward_sample(filt: FilterState, rho: float, alpha: float, u, sigma2: float,
                    rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """One joint draw of the state path from the smoothing posterior.

    With ``size`` set, returns ``size`` independent paths as rows, using
    the generator exactly as ``size`` successive single calls would.
    """
    fm = np.ascontiguousarray(filt.filt_mean, dtype=np.float64)
    fv = np.ascontiguousarray(filt.filt_var, dtype=np.float64)
    if fm.shape != fv.shape or fm.ndim != 1 or fm.size < 1:
        raise InvalidArgumentError("filter mean and variance must be equal-length non-empty 1-D")
    u = _check_dyn(fm.size, u, sigma2)
    if size is None:
        out = np.empty(fm.size)
        _backward(fm, fv, float(rho), float(alpha), u, float(sigma2), rng, out)
        return out
    if size < 1:
        raise InvalidArgumentError("size must be >= 1")
    out = np.empty((int(size), fm.size))
    _backward_many(fm, fv, float(rho), float(alpha), u, float(sigma2), rng, out)
    return out


def axis_dynamics(params: ModelParams, raster: Raster, axis: str):
    """(rho, alpha, u, sigma2) governing the given axis."""
    if _axis_index(axis) == 0:
        return params.rho_x, params.alpha_x, raster.u_x, params.sigma2_eps
    return params.rho_z, params.alpha_z, raster.u_z, params.sigma2_del


def sample_path_given(raster: Raster, fixed_other, w, params: ModelParams, axis: str,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw x | (z, w) for ``axis="within"`` or z | (x, w) for ``axis="cross"``."""
    obs = collapse_pseudo_obs(raster, fixed_other, w, axis)
    rho, alpha, u, sigma2 = axis_dynamics(params, raster, axis)
    filt = forward_filter(obs, rho, alpha, u, sigma2)
    return backward_sample(filt, rho, alpha, u, sigma2, rng)
