"""Domain types, the logistic link, and raster validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import expit


class SmurfError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(SmurfError, ValueError):
    """An input violates a documented precondition."""


class NumericalAbortError(SmurfError, RuntimeError):
    """A fit left its numerically safe operating range."""


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Raster:
    """K x R binary event raster with experiment landmarks.

    ``bins[k - 1, r - 1]`` holds the observation for bin ``k`` of trial ``r``.
    ``cue_bin`` and ``cond_start_trial`` are 1-based. Construction does not
    validate; use :func:`validate_raster` or :func:`check_raster`.
    """

    bins: np.ndarray
    delta_s: float
    cue_bin: int
    cond_start_trial: int
    u_x: np.ndarray
    u_z: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins)
        if bins.ndim != 2:
            raise InvalidArgumentError(f"bins must be 2-D (K, R), got shape {bins.shape}")
        if bins.dtype.kind not in "iub" and not np.all(np.isfinite(bins) & (bins == np.round(bins))):
            raise InvalidArgumentError("bins must be integer-valued")
        object.__setattr__(self, "bins", _frozen(bins, np.int64))
        object.__setattr__(self, "u_x", _frozen(self.u_x, np.int64))
        object.__setattr__(self, "u_z", _frozen(self.u_z, np.int64))
        object.__setattr__(self, "delta_s", float(self.delta_s))
        object.__setattr__(self, "cue_bin", int(self.cue_bin))
        object.__setattr__(self, "cond_start_trial", int(self.cond_start_trial))

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def n_trials(self) -> int:
        return self.bins.shape[1]

    def replace_bins(self, bins) -> "Raster":
        return Raster(bins, self.delta_s, self.cue_bin, self.cond_start_trial, self.u_x, self.u_z)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.delta_s == other.delta_s
            and self.cue_bin == other.cue_bin
            and self.cond_start_trial == other.cond_start_trial
            and np.array_equal(self.bins, other.bins)
            and np.array_equal(self.u_x, other.u_x)
            and np.array_equal(self.u_z, other.u_z)
        )

    __hash__ = None


def make_raster(bins, delta_s: float, cue_bin: int, cond_start_trial: int,
                u_x=None, u_z=None) -> Raster:
    """Build a raster, defaulting the input indicators to the landmarks.

    ``u_x[k] = 1`` for ``k >= cue_bin`` and ``u_z[r] = 1`` for
    ``r >= cond_start_trial`` unless given explicitly.
    """
    bins = np.asarray(bins)
    K, R = bins.shape
    if u_x is None:
        u_x = (np.arange(1, K + 1) >= cue_bin).astype(np.int64)
    if u_z is None:
        u_z = (np.arange(1, R + 1) >= cond_start_trial).astype(np.int64)
    return Raster(bins, delta_s, cue_bin, cond_start_trial, u_x, u_z)


class Violation(NamedTuple):
    message: str
    location: tuple[int, int] | None = None

    def __str__(self):
        if self.location is None:
            return self.message
        return f"{self.message} at (k={self.location[0]}, r={self.location[1]})"


def validate_raster(raster: Raster, max_reported: int = 100) -> list[Violation]:
    """Return every violated raster invariant; an empty list means valid.

    Bin violations carry 1-based ``(k, r)`` locations. At most
    ``max_reported`` bin violations are listed individually.
    """
    out: list[Violation] = []
    K, R = raster.bins.shape
    if K < 1 or R < 1:
        out.append(Violation("raster must have at least one bin and one trial"))
        return out
    bad = np.argwhere((raster.bins != 0) & (raster.bins != 1))
    for k, r in bad[:max_reported]:
        out.append(Violation(f"bins entry {raster.bins[k, r]} not in {{0,1}}", (int(k) + 1, int(r) + 1)))
    if len(bad) > max_reported:
        out.append(Violation(f"{len(bad) - max_reported} further non-binary entries"))
    if not (np.isfinite(raster.delta_s) and raster.delta_s > 0):
        out.append(Violation(f"delta_s must be > 0, got {raster.delta_s}"))
    if not 1 <= raster.cue_bin <= K:
        out.append(Violation(f"cue_bin out of range: {raster.cue_bin} not in [1, {K}]"))
    if not 1 <= raster.cond_start_trial <= R:
        out.append(Violation(f"cond_start_trial out of range: {raster.cond_start_trial} not in [1, {R}]"))
    for name, u, n in (("u_x", raster.u_x, K), ("u_z", raster.u_z, R)):
        if u.shape != (n,):
            out.append(Violation(f"{name} has shape {u.shape}, expected ({n},)"))
        elif np.any((u != 0) & (u != 1)):
            out.append(Violation(f"{name} entries must be 0 or 1"))
    return out


def check_raster(raster: Raster) -> Raster:
    """Raise :class:`InvalidArgumentError` listing violations, else return ``raster``."""
    problems = validate_raster(raster)
    if problems:
        raise InvalidArgumentError("invalid raster: " + "; ".join(map(str, problems)))
    return raster


@dataclass(frozen=True)
class ModelParams:
    """theta = (rho_x, alpha_x, sigma2_eps, rho_z, alpha_z, sigma2_del)."""

    sigma2_eps: float
    sigma2_del: float
    alpha_x: float = 0.0
    alpha_z: float = 0.0
    rho_x: float = 1.0
    rho_z: float = 1.0
    estimate_alpha: bool = False

    def __post_init__(self):
        for name in ("sigma2_eps", "sigma2_del"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{name} must be finite and > 0, got {v}")
        for name in ("alpha_x", "alpha_z", "rho_x", "rho_z"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return {
            "rho_x": self.rho_x, "alpha_x": self.alpha_x, "sigma2_eps": self.sigma2_eps,
            "rho_z": self.rho_z, "alpha_z": self.alpha_z, "sigma2_del": self.sigma2_del,
            "estimate_alpha": self.estimate_alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**{k: d[k] for k in (
            "sigma2_eps", "sigma2_del", "alpha_x", "alpha_z", "rho_x", "rho_z", "estimate_alpha"
        ) if k in d})


@dataclass(frozen=True, eq=False)
class LatentState:
    """One Gibbs configuration: within-trial path, cross-trial path, PG auxiliaries."""

    x: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, np.float64))
        object.__setattr__(self, "z", _frozen(self.z, np.float64))
        object.__setattr__(self, "w", _frozen(self.w, np.float64))
        if self.w.shape != (self.x.size, self.z.size):
            raise InvalidArgumentError(
                f"w shape {self.w.shape} inconsistent with |x|={self.x.size}, |z|={self.z.size}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.z))):
            raise InvalidArgumentError("latent paths must be finite")
        if not (np.all(np.isfinite(self.w)) and np.all(self.w > 0)):
            raise InvalidArgumentError("PG auxiliaries must be finite and > 0")


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """n retained (x, z) pairs drawn at a fixed parameter value.

    Stored as two arrays, ``x`` of shape (n, K) and ``z`` of shape (n, R).
    """

    x: np.ndarray
    z: np.ndarray
    theta_at: ModelParams
    burn_in_discarded: int = 0
    seed: int = 0
    n_clamped: int = field(default=0)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        z = np.atleast_2d(np.asarray(self.z, dtype=np.float64))
        if x.shape[0] != z.shape[0] or x.shape[0] < 1:
            raise InvalidArgumentError(
                f"need n >= 1 matching draws, got {x.shape[0]} x-paths and {z.shape[0]} z-paths")
        object.__setattr__(self, "x", _frozen(x, np.float64))
        object.__setattr__(self, "z", _frozen(z, np.float64))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_bins(self) -> int:
        return self.x.shape[1]

    @property
    def n_trials(self) -> int:
        return self.z.shape[1]

    def __len__(self):
        return self.n

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return zip(self.x, self.z)

    def check_against(self, raster: Raster) -> None:
        if (self.n_bins, self.n_trials) != raster.bins.shape:
            raise InvalidArgumentError(
                f"draws have (K, R) = ({self.n_bins}, {self.n_trials}), raster has {raster.bins.shape}")


def cif(x_k, z_r):
    """Per-bin event probability ``lambda * Delta = logistic(x_k + z_r)``.

    Broadcasts like numpy; returns a float for scalar inputs.
    """
    s = np.asarray(x_k, dtype=np.float64) + np.asarray(z_r, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise InvalidArgumentError("cif inputs must be finite")
    out = expit(s)
    return float(out) if out.ndim == 0 else out


def rate_hz(lambda_bin, delta_s: float):
    """Convert a per-bin probability to a rate in Hz."""
    if not delta_s > 0:
        raise InvalidArgumentError(f"delta_s must be > 0, got {delta_s}")
    lam = np.asarray(lambda_bin, dtype=np.float64)
    if np.any(lam < 0) or np.any(lam > 1):
        raise InvalidArgumentError("lambda_bin must lie in [0, 1]")
    out = lam / delta_s
    return float(out) if out.ndim == 0 else out
