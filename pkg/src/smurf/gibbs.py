"""Block Gibbs sampler over (x, z, w) and the Monte-Carlo EM driver."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .core import (
    InvalidArgumentError,
    LatentState,
    ModelParams,
    NumericalAbortError,
    PosteriorDraws,
    Raster,
    check_raster,
)
from .ffbs import _backward, _collapse, _forward
from .pg import C_MAX, PG_FLOOR, _pg1_devroye, pg1_mean

log = logging.getLogger(__name__)

_DIVERGED = -1


@dataclass(frozen=True)
class FitConfig:
    """Monte-Carlo EM settings.

    ``conv_tol`` is the absolute change in both variances that stops EM.
    The ``init_*`` fields size the two one-axis fits used to initialize.
    """

    n_gibbs_per_iter: int = 5000
    burn_in: int = 500
    max_em_iters: int = 100
    conv_tol: float = 1e-5
    seed: int = 0
    estimate_alpha: bool = False
    rho_x: float = 1.0
    rho_z: float = 1.0
    variance_floor: float = 1e-8
    variance_ceiling: float = 1e3
    init_em_iters: int = 20
    init_gibbs_per_iter: int = 300
    init_burn_in: int = 100
    init_sigma2: float = 0.01

    def __post_init__(self):
        if self.n_gibbs_per_iter < 1 or self.burn_in < 0:
            raise InvalidArgumentError("n_gibbs_per_iter must be >= 1 and burn_in >= 0")
        if self.burn_in >= self.n_gibbs_per_iter:
            raise InvalidArgumentError(
                f"burn_in ({self.burn_in}) must be < n_gibbs_per_iter ({self.n_gibbs_per_iter})")
        if not self.conv_tol > 0:
            raise InvalidArgumentError("conv_tol must be > 0")
        if self.max_em_iters < 1:
            raise InvalidArgumentError("max_em_iters must be >= 1")
        if not 0 < self.variance_floor < self.variance_ceiling:
            raise InvalidArgumentError("need 0 < variance_floor < variance_ceiling")
        if self.init_burn_in >= self.init_gibbs_per_iter or self.init_em_iters < 1:
            raise InvalidArgumentError("invalid initialization budget")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    @property
    def n_retained(self) -> int:
        return self.n_gibbs_per_iter - self.burn_in

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown fit config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FitResult:
    params_hat: ModelParams
    draws: PosteriorDraws
    trace: list[dict]
    converged: bool
    iterations: int
    init_params: ModelParams
    final_state: LatentState | None = field(default=None, repr=False)
    n_clamped: int = 0


# --------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _draw_w(x, z, w, rng, floor):
    K = x.size
    R = z.size
    clamped = 0
    for k in range(K):
        for r in range(R):
            c = x[k] + z[r]
            if not abs(c) <= C_MAX:
                return _DIVERGED
            v = _pg1_devroye(c, rng)
            if v < floor:
                v = floor
                clamped += 1
            w[k, r] = v
    return clamped


@numba.njit(cache=True)
def _sweep(bins, x, z, w, rho_x, alpha_x, u_x, s2x, rho_z, alpha_z, u_z, s2z,
           update_x, update_z, rng, floor, bufk, bufr):
    clamped = _draw_w(x, z, w, rng, floor)
    if clamped < 0:
        return clamped
    if update_x:
        _collapse(bins, z, w, 0, bufk[0], bufk[1])
        _forward(bufk[0], bufk[1], rho_x, alpha_x, u_x, s2x, bufk[2], bufk[3], bufk[4], bufk[5])
        _backward(bufk[4], bufk[5], rho_x, alpha_x, u_x, s2x, rng, x)
    if update_z:
        _collapse(bins, x, w, 1, bufr[0], bufr[1])
        _forward(bufr[0], bufr[1], rho_z, alpha_z, u_z, s2z, bufr[2], bufr[3], bufr[4], bufr[5])
        _backward(bufr[4], bufr[5], rho_z, alpha_z, u_z, s2z, rng, z)
    return clamped


@numba.njit(cache=True)
def _run_chain(bins, x, z, w, rho_x, alpha_x, u_x, s2x, rho_z, alpha_z, u_z, s2z,
               update_x, update_z, rng, floor, n_burn, xs, zs):
    bufk = np.empty((6, x.size))
    bufr = np.empty((6, z.size))
    n_keep = xs.shape[0]
    clamped = 0
    for it in range(n_burn + n_keep):
        c = _sweep(bins, x, z, w, rho_x, alpha_x, u_x, s2x, rho_z, alpha_z, u_z, s2z,
                   update_x, update_z, rng, floor, bufk, bufr)
        if c < 0:
            return c
        clamped += c
        if it >= n_burn:
            xs[it - n_burn, :] = x
            zs[it - n_burn, :] = z
    return clamped


def _chain(raster: Raster, params: ModelParams, x, z, w, n_burn: int, n_keep: int,
           rng: np.random.Generator, update_x: bool = True, update_z: bool = True):
    bins = np.ascontiguousarray(raster.bins, dtype=np.float64)
    xs = np.empty((n_keep, x.size))
    zs = np.empty((n_keep, z.size))
    code = _run_chain(
        bins, x, z, w,
        float(params.rho_x), float(params.alpha_x), raster.u_x.astype(np.float64), float(params.sigma2_eps),
        float(params.rho_z), float(params.alpha_z), raster.u_z.astype(np.float64), float(params.sigma2_del),
        update_x, update_z, rng, PG_FLOOR, int(n_burn), xs, zs,
    )
    if code < 0:
        raise NumericalAbortError(
            f"|x_k + z_r| exceeded {C_MAX:g} during Gibbs sampling at {params}")
    return xs, zs, int(code)


# --------------------------------------------------------------------------
# public operations


def gibbs_sweep(state: LatentState, raster: Raster, params: ModelParams,
                rng: np.random.Generator) -> LatentState:
    """One block Gibbs sweep: w | x, z, then x | z, w, then z | x, w."""
    K, R = raster.bins.shape
    if state.x.shape != (K,) or state.z.shape != (R,):
        raise InvalidArgumentError("state dimensions inconsistent with raster")
    x, z, w = state.x.copy(), state.z.copy(), state.w.copy()
    _chain(raster, params, x, z, w, 0, 1, rng)
    return LatentState(x, z, w)


def e_step(raster: Raster, params: ModelParams, cfg: FitConfig, rng: np.random.Generator,
           init: LatentState) -> tuple[PosteriorDraws, LatentState]:
    """Run ``burn_in`` discarded sweeps, then keep ``n_gibbs_per_iter - burn_in`` draws.

    Returns the draws and the final state, for warm-starting the next E-step.
    """
    x, z, w = init.x.copy(), init.z.copy(), init.w.copy()
    if x.shape != (raster.n_bins,) or z.shape != (raster.n_trials,):
        raise InvalidArgumentError("initial state dimensions inconsistent with raster")
    xs, zs, clamped = _chain(raster, params, x, z, w, cfg.burn_in, cfg.n_retained, rng)
    draws = PosteriorDraws(xs, zs, params, burn_in_discarded=cfg.burn_in, seed=cfg.seed,
                           n_clamped=clamped)
    return draws, LatentState(x, z, w)


def _increments(paths: np.ndarray, rho: float) -> np.ndarray:
    prev = np.zeros_like(paths)
    prev[:, 1:] = paths[:, :-1]
    return paths - rho * prev


def _axis_update(paths, rho, u, alpha, estimate_alpha, floor):
    d = _increments(paths, rho)
    if estimate_alpha:
        denom = float(np.sum(u * u))
        alpha = float(np.sum(d.mean(axis=0) * u) / denom) if denom > 0 else 0.0
    resid = d - alpha * u
    sigma2 = float(np.mean(resid * resid))
    return alpha, max(sigma2, floor)


def m_step(draws: PosteriorDraws, raster: Raster, cfg: FitConfig) -> ModelParams:
    """Closed-form maximizer of the Monte-Carlo Q-function.

    Variances are floored at ``cfg.variance_floor``. Input gains are
    re-estimated only when ``cfg.estimate_alpha``; otherwise they are
    carried over from ``draws.theta_at``.
    """
    if draws.n < 1:
        raise InvalidArgumentError("m_step needs at least one draw")
    draws.check_against(raster)
    th = draws.theta_at
    u_x = raster.u_x.astype(np.float64)
    u_z = raster.u_z.astype(np.float64)
    ax, s2x = _axis_update(draws.x, cfg.rho_x, u_x, th.alpha_x, cfg.estimate_alpha, cfg.variance_floor)
    az, s2z = _axis_update(draws.z, cfg.rho_z, u_z, th.alpha_z, cfg.estimate_alpha, cfg.variance_floor)
    return ModelParams(sigma2_eps=s2x, sigma2_del=s2z, alpha_x=ax, alpha_z=az,
                       rho_x=cfg.rho_x, rho_z=cfg.rho_z, estimate_alpha=cfg.estimate_alpha)


def _logit_mean_rate(raster: Raster) -> float:
    n = raster.bins.size
    p = (raster.bins.sum() + 0.5) / (n + 1.0)
    return float(np.log(p) - np.log1p(-p))


def _fit_one_axis(raster: Raster, cfg: FitConfig, rng: np.random.Generator, axis: str):
    # 1-D binary state-space fit on the raster aggregated over the other axis:
    # the other path is pinned at zero and never updated.
    K, R = raster.bins.shape
    within = axis == "within"
    n = K if within else R
    level = _logit_mean_rate(raster)
    path = np.full(n, level)
    s2 = cfg.init_sigma2
    x = path if within else np.zeros(K)
    z = np.zeros(R) if within else path
    w = np.empty((K, R))
    n_keep = cfg.init_gibbs_per_iter - cfg.init_burn_in
    for _ in range(cfg.init_em_iters):
        params = ModelParams(sigma2_eps=s2 if within else 1.0, sigma2_del=1.0 if within else s2,
                             rho_x=cfg.rho_x, rho_z=cfg.rho_z)
        xs, zs, _ = _chain(raster, params, x, z, w, cfg.init_burn_in, n_keep, rng,
                           update_x=within, update_z=not within)
        paths = xs if within else zs
        _, s2_new = _axis_update(paths, cfg.rho_x if within else cfg.rho_z, 0.0, 0.0, False,
                                 cfg.variance_floor)
        done = abs(s2_new - s2) < cfg.conv_tol
        s2 = s2_new
        if done:
            break
    return s2, (x if within else z).copy()


def initialize(raster: Raster, cfg: FitConfig, rng: np.random.Generator) -> tuple[ModelParams, LatentState]:
    """Starting parameters and Gibbs state from two one-axis fits.

    The within-trial fit pools trials at each bin (z pinned to 0), the
    cross-trial fit pools bins within each trial (x pinned to 0). Both
    recover the overall rate level, so the level is split between the two
    paths in proportion to their variances before they are combined.
    """
    check_raster(raster)
    s2x, x_path = _fit_one_axis(raster, cfg, rng, "within")
    s2z, z_path = _fit_one_axis(raster, cfg, rng, "cross")
    level = _logit_mean_rate(raster)
    share_x = s2x / (s2x + s2z)
    x0 = x_path - x_path.mean() + share_x * level
    z0 = z_path - z_path.mean() + (1.0 - share_x) * level
    w0 = np.vectorize(pg1_mean)(x0[:, None] + z0[None, :])
    params = ModelParams(sigma2_eps=s2x, sigma2_del=s2z, rho_x=cfg.rho_x, rho_z=cfg.rho_z,
                         estimate_alpha=cfg.estimate_alpha)
    return params, LatentState(x0, z0, w0)


def _trace_entry(p: ModelParams) -> dict:
    return {"sigma2_eps": p.sigma2_eps, "sigma2_del": p.sigma2_del,
            "alpha_x": p.alpha_x, "alpha_z": p.alpha_z}


def fit_em(raster: Raster, cfg: FitConfig, callback=None) -> FitResult:
    """Estimate theta by Monte-Carlo EM.

    Iterates E-step / M-step from :func:`initialize` until both variances
    move by less than ``conv_tol`` between consecutive iterations, or
    ``max_em_iters`` is reached. E-steps warm-start from the previous final
    state. Running out of iterations is reported via ``converged=False``.

    ``callback(iteration, params)`` is invoked after every M-step.
    """
    check_raster(raster)
    rng = np.random.default_rng(cfg.seed)
    params, state = initialize(raster, cfg, rng)
    init_params = params
    log.info("init: sigma2_eps=%.4g sigma2_del=%.4g", params.sigma2_eps, params.sigma2_del)
    trace: list[dict] = []
    converged = False
    clamped = 0
    draws = None
    for it in range(1, cfg.max_em_iters + 1):
        draws, state = e_step(raster, params, cfg, rng, state)
        clamped += draws.n_clamped
        new = m_step(draws, raster, cfg)
        for name in ("sigma2_eps", "sigma2_del"):
            if getattr(new, name) > cfg.variance_ceiling:
                raise NumericalAbortError(
                    f"{name}={getattr(new, name):.4g} exceeds {cfg.variance_ceiling:g} at EM iteration {it}")
        trace.append(_trace_entry(new))
        if cfg.estimate_alpha:
            log.debug("iter %d alpha_x=%.4g alpha_z=%.4g", it, new.alpha_x, new.alpha_z)
        log.info("iter %d: sigma2_eps=%.6g sigma2_del=%.6g", it, new.sigma2_eps, new.sigma2_del)
        if callback is not None:
            callback(it, new)
        if it >= 2:
            prev = trace[-2]
            converged = (abs(new.sigma2_eps - prev["sigma2_eps"]) < cfg.conv_tol
                         and abs(new.sigma2_del - prev["sigma2_del"]) < cfg.conv_tol)
        params = new
        if converged:
            break
    return FitResult(params_hat=params, draws=draws, trace=trace, converged=converged,
                     iterations=len(trace), init_params=init_params, final_state=state,
                     n_clamped=clamped)
