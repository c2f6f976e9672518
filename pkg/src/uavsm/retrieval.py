"""Least-squares inversion of the tau-omega model.

Algorithms:

* ``SCAV`` / ``SCAH``: soil moisture from one polarization, with tau fixed
  from the NDVI chain.
* ``DCA``: soil moisture and tau from the V/H pair.
* ``MTDCA``: two soil moistures and one shared tau from the V/H pairs of two
  consecutive days.

Batch functions take arrays with one entry per pixel and vectorize across
pixels. The ``retrieve_*`` functions wrap them for a single pixel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from typing import Sequence

import numpy as np

from .errors import DegenerateNdviRange, MissingPairDay
from .forward import ModelParams, brightness_hv
from .optimize import latin_starts, levenberg_marquardt_batch, nelder_mead_batch

log = logging.getLogger(__name__)

ALGORITHMS = ("SCAV", "SCAH", "DCA", "MTDCA")
LAND_COVERS = ("shrub", "bare_soil", "forest")
N_STARTS = 5


@dataclass(frozen=True)
class RetrievalConfig:
    algorithm: str = "DCA"
    sm_bounds: tuple = (0.02, 0.60)
    tau_bounds: tuple = (0.0, 3.0)
    land_cover: str = "shrub"
    b_lc: float | None = None
    f_stem: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", self.algorithm.upper().replace("-", ""))
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.land_cover not in LAND_COVERS:
            raise ValueError(f"land_cover must be one of {LAND_COVERS}")
        for name in ("sm_bounds", "tau_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-degenerate interval")
        if self.sm_bounds[0] < 0 or self.sm_bounds[1] > 0.7:
            raise ValueError("sm_bounds must lie within [0, 0.7]")
        if self.tau_bounds[0] < 0:
            raise ValueError("tau_bounds must be non-negative")
        if self.b_lc is not None and self.b_lc < 0:
            raise ValueError("b_lc must be >= 0")


@dataclass(frozen=True)
class AuxState:
    """Per-pixel ancillary temperatures (K) and soil texture."""

    t_s: float
    t_c: float
    clay_frac: float = 0.085


@dataclass
class RetrievalResult:
    algorithm: str
    sm: float | tuple
    tau: float | str
    residual: float
    converged: bool
    at_bound: dict = field(default_factory=dict)
    non_unique: bool = False


@dataclass
class RetrievalBatch:
    """Per-pixel retrieval arrays. ``sm`` has shape (P,) or (P, 2) for MT-DCA."""

    algorithm: str
    sm: np.ndarray
    tau: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    at_bound: np.ndarray
    non_unique: np.ndarray
    param_names: tuple
    tau_ancillary: bool = False

    def __len__(self):
        return len(self.residual)

    def result(self, i) -> RetrievalResult:
        sm = tuple(float(v) for v in self.sm[i]) if self.sm.ndim == 2 else float(self.sm[i])
        tau = "ancillary" if self.tau_ancillary else float(self.tau[i])
        flags = {n: bool(f) for n, f in zip(self.param_names, self.at_bound[i])}
        return RetrievalResult(self.algorithm, sm, tau, float(self.residual[i]),
                               bool(self.converged[i]), flags, bool(self.non_unique[i]))


# -- ancillary vegetation chain ------------------------------------------------

def vwc_from_ndvi(ndvi_eff, ndvi_max, ndvi_min, f_stem):
    """Vegetation water content (kg/m2) from NDVI.

    The foliage polynomial is clamped at zero for sparse vegetation.
    """
    ndvi_eff = np.asarray(ndvi_eff, dtype=float)
    ndvi_min = np.asarray(ndvi_min, dtype=float)
    if np.any(ndvi_min >= 1 - 1e-9):
        raise DegenerateNdviRange("ndvi_min must be < 1")
    foliage = np.maximum(1.9134 * ndvi_eff**2 - 0.3215 * ndvi_eff, 0.0)
    stem = f_stem * (np.asarray(ndvi_max, dtype=float) - ndvi_min) / (1 - ndvi_min)
    vwc = np.maximum(foliage + stem, 0.0)
    return float(vwc) if vwc.ndim == 0 else vwc


def tau_from_vwc(vwc, b_lc):
    tau = b_lc * np.asarray(vwc, dtype=float)
    return float(tau) if tau.ndim == 0 else tau


def effective_params(params: ModelParams, cfg: RetrievalConfig) -> ModelParams:
    """Bare soil has no canopy, hence no scattering albedo."""
    if cfg.land_cover == "bare_soil":
        return replace(params, omega=0.0)
    return params


# -- helpers -------------------------------------------------------------------

def _aux_arrays(aux, n):
    if isinstance(aux, AuxState):
        aux = [aux] * n
    if isinstance(aux, (list, tuple)) and aux and isinstance(aux[0], AuxState):
        return (np.array([a.t_s for a in aux], dtype=float),
                np.array([a.t_c for a in aux], dtype=float),
                np.array([a.clay_frac for a in aux], dtype=float))
    t_s, t_c, clay = aux
    return tuple(np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for v in (t_s, t_c, clay))


def _model_kw(params: ModelParams):
    return dict(omega=params.omega, h=params.h, q=params.q, theta=params.theta,
                frequency=params.frequency)


def _at_bound(x, lower, upper, rtol=1e-6):
    tol = rtol * (upper - lower)
    return (x <= lower + tol) | (x >= upper - tol)


def _jacobian_rank_deficient(resid_fn, x, lower, upper, ratio=1e-6):
    """Flag solutions whose residual Jacobian is numerically rank deficient."""
    p, n = x.shape
    h = 1e-6 * (upper - lower)
    cols = []
    for j in range(n):
        xp, xm = x.copy(), x.copy()
        xp[:, j] = np.minimum(x[:, j] + h[j], upper[j])
        xm[:, j] = np.maximum(x[:, j] - h[j], lower[j])
        cols.append((resid_fn(xp) - resid_fn(xm)) / (xp[:, j] - xm[:, j])[:, None])
    jac = np.stack(cols, axis=-1)  # (p, m, n)
    sv = np.linalg.svd(jac, compute_uv=False)
    return sv[:, -1] <= ratio * np.maximum(sv[:, 0], 1e-300)


def _solve_multistart(resid_fn_idx, lower, upper, p, n_starts=N_STARTS, seed=0):
    """Multi-start batched Nelder-Mead on ``sum(resid**2)``; best start per pixel."""
    starts = latin_starts(n_starts, lower, upper, seed)
    n = len(lower)
    x0 = np.tile(starts, (p, 1))
    owner = np.repeat(np.arange(p), n_starts)

    def fun(x, idx):
        r = resid_fn_idx(x, owner[idx])
        return np.sum(r * r, axis=1)

    # screening pass over every start at a loose tolerance
    res = nelder_mead_batch(fun, x0, lower, upper, xatol=1e-6, frtol=1e-8, restarts=0)
    f = res.fun.reshape(p, n_starts)
    k = np.argmin(f, axis=1)
    best = res.x.reshape(p, n_starts, n)[np.arange(p), k]

    # Levenberg-Marquardt polish of the winning start only; the simplex is
    # slow along the narrow valleys of the dual-channel objectives
    fin = levenberg_marquardt_batch(resid_fn_idx, best, lower, upper)
    return fin.x, fin.fun, fin.converged


# -- single channel ------------------------------------------------------------

def retrieve_sca_batch(tb_obs, pol, tau_fixed, aux, params: ModelParams, cfg: RetrievalConfig,
                       n_iter=64) -> RetrievalBatch:
    """Bisection on the monotone branch of T_B(sm) for every pixel.

    Observations outside the attainable range clamp to the nearer bound with
    the at-bound flag set.
    """
    tb_obs = np.atleast_1d(np.asarray(tb_obs, dtype=float))
    p = tb_obs.size
    pol = pol.upper()
    if cfg.land_cover == "bare_soil":
        tau_fixed = 0.0
    tau = np.broadcast_to(np.asarray(tau_fixed, dtype=float), (p,)).copy()
    t_s, t_c, clay = _aux_arrays(aux, p)
    kw = _model_kw(effective_params(params, cfg))
    k = 0 if pol == "H" else 1

    def tb(sm):
        return brightness_hv(sm, tau, t_s, t_c, clay, **kw)[k]

    lo = np.full(p, cfg.sm_bounds[0])
    hi = np.full(p, cfg.sm_bounds[1])
    tb_lo, tb_hi = tb(lo), tb(hi)
    too_warm = tb_obs >= tb_lo
    too_cold = tb_obs <= tb_hi
    a, b = lo.copy(), hi.copy()
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        warmer = tb(mid) > tb_obs
        a = np.where(warmer, mid, a)
        b = np.where(warmer, b, mid)
    sm = 0.5 * (a + b)
    sm = np.where(too_warm, lo, np.where(too_cold, hi, sm))
    resid = (tb(sm) - tb_obs) ** 2
    at_bound = (too_warm | too_cold)[:, None]
    return RetrievalBatch(f"SCA{pol}", sm, tau, resid, np.ones(p, dtype=bool), at_bound,
                          np.zeros(p, dtype=bool), ("sm",), tau_ancillary=True)


def retrieve_sca(tb_obs, pol, tau_fixed, aux: AuxState, params: ModelParams = ModelParams(),
                 cfg: RetrievalConfig | None = None) -> RetrievalResult:
    cfg = cfg or RetrievalConfig(algorithm=f"SCA{pol.upper()}")
    return retrieve_sca_batch([tb_obs], pol, tau_fixed, aux, params, cfg).result(0)


# -- dual channel --------------------------------------------------------------

def retrieve_dca_batch(tb_v, tb_h, aux, params: ModelParams, cfg: RetrievalConfig,
                       n_starts=N_STARTS) -> RetrievalBatch:
    tb_v = np.atleast_1d(np.asarray(tb_v, dtype=float))
    tb_h = np.atleast_1d(np.asarray(tb_h, dtype=float))
    p = tb_v.size
    t_s, t_c, clay = _aux_arrays(aux, p)
    kw = _model_kw(effective_params(params, cfg))
    lower = np.array([cfg.sm_bounds[0], cfg.tau_bounds[0]])
    upper = np.array([cfg.sm_bounds[1], cfg.tau_bounds[1]])

    def resid(x, idx):
        h, v = brightness_hv(x[:, 0], x[:, 1], t_s[idx], t_c[idx], clay[idx], **kw)
        return np.stack([v - tb_v[idx], h - tb_h[idx]], axis=1)

    x, f, conv = _solve_multistart(resid, lower, upper, p, n_starts)
    all_idx = np.arange(p)
    non_unique = _jacobian_rank_deficient(lambda z: resid(z, all_idx), x, lower, upper)
    return RetrievalBatch("DCA", x[:, 0], x[:, 1], f, conv, _at_bound(x, lower, upper),
                          non_unique, ("sm", "tau"))


def retrieve_dca(tb_v, tb_h, aux: AuxState, params: ModelParams = ModelParams(),
                 cfg: RetrievalConfig | None = None) -> RetrievalResult:
    cfg = cfg or RetrievalConfig(algorithm="DCA")
    return retrieve_dca_batch([tb_v], [tb_h], aux, params, cfg).result(0)


# -- multi-temporal dual channel ------------------------------------------------

def retrieve_mtdca_batch(tb_v_t1, tb_h_t1, tb_v_t2, tb_h_t2, aux_t1, aux_t2,
                         params: ModelParams, cfg: RetrievalConfig,
                         n_starts=N_STARTS) -> RetrievalBatch:
    obs = [np.atleast_1d(np.asarray(o, dtype=float)) for o in (tb_v_t1, tb_h_t1, tb_v_t2, tb_h_t2)]
    p = obs[0].size
    if any(np.any(~np.isfinite(o)) for o in obs):
        raise MissingPairDay("both days need V and H observations")
    a1 = _aux_arrays(aux_t1, p)
    a2 = _aux_arrays(aux_t2, p)
    kw = _model_kw(effective_params(params, cfg))
    lower = np.array([cfg.sm_bounds[0], cfg.sm_bounds[0], cfg.tau_bounds[0]])
    upper = np.array([cfg.sm_bounds[1], cfg.sm_bounds[1], cfg.tau_bounds[1]])

    def resid(x, idx):
        h1, v1 = brightness_hv(x[:, 0], x[:, 2], a1[0][idx], a1[1][idx], a1[2][idx], **kw)
        h2, v2 = brightness_hv(x[:, 1], x[:, 2], a2[0][idx], a2[1][idx], a2[2][idx], **kw)
        return np.stack([v1 - obs[0][idx], h1 - obs[1][idx],
                         v2 - obs[2][idx], h2 - obs[3][idx]], axis=1)

    x, f, conv = _solve_multistart(resid, lower, upper, p, n_starts)
    all_idx = np.arange(p)
    non_unique = _jacobian_rank_deficient(lambda z: resid(z, all_idx), x, lower, upper)
    return RetrievalBatch("MTDCA", x[:, :2], x[:, 2], f, conv, _at_bound(x, lower, upper),
                          non_unique, ("sm_t1", "sm_t2", "tau"))


def retrieve_mtdca(tb_v_t1, tb_h_t1, tb_v_t2, tb_h_t2, aux_t1: AuxState, aux_t2: AuxState,
                   params: ModelParams = ModelParams(), cfg: RetrievalConfig | None = None
                   ) -> RetrievalResult:
    cfg = cfg or RetrievalConfig(algorithm="MTDCA")
    obs = (tb_v_t1, tb_h_t1, tb_v_t2, tb_h_t2)
    if any(o is None or not np.isfinite(o) for o in obs):
        raise MissingPairDay("both days need V and H observations")
    return retrieve_mtdca_batch(*([o] for o in obs), aux_t1, aux_t2, params, cfg).result(0)


# -- day pairing ---------------------------------------------------------------

def sliding_pair_scheduler(days: Sequence[date]) -> list:
    """Consecutive calendar-day pairs; days separated by a gap are not paired."""
    days = sorted(set(days))
    if len(days) < 2:
        log.warning("multi-temporal retrieval needs at least two days; got %d", len(days))
        return []
    return [(d1, d2) for d1, d2 in zip(days, days[1:]) if d2 - d1 == timedelta(days=1)]


def combine_pair_estimates(pair_estimates: dict) -> dict:
    """Average per-day soil moisture over every pair that contains the day.

    ``pair_estimates`` maps ``(d1, d2)`` to ``(sm_d1, sm_d2)`` (scalars or
    arrays); the result maps each day to its mean estimate, ignoring NaN.
    """
    acc: dict = {}
    for (d1, d2), (s1, s2) in pair_estimates.items():
        acc.setdefault(d1, []).append(np.asarray(s1, dtype=float))
        acc.setdefault(d2, []).append(np.asarray(s2, dtype=float))
    out = {}
    for d, v in sorted(acc.items()):
        stack = np.asarray(v)
        n = np.sum(np.isfinite(stack), axis=0)
        total = np.nansum(stack, axis=0)
        # a pixel missing from one pair keeps the estimate of the other
        out[d] = np.where(n > 0, total / np.maximum(n, 1), np.nan)
    return out
