"""Bayesian retrieval with an affine-invariant ensemble sampler.

The likelihood is Gaussian in the brightness-temperature residuals. The
prior is uniform on a box. The posterior is explored with Goodman & Weare
stretch moves (the "red-blue" parallel variant), with walkers started in a
small ball around the least-squares solution.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateEnsemble
from .forward import ModelParams, brightness_hv
from .retrieval import (AuxState, RetrievalConfig, effective_params, retrieve_dca_batch,
                        retrieve_mtdca_batch, retrieve_sca_batch)

SIGMA2_SCA = 1e-6
SIGMA2_FLOOR = 1.0
DIP_THRESHOLD = 0.05
MIN_SUMMARY_SAMPLES = 10_000

PARAM_NAMES = {
    "SCAV": ("sm",),
    "SCAH": ("sm",),
    "DCA": ("sm", "tau"),
    "MTDCA": ("sm_t1", "sm_t2", "tau"),
}
N_OBS = {"SCAV": 1, "SCAH": 1, "DCA": 2, "MTDCA": 4}


@dataclass
class PosteriorSpec:
    """Everything needed to evaluate the log-posterior of one or many pixels.

    ``observations`` is ordered ``[tb]`` for SCA, ``[tb_v, tb_h]`` for DCA
    and ``[tb_v1, tb_h1, tb_v2, tb_h2]`` for MT-DCA. A leading pixel axis
    turns the posterior spec into a batch; ``aux`` fields and ``tau_fixed`` may then
    be per-pixel arrays.
    """

    algorithm: str
    observations: np.ndarray
    aux: tuple = (AuxState(295.0, 295.0),)
    params: ModelParams = ModelParams()
    sm_bounds: tuple = (0.02, 0.60)
    tau_bounds: tuple = (0.0, 3.0)
    sigma2: float | np.ndarray = SIGMA2_SCA
    sigma2_mode: str = "fixed"
    tau_fixed: float | np.ndarray = 0.0
    land_cover: str = "shrub"

    def __post_init__(self):
        self.algorithm = self.algorithm.upper().replace("-", "")
        if self.algorithm not in PARAM_NAMES:
            raise ValueError(f"unknown algorithm {self.algorithm}")
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.shape[-1] != N_OBS[self.algorithm]:
            raise ValueError(f"{self.algorithm} takes {N_OBS[self.algorithm]} observations")
        if isinstance(self.aux, AuxState):
            self.aux = (self.aux,)
        if np.any(np.asarray(self.sigma2) <= 0):
            raise ValueError("sigma2 must be positive")
        if self.sigma2_mode not in ("fixed", "dynamic"):
            raise ValueError("sigma2_mode must be 'fixed' or 'dynamic'")
        lo, hi = self.bounds
        if np.any(hi <= lo):
            raise ValueError("prior box is degenerate")

    @property
    def batched(self):
        return self.observations.ndim == 2

    @property
    def n_pixels(self):
        return self.observations.shape[0] if self.batched else 1

    @property
    def names(self):
        return PARAM_NAMES[self.algorithm]

    @property
    def ndim(self):
        return len(self.names)

    @property
    def bounds(self):
        sm, tau = self.sm_bounds, self.tau_bounds
        if self.algorithm in ("SCAV", "SCAH"):
            return np.array([sm[0]]), np.array([sm[1]])
        if self.algorithm == "DCA":
            return np.array([sm[0], tau[0]]), np.array([sm[1], tau[1]])
        return np.array([sm[0], sm[0], tau[0]]), np.array([sm[1], sm[1], tau[1]])

    def retrieval_config(self):
        return RetrievalConfig(self.algorithm, self.sm_bounds, self.tau_bounds, self.land_cover)

    def _aux(self, i, expand):
        a = self.aux[i] if len(self.aux) > i else self.aux[0]
        vals = [np.asarray(v, dtype=float) for v in (a.t_s, a.t_c, a.clay_frac)]
        if expand:
            vals = [v[..., None] if v.ndim else v for v in vals]
        return vals

    def predict(self, theta):
        """Simulated observations for parameter array ``theta`` of shape (..., ndim)."""
        theta = np.asarray(theta, dtype=float)
        p = effective_params(self.params, self.retrieval_config())
        kw = dict(omega=p.omega, h=p.h, q=p.q, theta=p.theta, frequency=p.frequency)
        expand = self.batched and theta.ndim == 3
        ts, tc, clay = self._aux(0, expand)
        if self.algorithm in ("SCAV", "SCAH"):
            tau = 0.0 if self.land_cover == "bare_soil" else np.asarray(self.tau_fixed, dtype=float)
            if expand and np.ndim(tau):
                tau = tau[:, None]
            h, v = brightness_hv(theta[..., 0], tau, ts, tc, clay, **kw)
            return (v if self.algorithm == "SCAV" else h)[..., None]
        if self.algorithm == "DCA":
            h, v = brightness_hv(theta[..., 0], theta[..., 1], ts, tc, clay, **kw)
            return np.stack([v, h], axis=-1)
        ts2, tc2, clay2 = self._aux(1, expand)
        h1, v1 = brightness_hv(theta[..., 0], theta[..., 2], ts, tc, clay, **kw)
        h2, v2 = brightness_hv(theta[..., 1], theta[..., 2], ts2, tc2, clay2, **kw)
        return np.stack([v1, h1, v2, h2], axis=-1)


def _in_box(theta, lower, upper):
    return np.all((theta >= lower) & (theta <= upper), axis=-1)


def _obs_and_sigma(spec, theta_ndim):
    obs = spec.observations
    s2 = np.asarray(spec.sigma2, dtype=float)
    # batched sigma2 is a scalar, per-observation (n_obs,), or per-pixel (P, 1 or n_obs)
    if spec.batched and theta_ndim == 3:
        obs = obs[:, None, :]
        if s2.ndim == 2:
            s2 = s2[:, None, :]
    return obs, s2


def log_likelihood(theta, spec: PosteriorSpec):
    """Gaussian log-likelihood summed over the algorithm's observations.

    Points outside the prior box evaluate to ``-inf``.
    """
    theta = np.asarray(theta, dtype=float)
    lower, upper = spec.bounds
    inside = _in_box(theta, lower, upper)
    safe = np.where(inside[..., None], theta, 0.5 * (lower + upper))
    obs, s2 = _obs_and_sigma(spec, theta.ndim)
    r = spec.predict(safe) - obs
    ll = -0.5 * np.sum(r * r / s2 + np.log(2 * np.pi * s2), axis=-1)
    return np.where(inside, ll, -np.inf)


def log_prior(theta, spec: PosteriorSpec):
    lower, upper = spec.bounds
    return np.where(_in_box(np.asarray(theta, dtype=float), lower, upper), 0.0, -np.inf)


def log_posterior(theta, spec: PosteriorSpec):
    """Unnormalized log-posterior: likelihood plus a flat log-prior."""
    return log_likelihood(theta, spec) + log_prior(theta, spec)


# -- sampler -------------------------------------------------------------------

@dataclass
class ChainSet:
    samples: np.ndarray        # (steps, walkers, ndim)
    log_prob: np.ndarray       # (steps, walkers)
    burn_in: int
    acceptance_rate: float
    names: tuple = ()
    diagnostics: list = field(default_factory=list)

    @property
    def steps(self):
        return self.samples.shape[0]

    @property
    def walkers(self):
        return self.samples.shape[1]

    def flat(self):
        """Post-burn-in samples, shape (n, ndim)."""
        return self.samples[self.burn_in:].reshape(-1, self.samples.shape[-1])

    def flat_log_prob(self):
        return self.log_prob[self.burn_in:].reshape(-1)


def stretch_sampler(log_prob, p0, steps, rng, a=2.0):
    """Evolve walker ensembles ``p0`` of shape (..., walkers, ndim).

    Leading axes index independent ensembles. Returns ``(chain, lnp, acc)``
    with shapes (steps, ..., walkers, ndim), (steps, ..., walkers) and
    (..., walkers).
    """
    x = np.array(p0, dtype=float)
    w, d = x.shape[-2:]
    if w < 2 * d + 2:
        raise ValueError(f"need at least {2 * d + 2} walkers for {d} parameters")
    lp = np.asarray(log_prob(x), dtype=float)
    if np.any(~np.isfinite(lp)):
        raise ValueError("initial walkers must have finite log-probability")
    half = w // 2
    halves = (np.arange(half), np.arange(half, w))
    chain = np.empty((steps,) + x.shape)
    lps = np.empty((steps,) + lp.shape)
    nacc = np.zeros(lp.shape)
    for t in range(steps):
        for k in (0, 1):
            s, c = halves[k], halves[1 - k]
            xs, xc = x[..., s, :], x[..., c, :]
            z = ((a - 1.0) * rng.random(xs.shape[:-1]) + 1.0) ** 2 / a
            j = rng.integers(0, len(c), size=xs.shape[:-1])
            xj = np.take_along_axis(xc, j[..., None], axis=-2)
            y = xj + z[..., None] * (xs - xj)
            lpy = log_prob(y)
            log_r = (d - 1) * np.log(z) + lpy - lp[..., s]
            acc = np.log(rng.random(z.shape)) < np.where(np.isnan(log_r), -np.inf, log_r)
            x[..., s, :] = np.where(acc[..., None], y, xs)
            lp[..., s] = np.where(acc, lpy, lp[..., s])
            nacc[..., s] += acc
        chain[t] = x
        lps[t] = lp
    return chain, lps, nacc / steps


def _check_spread(x):
    if np.all(np.ptp(x, axis=-2) == 0):
        raise DegenerateEnsemble("all walkers occupy the same point")


def _diagnostics(acc_rate, n_post):
    notes = []
    if not 0.05 < acc_rate < 0.95:
        notes.append(f"acceptance rate {acc_rate:.3f} outside (0.05, 0.95)")
    if n_post < MIN_SUMMARY_SAMPLES:
        notes.append(f"only {n_post} post-burn-in samples (< {MIN_SUMMARY_SAMPLES})")
    return notes


def sample_ensemble(log_prob, p0, steps=5000, seed=0, burn_frac=0.2, names=(), a=2.0) -> ChainSet:
    """Run the stretch-move sampler on an arbitrary vectorized ``log_prob``."""
    rng = np.random.default_rng(seed)
    p0 = np.asarray(p0, dtype=float)
    _check_spread(p0)
    chain, lps, acc = stretch_sampler(log_prob, p0, steps, rng, a)
    _check_spread(chain[-1])
    burn = int(round(burn_frac * steps))
    rate = float(np.mean(acc))
    return ChainSet(chain, lps, burn, rate, tuple(names),
                    _diagnostics(rate, (steps - burn) * p0.shape[-2]))


def least_squares_start(spec: PosteriorSpec):
    """Least-squares point estimate(s) for ``spec``, shape (P, ndim)."""
    obs = np.atleast_2d(spec.observations)
    cfg = spec.retrieval_config()
    a0 = spec.aux[0]
    aux0 = (a0.t_s, a0.t_c, a0.clay_frac)
    if spec.algorithm in ("SCAV", "SCAH"):
        r = retrieve_sca_batch(obs[:, 0], spec.algorithm[-1], spec.tau_fixed, aux0, spec.params, cfg)
        return r.sm[:, None], r
    if spec.algorithm == "DCA":
        r = retrieve_dca_batch(obs[:, 0], obs[:, 1], aux0, spec.params, cfg)
        return np.stack([r.sm, r.tau], axis=1), r
    a1 = spec.aux[1] if len(spec.aux) > 1 else a0
    r = retrieve_mtdca_batch(obs[:, 0], obs[:, 1], obs[:, 2], obs[:, 3], aux0,
                             (a1.t_s, a1.t_c, a1.clay_frac), spec.params, cfg)
    return np.column_stack([r.sm, r.tau]), r


def initial_ball(center, lower, upper, walkers, rng, scale=1e-3):
    """Walkers scattered around ``center`` (..., ndim) and folded into the box."""
    center = np.asarray(center, dtype=float)
    width = upper - lower
    shape = center.shape[:-1] + (walkers, center.shape[-1])
    p0 = center[..., None, :] + scale * width * rng.standard_normal(shape)
    p0 = np.where(p0 < lower, 2 * lower - p0, p0)
    p0 = np.where(p0 > upper, 2 * upper - p0, p0)
    return np.clip(p0, lower, upper)


def run_ensemble_mcmc(spec: PosteriorSpec, seed=0, walkers=32, steps=5000, burn_frac=0.2,
                      init=None, a=2.0):
    """Sample the posterior of ``spec``.

    Returns one :class:`ChainSet`, or a list of them for a batched spec.
    Walkers start in a small ball around ``init`` (default: the
    least-squares solution).
    """
    lower, upper = spec.bounds
    if walkers < 2 * spec.ndim + 2:
        raise ValueError(f"need at least {2 * spec.ndim + 2} walkers")
    rng = np.random.default_rng(seed)
    if init is None:
        init, _ = least_squares_start(spec)
        if not spec.batched:
            init = init[0]
    init = np.asarray(init, dtype=float)
    p0 = initial_ball(init, lower, upper, walkers, rng)
    _check_spread(p0)

    def lp(theta):
        return log_posterior(theta, spec)

    chain, lps, acc = stretch_sampler(lp, p0, steps, rng, a)
    burn = int(round(burn_frac * steps))
    n_post = (steps - burn) * walkers
    if not spec.batched:
        _check_spread(chain[-1])
        rate = float(np.mean(acc))
        return ChainSet(chain, lps, burn, rate, spec.names, _diagnostics(rate, n_post))
    out = []
    for i in range(spec.n_pixels):
        _check_spread(chain[-1, i])
        rate = float(np.mean(acc[i]))
        out.append(ChainSet(chain[:, i], lps[:, i], burn, rate, spec.names,
                            _diagnostics(rate, n_post)))
    return out


# -- summaries -----------------------------------------------------------------

@dataclass
class PosteriorSummary:
    names: tuple
    map_estimate: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    ci68: np.ndarray
    multimodal_flag: bool
    dip: np.ndarray
    acceptance_rate: float
    n_samples: int
    diagnostics: list = field(default_factory=list)

    def as_rows(self):
        for i, name in enumerate(self.names):
            yield dict(param=name, map=self.map_estimate[i], mean=self.mean[i], std=self.std[i],
                       ci68_lo=self.ci68[i, 0], ci68_hi=self.ci68[i, 1],
                       multimodal=self.multimodal_flag)


def dip_statistic(x, max_n=20_000):
    """Hartigan's dip statistic of a 1-D sample (thinned to ``max_n`` points)."""
    import diptest

    x = np.asarray(x, dtype=float)
    if x.size > max_n:
        x = x[:: int(np.ceil(x.size / max_n))]
    if np.ptp(x) == 0:
        return 0.0
    return float(diptest.dipstat(x))


def summarize_posterior(chains: ChainSet, dip_threshold=DIP_THRESHOLD) -> PosteriorSummary:
    """MAP (best stored sample), moments, 68% central interval and a dip test.

    The dip test runs on every soil-moisture marginal.
    """
    flat = chains.flat()
    all_s = chains.samples.reshape(-1, chains.samples.shape[-1])
    map_est = all_s[np.argmax(chains.log_prob.reshape(-1))]
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    ci = np.percentile(flat, [16, 84], axis=0).T
    names = chains.names or tuple(f"p{i}" for i in range(flat.shape[1]))
    dips = np.array([dip_statistic(flat[:, i]) for i in range(flat.shape[1])])
    sm_cols = [i for i, n in enumerate(names) if n.startswith("sm")] or [0]
    multimodal = bool(np.any(dips[sm_cols] > dip_threshold))
    notes = list(chains.diagnostics)
    if not multimodal and np.any((mean < ci[:, 0]) | (mean > ci[:, 1])):
        notes.append("posterior mean outside the 68% interval")
    return PosteriorSummary(tuple(names), map_est, mean, std, ci, multimodal, dips,
                            chains.acceptance_rate, flat.shape[0], notes)


def dynamic_sigma2(ls_residual, n_obs, floor=SIGMA2_FLOOR):
    """Error variance from the least-squares misfit.

    ``ls_residual`` is the summed squared residual (K^2) at the optimum; the
    variance is its per-observation mean, floored at ``floor``.
    """
    return np.maximum(floor, np.asarray(ls_residual, dtype=float) / n_obs)


def posterior_for_pixels(algorithm, observations, aux, params=ModelParams(), sm_bounds=(0.02, 0.60),
                         tau_bounds=(0.0, 3.0), tau_fixed=0.0, land_cover="shrub",
                         sigma2=None, seed=0, walkers=32, steps=5000, burn_frac=0.2):
    """Least-squares fit, sigma^2 choice, sampling and summary for a pixel batch.

    SCA uses ``sigma2 = 1e-6`` K^2 unless given. DCA and MT-DCA default to
    :func:`dynamic_sigma2` of their least-squares misfit. Returns a list of
    ``(PosteriorSummary, least-squares vector)`` tuples.
    """
    algorithm = algorithm.upper().replace("-", "")
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    mode = "fixed"
    spec = PosteriorSpec(algorithm, observations, aux, params, sm_bounds, tau_bounds,
                         SIGMA2_SCA, "fixed", tau_fixed, land_cover)
    ls, batch = least_squares_start(spec)
    if sigma2 is None:
        if algorithm in ("SCAV", "SCAH"):
            sigma2 = SIGMA2_SCA
        else:
            sigma2 = dynamic_sigma2(batch.residual, N_OBS[algorithm])
            mode = "dynamic"
    spec.sigma2 = np.asarray(sigma2, dtype=float)
    if spec.sigma2.ndim == 1 and spec.sigma2.size == spec.n_pixels:
        spec.sigma2 = spec.sigma2[:, None]
    spec.sigma2_mode = mode
    chains = run_ensemble_mcmc(spec, seed, walkers, steps, burn_frac, init=ls)
    return [(summarize_posterior(c), ls[i]) for i, c in enumerate(chains)]


# -- I/O -----------------------------------------------------------------------

POSTERIOR_COLUMNS = ("date", "easting", "northing", "algorithm", "param", "map", "mean", "std",
                     "ci68_lo", "ci68_hi", "multimodal")


def write_posterior_csv(rows, path):
    """Write dict rows with :data:`POSTERIOR_COLUMNS` keys."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, POSTERIOR_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(k, r[k]) for k in POSTERIOR_COLUMNS})


def _fmt(key, value):
    if not isinstance(value, float):
        return value
    return f"{value:.3f}" if key in ("easting", "northing") else f"{value:.6g}"


_CHAIN_MAGIC = b"UAVCHN01"
_CHAIN_HEADER = struct.Struct("<8sQQQQ")


def write_chain_binary(chains: ChainSet, path):
    """Dump a chain set.

    Layout (little-endian): 8-byte magic ``UAVCHN01``; uint64 steps, walkers,
    ndim, burn_in; then ``steps*walkers*ndim`` float64 samples in C order;
    then ``steps*walkers`` float64 log-posterior values.
    """
    s, w, d = chains.samples.shape
    with open(path, "wb") as fh:
        fh.write(_CHAIN_HEADER.pack(_CHAIN_MAGIC, s, w, d, chains.burn_in))
        fh.write(np.ascontiguousarray(chains.samples, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(chains.log_prob, dtype="<f8").tobytes())


def read_chain_binary(path, names=()) -> ChainSet:
    raw = Path(path).read_bytes()
    magic, s, w, d, burn = _CHAIN_HEADER.unpack_from(raw)
    if magic != _CHAIN_MAGIC:
        raise ValueError("not a chain dump")
    off = _CHAIN_HEADER.size
    n = s * w * d
    samples = np.frombuffer(raw, "<f8", n, off).reshape(s, w, d).copy()
    lps = np.frombuffer(raw, "<f8", s * w, off + 8 * n).reshape(s, w).copy()
    acc = float(np.mean(np.any(np.diff(samples, axis=0) != 0, axis=-1))) if s > 1 else float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ChainSet(samples, lps, int(burn), acc, tuple(names))
