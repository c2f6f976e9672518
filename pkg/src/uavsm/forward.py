"""Zeroth-order tau-omega emission model at L-band.

Soil moisture goes through the Mironov (2009) mineralogy-based dielectric
model, then the Fresnel reflectivities. An H-Q-N roughness correction
follows, and the canopy transmissivity closes the chain. Every function
broadcasts over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OutOfRangeMoisture

EPS0 = 8.854187817e-12
SM_RANGE = (0.0, 0.7)
POLARIZATIONS = ("H", "V")


@dataclass(frozen=True)
class SurfaceState:
    sm: float
    tau: float
    t_s: float
    t_c: float
    clay_frac: float = 0.085

    def __post_init__(self):
        if not SM_RANGE[0] <= self.sm <= SM_RANGE[1]:
            raise OutOfRangeMoisture(f"sm={self.sm} outside {SM_RANGE}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0 <= self.clay_frac <= 1:
            raise ValueError("clay_frac must be in [0, 1]")


@dataclass(frozen=True)
class ModelParams:
    omega: float = 0.08
    h: float = 0.13
    q: float = 0.0
    theta: float = 40.0
    frequency: float = 1.4  # GHz

    def __post_init__(self):
        if not 0 <= self.omega <= 0.2:
            raise ValueError("omega must be in [0, 0.2]")
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if not 0 <= self.q <= 0.5:
            raise ValueError("q must be in [0, 0.5]")


@lru_cache(maxsize=64)
def _mironov_water(clay_frac: float, frequency: float):
    """Dry-soil and water refractive parameters for a given clay fraction."""
    c = clay_frac
    f = frequency * 1e9
    eps_inf = 4.9
    nd = 1.634 - 0.539 * c + 0.2748 * c**2
    kd = 0.03952 - 0.04038 * c
    mvt = 0.02863 + 0.30673 * c
    eps0b = 79.8 - 85.4 * c + 32.7 * c**2
    taub = 1.062e-11 + 3.450e-12 * c
    sigb = 0.3112 + 0.467 * c
    eps0u = 100.0
    tauu = 8.5e-12
    sigu = 0.3631 + 1.217 * c

    def debye(eps0, tau, sig):
        w = 2 * np.pi * f * tau
        re = eps_inf + (eps0 - eps_inf) / (1 + w * w)
        im = (eps0 - eps_inf) * w / (1 + w * w) + sig / (2 * np.pi * EPS0 * f)
        mod = np.hypot(re, im)
        return np.sqrt((mod + re) / 2), np.sqrt((mod - re) / 2)

    nb, kb = debye(eps0b, taub, sigb)
    nu, ku = debye(eps0u, tauu, sigu)
    return nd, kd, mvt, nb, kb, nu, ku


def mironov_permittivity(sm, clay_frac=0.085, frequency=1.4):
    """Complex relative permittivity (``eps' + j eps''``) of moist soil."""
    sm = np.asarray(sm, dtype=float)
    if np.any(sm < SM_RANGE[0]) or np.any(sm > SM_RANGE[1]) or np.any(~np.isfinite(sm)):
        raise OutOfRangeMoisture(f"soil moisture must lie in {SM_RANGE}")
    clay = np.asarray(clay_frac, dtype=float)
    if clay.ndim == 0:
        nd, kd, mvt, nb, kb, nu, ku = _mironov_water(float(clay), float(frequency))
    else:
        uniq, inv = np.unique(clay, return_inverse=True)
        table = np.array([_mironov_water(float(c), float(frequency)) for c in uniq])
        nd, kd, mvt, nb, kb, nu, ku = (table[:, j][inv].reshape(clay.shape) for j in range(7))
    bound = np.minimum(sm, mvt)
    free = np.maximum(sm - mvt, 0.0)
    n = nd + (nb - 1) * bound + (nu - 1) * free
    k = kd + kb * bound + ku * free
    return (n * n - k * k) + 2j * n * k


def fresnel_reflectivity(eps, theta):
    """Smooth-surface power reflectivities ``(r_h, r_v)`` at incidence ``theta`` (deg)."""
    eps = np.asarray(eps, dtype=complex)
    th = np.radians(theta)
    ct = np.cos(th)
    s = np.sqrt(eps - np.sin(th) ** 2)
    r_h = np.abs((ct - s) / (ct + s)) ** 2
    r_v = np.abs((eps * ct - s) / (eps * ct + s)) ** 2
    return r_h, r_v


def rough_reflectivity(r_sp, r_sq, q, h, theta):
    """H-Q-N rough reflectivity for polarization p with cross-pol ``r_sq``.

    Uses ``[(1 - Q) r_sp + Q r_sq] exp(-h cos^2 theta)`` so that ``Q = 0``
    leaves the co-polarized reflectivity unmixed.
    """
    mix = (1 - q) * np.asarray(r_sp) + q * np.asarray(r_sq)
    return mix * np.exp(-h * np.cos(np.radians(theta)) ** 2)


def transmissivity(tau, theta):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    return np.exp(-tau / np.cos(np.radians(theta)))


def tau_omega(r_rp, gamma, t_s, t_c, omega):
    """Soil emission through the canopy + canopy emission + its soil reflection."""
    veg = (1 - gamma) * (1 - omega) * t_c
    return gamma * (1 - r_rp) * t_s + veg + gamma * r_rp * veg


def brightness_hv(sm, tau, t_s, t_c, clay_frac=0.085, omega=0.08, h=0.13, q=0.0,
                  theta=40.0, frequency=1.4):
    """Simulated ``(T_B_H, T_B_V)`` in K; all arguments broadcast."""
    eps = mironov_permittivity(sm, clay_frac, frequency)
    r_h, r_v = fresnel_reflectivity(eps, theta)
    rr_h = rough_reflectivity(r_h, r_v, q, h, theta)
    rr_v = rough_reflectivity(r_v, r_h, q, h, theta)
    gamma = transmissivity(tau, theta)
    return (tau_omega(rr_h, gamma, t_s, t_c, omega),
            tau_omega(rr_v, gamma, t_s, t_c, omega))


def tb_simulate(state: SurfaceState, params: ModelParams = ModelParams(), pol="V"):
    pol = pol.upper()
    if pol not in POLARIZATIONS:
        raise ValueError(f"pol must be one of {POLARIZATIONS}")
    tb_h, tb_v = brightness_hv(state.sm, state.tau, state.t_s, state.t_c, state.clay_frac,
                               params.omega, params.h, params.q, params.theta, params.frequency)
    return float(tb_h if pol == "H" else tb_v)


def params_kwargs(params: ModelParams):
    return dict(omega=params.omega, h=params.h, q=params.q, theta=params.theta,
                frequency=params.frequency)


def dtb_dtau(sm, tau, t_s, t_c, clay_frac=0.085, omega=0.08, h=0.13, q=0.0, theta=40.0,
             frequency=1.4):
    """Analytic partial derivatives of ``(T_B_H, T_B_V)`` with respect to tau."""
    eps = mironov_permittivity(sm, clay_frac, frequency)
    r_h, r_v = fresnel_reflectivity(eps, theta)
    mu = np.cos(np.radians(theta))
    g = transmissivity(tau, theta)
    dg = -g / mu
    out = []
    for rp, rq in ((r_h, r_v), (r_v, r_h)):
        r = rough_reflectivity(rp, rq, q, h, theta)
        c = (1 - omega) * t_c
        # d/dg [g(1-r)Ts + (1-g)c + g r (1-g) c]
        out.append(dg * ((1 - r) * t_s - c + r * c * (1 - 2 * g)))
    return tuple(out)


def dtb_dsm(sm, tau, t_s, t_c, clay_frac=0.085, step=1e-5, **kw):
    """Central-difference derivative of ``(T_B_H, T_B_V)`` with respect to sm."""
    sm = np.asarray(sm, dtype=float)
    lo = np.clip(sm - step, *SM_RANGE)
    hi = np.clip(sm + step, *SM_RANGE)
    h_hi, v_hi = brightness_hv(hi, tau, t_s, t_c, clay_frac, **kw)
    h_lo, v_lo = brightness_hv(lo, tau, t_s, t_c, clay_frac, **kw)
    return (h_hi - h_lo) / (hi - lo), (v_hi - v_lo) / (hi - lo)
