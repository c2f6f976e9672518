"""Batched bounded Nelder-Mead.

Many small, independent minimizations (one per pixel and start point) run
in lock-step on numpy arrays. Trial points are projected onto the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc


@dataclass
class BatchMinimum:
    x: np.ndarray
    fun: np.ndarray
    converged: np.ndarray
    nit: np.ndarray


def latin_starts(n_starts, lower, upper, seed=0):
    """``n_starts`` Latin-hypercube points inside the box (deterministic)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u = qmc.LatinHypercube(d=len(lower), seed=seed).random(n_starts)
    return lower + u * (upper - lower)


def _initial_simplex(x0, lower, upper, step):
    b, n = x0.shape
    sim = np.repeat(x0[:, None, :], n + 1, axis=1)
    span = (upper - lower) * step
    for j in range(n):
        up = sim[:, j + 1, j] + span[j]
        # step inward when the vertex would leave the box
        sim[:, j + 1, j] = np.where(up <= upper[j], up, sim[:, j + 1, j] - span[j])
    return sim


def nelder_mead_batch(fun, x0, lower, upper, step=0.05, xatol=1e-10, fatol=1e-16,
                      frtol=1e-12, maxiter=3000, restarts=2):
    """Minimize ``fun`` independently for each row of ``x0``.

    ``fun(x, idx)`` evaluates rows ``x`` of shape ``(m, n)`` that belong to
    problems ``idx`` (shape ``(m,)``) and returns ``(m,)`` values. After
    convergence the search restarts ``restarts`` times from the best vertex
    with a smaller simplex, which guards against premature collapse.

    A run stops when the simplex is smaller than ``xatol`` in every
    coordinate and the spread of its values is below
    ``fatol + frtol * |f_best|``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x0 = np.clip(x0, lower, upper)
    b, n = x0.shape
    best_x = x0.copy()
    best_f = np.full(b, np.inf)
    nit = np.zeros(b, dtype=int)
    converged = np.zeros(b, dtype=bool)
    s = step
    for _ in range(restarts + 1):
        x, f, conv, it = _nm_run(fun, best_x, lower, upper, s, xatol, fatol, frtol, maxiter)
        better = f <= best_f
        best_x[better] = x[better]
        best_f[better] = f[better]
        converged |= conv
        nit += it
        s = max(s * 0.02, 1e-6)
    return BatchMinimum(best_x, best_f, converged, nit)


def _nm_run(fun, x0, lower, upper, step, xatol, fatol, frtol, maxiter):
    b, n = x0.shape
    all_idx = np.arange(b)
    sim = _initial_simplex(x0, lower, upper, step)
    fs = fun(sim.reshape(-1, n), np.repeat(all_idx, n + 1)).reshape(b, n + 1)
    active = np.ones(b, dtype=bool)
    nit = np.zeros(b, dtype=int)

    def clip(v):
        return np.clip(v, lower, upper)

    for _ in range(maxiter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        order = np.argsort(fs[ia], axis=1)
        S = np.take_along_axis(sim[ia], order[:, :, None], axis=1)
        F = np.take_along_axis(fs[ia], order, axis=1)
        nit[ia] += 1

        done = (np.max(np.abs(S[:, 1:] - S[:, :1]), axis=(1, 2)) <= xatol) & \
               (np.max(np.abs(F[:, 1:] - F[:, :1]), axis=1) <= fatol + frtol * np.abs(F[:, 0]))
        sim[ia], fs[ia] = S, F
        active[ia[done]] = False
        keep = ~done
        ia, S, F = ia[keep], S[keep], F[keep]
        if ia.size == 0:
            break

        worst = S[:, -1]
        xbar = S[:, :-1].mean(axis=1)
        xr = clip(2 * xbar - worst)
        fr = fun(xr, ia)
        new_x = S[:, -1].copy()
        new_f = F[:, -1].copy()
        shrink = np.zeros(ia.size, dtype=bool)

        exp_m = fr < F[:, 0]
        if exp_m.any():
            xe = clip(3 * xbar[exp_m] - 2 * worst[exp_m])
            fe = fun(xe, ia[exp_m])
            use_e = fe < fr[exp_m]
            sub = np.flatnonzero(exp_m)
            new_x[sub] = np.where(use_e[:, None], xe, xr[exp_m])
            new_f[sub] = np.where(use_e, fe, fr[exp_m])

        refl = ~exp_m & (fr < F[:, -2])
        new_x[refl], new_f[refl] = xr[refl], fr[refl]

        outc = ~exp_m & ~refl & (fr < F[:, -1])
        if outc.any():
            xc = clip(xbar[outc] + 0.5 * (xr[outc] - xbar[outc]))
            fc = fun(xc, ia[outc])
            ok = fc <= fr[outc]
            sub = np.flatnonzero(outc)
            new_x[sub[ok]], new_f[sub[ok]] = xc[ok], fc[ok]
            shrink[sub[~ok]] = True

        inc = ~exp_m & ~refl & ~outc
        if inc.any():
            xc = clip(xbar[inc] - 0.5 * (xbar[inc] - worst[inc]))
            fc = fun(xc, ia[inc])
            ok = fc < F[inc, -1]
            sub = np.flatnonzero(inc)
            new_x[sub[ok]], new_f[sub[ok]] = xc[ok], fc[ok]
            shrink[sub[~ok]] = True

        S[:, -1], F[:, -1] = new_x, new_f
        if shrink.any():
            ss = np.flatnonzero(shrink)
            pts = S[ss, :1] + 0.5 * (S[ss, 1:] - S[ss, :1])
            fv = fun(pts.reshape(-1, n), np.repeat(ia[ss], n)).reshape(ss.size, n)
            S[ss, 1:], F[ss, 1:] = pts, fv
        sim[ia], fs[ia] = S, F

    order = np.argsort(fs, axis=1)
    best = np.take_along_axis(sim, order[:, :1, None], axis=1)[:, 0]
    return best, np.min(fs, axis=1), ~active, nit


def _fd_jacobian(resid, x, idx, lower, upper, rel_step=1e-7):
    """Central-difference Jacobian ``(m, n_obs, n)``, one-sided at the box faces."""
    n = x.shape[1]
    h = rel_step * (upper - lower)
    cols = []
    for j in range(n):
        xp, xm = x.copy(), x.copy()
        xp[:, j] = np.minimum(x[:, j] + h[j], upper[j])
        xm[:, j] = np.maximum(x[:, j] - h[j], lower[j])
        cols.append((resid(xp, idx) - resid(xm, idx)) / (xp[:, j] - xm[:, j])[:, None])
    return np.stack(cols, axis=-1)


def levenberg_marquardt_batch(resid, x0, lower, upper, maxiter=200, xtol=1e-13, ftol=1e-15):
    """Projected Levenberg-Marquardt refinement of many small least-squares problems.

    ``resid(x, idx)`` returns residual vectors ``(m, n_obs)`` for rows ``x``
    of problems ``idx``. Parameters sitting on a face of the box whose
    gradient points outward are frozen for that step.
    """
    x = np.clip(np.atleast_2d(np.asarray(x0, dtype=float)), lower, upper)
    b, n = x.shape
    idx_all = np.arange(b)
    r = resid(x, idx_all)
    f = np.sum(r * r, axis=1)
    lam = np.full(b, 1e-3)
    active = np.ones(b, dtype=bool)
    converged = np.zeros(b, dtype=bool)
    nit = np.zeros(b, dtype=int)
    eye = np.eye(n)
    for _ in range(maxiter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        nit[ia] += 1
        xa, ra = x[ia], r[ia]
        J = _fd_jacobian(resid, xa, ia, lower, upper)
        g = np.einsum("bmn,bm->bn", J, ra)
        frozen = ((xa <= lower) & (g > 0)) | ((xa >= upper) & (g < 0))
        J = np.where(frozen[:, None, :], 0.0, J)
        g = np.where(frozen, 0.0, g)
        A = np.einsum("bmi,bmj->bij", J, J)
        d = np.einsum("bii->bi", A)
        damp = lam[ia, None, None] * (d[:, :, None] * eye + 1e-12 * eye)
        step = np.linalg.solve(A + damp + frozen[:, :, None] * eye, -g[..., None])[..., 0]
        step = np.where(frozen, 0.0, step)
        xn = np.clip(xa + step, lower, upper)
        rn = resid(xn, ia)
        fn = np.sum(rn * rn, axis=1)
        better = fn < f[ia]
        acc = ia[better]
        moved = np.max(np.abs(xn - xa), axis=1)
        drop = f[ia] - fn
        x[acc], r[acc], f[acc] = xn[better], rn[better], fn[better]
        lam[acc] = np.maximum(lam[acc] / 3.0, 1e-12)
        lam[ia[~better]] *= 4.0
        small = (moved <= xtol) | (better & (drop <= ftol * (1.0 + fn))) | (np.max(np.abs(g), axis=1) == 0)
        stuck = lam[ia] > 1e10
        done = small | stuck
        converged[ia[done]] = True
        active[ia[done]] = False
    return BatchMinimum(x, f, converged, nit)
