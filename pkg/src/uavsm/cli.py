"""Command-line front end.

Exit status: 0 on success, 1 for invalid input or configuration, 2 when a
processing step fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from collections import defaultdict
from datetime import date
from pathlib import Path

import numpy as np

from . import io as uio
from .bayes import posterior_for_pixels, write_posterior_csv
from .calibration import calibrate_records, sky_calibrate
from .campaign import (RESOLUTION_FOR_ALTITUDE, FlightPlan, SceneSpec, generate_scene,
                       simulate_flight, simulate_sky_records)
from .errors import ConfigError, UavsmError
from .evaluation import (ProbePoint, pair_retrievals_to_probes, per_site_mean_r, pooled_metrics,
                         rescale_probes, write_metric_table)
from .forward import ModelParams
from .geometry import filter_incidence, geolocate, normalize_by_cell, utm_zone, wgs84_to_utm
from .gridding import GRIDDERS, GridSpec, PixelGrid, write_ascii_grid
from .retrieval import (AuxState, RetrievalConfig, combine_pair_estimates, retrieve_dca_batch,
                        retrieve_mtdca_batch, retrieve_sca_batch, sliding_pair_scheduler,
                        tau_from_vwc, vwc_from_ndvi)

log = logging.getLogger("uavsm")

LAND_COVER_CODES = {0: "shrub", 1: "bare_soil", 2: "forest"}
GRID_NAME = re.compile(r"^(tb_h|tb_v)_(\d{4}-\d{2}-\d{2})_([0-9.]+)m\.asc$")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _config(args, check_paths=True):
    if getattr(args, "config", None):
        return uio.load_config(args.config, check_paths=check_paths)
    return uio.config_from_dict({}, check_paths=check_paths)


def _require(value, name):
    if value is None:
        raise ConfigError(name, "required but not given")
    p = Path(value)
    if not p.exists():
        raise ConfigError(name, f"file not found: {p}")
    return p


def _model_params(cfg):
    m = cfg.model
    return ModelParams(omega=m.omega, h=m.h, q=m.q, theta=m.theta, frequency=m.frequency)


# -- calibrate ------------------------------------------------------------------------

def cmd_calibrate(args):
    cfg = _config(args)
    raw = _require(args.raw or cfg.paths.raw, "paths.raw")
    records = uio.read_radiometer_csv(raw)
    acs = cfg.calibration.acs()
    offsets = cfg.calibration.offsets()
    sky_path = args.sky or cfg.paths.sky
    if sky_path:
        by_day = defaultdict(list)
        for r in uio.read_radiometer_csv(_require(sky_path, "paths.sky")):
            by_day[r.day].append(r)
        for d, recs in by_day.items():
            offsets[d] = sky_calibrate(recs, acs, cfg.calibration.t_sky, d)
            log.info("sky offsets %s: d_h=%.3f K d_v=%.3f K", d, offsets[d].d_h, offsets[d].d_v)
    cal = calibrate_records(records, acs, offsets)
    recs = cal.records
    col = lambda k: np.array([getattr(r, k) for r in recs], dtype=float)  # noqa: E731
    g = cfg.geometry
    samples, zone = geolocate(col("lat"), col("lon"), col("alt"), col("roll"), col("pitch"),
                              col("yaw"), cal.tb_h, cal.tb_v, col("timestamp"), g.boresight,
                              g.look_azimuth, g.beamwidth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    uio.write_samples_csv(samples, out, zone)
    print(f"calibrated {len(recs)} records ({cal.n_dropped} dropped) -> {out}")
    return 0


# -- grid ------------------------------------------------------------------------------

def grid_samples(samples, zone, resolutions, method, cfg, normalize=True):
    """Yield ``(day, resolution, band, PixelGrid)`` for every UTC day in ``samples``."""
    lo, hi = cfg.geometry.incidence_range
    samples = filter_incidence(samples, lo, hi)
    if len(samples) == 0:
        raise ConfigError("samples", "no samples left after the incidence filter")
    days = uio.sample_days(samples)
    # one grid per resolution for all days, so multi-day retrievals line up
    specs = {float(res): GridSpec.covering(samples.easting.min(), samples.northing.min(),
                                           samples.easting.max(), samples.northing.max(),
                                           float(res)) for res in resolutions}
    for day in sorted(set(days)):
        sub = samples[days == day]
        for res, spec in specs.items():
            s = normalize_by_cell(sub, spec, cfg.geometry.theta_ref) if normalize else sub
            for band in ("tb_h", "tb_v"):
                grid = GRIDDERS[method](s, spec, band=band, zone=zone, date=str(day))
                yield day, float(res), band, grid


def cmd_grid(args):
    cfg = _config(args)
    path = _require(args.samples or cfg.paths.samples, "paths.samples")
    samples, zone = uio.read_samples_csv(path)
    method = args.method or cfg.grid.method
    resolutions = args.resolution or cfg.grid.resolutions
    normalize = cfg.grid.normalize and not args.no_normalize
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for day, res, band, grid in grid_samples(samples, zone, resolutions, method, cfg, normalize):
        write_ascii_grid(grid, out / f"{band}_{day}_{res:g}m.asc")
        n += 1
    print(f"wrote {n} rasters to {out}")
    return 0


def load_tb_grids(directory):
    """``{(resolution, day): {"tb_h": PixelGrid, "tb_v": PixelGrid}}`` from a grid directory."""
    found = defaultdict(dict)
    for p in sorted(Path(directory).glob("*.asc")):
        m = GRID_NAME.match(p.name)
        if m:
            band, d, res = m.groups()
            found[(float(res), date.fromisoformat(d))][band] = uio.read_ascii_grid(p)
    if not found:
        raise ConfigError("paths.grids", f"no tb_h_/tb_v_ rasters in {directory}")
    return dict(found)


# -- ancillary data ---------------------------------------------------------------------

class Ancillary:
    """Land cover, NDVI and temperatures resampled onto retrieval grids."""

    def __init__(self, directory, cfg):
        self.dir = Path(directory) if directory else None
        self.cfg = cfg
        self._temps = {}
        if self.dir is not None and (self.dir / "temperatures.csv").exists():
            import csv
            with open(self.dir / "temperatures.csv", newline="") as fh:
                for r in csv.DictReader(fh):
                    self._temps[date.fromisoformat(r["date"])] = (float(r["t_soil"]),
                                                                 float(r["t_canopy"]))

    def _raster(self, name):
        if self.dir is None:
            return None
        p = self.dir / name
        return p if p.exists() else None

    def land_cover(self, spec: GridSpec):
        p = self._raster("land_cover.asc")
        if p is None:
            return np.zeros(spec.shape, dtype=int)
        g = uio.resample_majority(uio.read_ascii_grid(p), spec)
        return np.where(np.isfinite(g.values), g.values, -1).astype(int)

    def tau(self, spec: GridSpec, lc_codes):
        p = self._raster("ndvi.asc")
        if p is None:
            return np.zeros(spec.shape)
        ndvi = uio.ingest_raster(p, spec).values
        r = self.cfg.retrieval
        tau = np.zeros(spec.shape)
        for code, lc in LAND_COVER_CODES.items():
            entry = r.land_cover.get(lc)
            mask = lc_codes == code
            if entry is None or not mask.any():
                continue
            vwc = vwc_from_ndvi(np.nan_to_num(ndvi[mask]), r.ndvi_max, r.ndvi_min, entry["f_stem"])
            tau[mask] = tau_from_vwc(vwc, entry["b_lc"])
        return tau

    def temperatures(self, spec: GridSpec, day):
        ps, pc = self._raster(f"t_soil_{day}.asc"), self._raster(f"t_canopy_{day}.asc")
        if ps is not None and pc is not None:
            return uio.ingest_raster(ps, spec).values, uio.ingest_raster(pc, spec).values
        if day in self._temps:
            ts, tc = self._temps[day]
            return np.full(spec.shape, ts), np.full(spec.shape, tc)
        raise ConfigError("paths.ancillary", f"no temperatures for {day}")


def _cells_by_cover(lc_codes, ok):
    for code, lc in LAND_COVER_CODES.items():
        sel = ok & (lc_codes == code)
        if sel.any():
            yield lc, sel


def _retrieve_single(alg, grids, anc, cfg, params, kw):
    rows = []
    for (res, day), bands in sorted(grids.items()):
        spec = bands["tb_v"].spec
        lc = anc.land_cover(spec)
        tau_anc = anc.tau(spec, lc)
        ts, tc = anc.temperatures(spec, day)
        tb_v, tb_h = bands["tb_v"].values, bands["tb_h"].values
        sm = np.full(spec.shape, np.nan)
        tau = np.full(spec.shape, np.nan)
        resid = np.full(spec.shape, np.nan)
        atb = np.zeros(spec.shape, dtype=bool)
        ok = np.isfinite(tb_v) & np.isfinite(tb_h) & np.isfinite(ts) & np.isfinite(tc)
        for lcname, sel in _cells_by_cover(lc, ok):
            rc = RetrievalConfig(algorithm=alg, land_cover=lcname, **kw)
            aux = (ts[sel], tc[sel], cfg.model.clay_frac)
            if alg in ("SCAV", "SCAH"):
                obs = tb_v if alg == "SCAV" else tb_h
                b = retrieve_sca_batch(obs[sel], alg[-1], tau_anc[sel], aux, params, rc)
            else:
                b = retrieve_dca_batch(tb_v[sel], tb_h[sel], aux, params, rc)
            sm[sel], tau[sel], resid[sel] = b.sm, b.tau, b.residual
            atb[sel] = b.at_bound.any(axis=1)
        rows.extend(uio.retrieval_rows(day, spec, res, alg, sm, tau, resid, atb))
    return rows


def _retrieve_mtdca(grids, anc, cfg, params, kw):
    rows = []
    for res in sorted({r for r, _ in grids}):
        days = sorted(d for r, d in grids if r == res)
        specs = {grids[(res, d)]["tb_v"].spec for d in days}
        if len(specs) != 1:
            raise ConfigError("paths.grids", f"{res:g} m rasters of different days do not share a grid")
        spec = specs.pop()
        lc = anc.land_cover(spec)
        est_sm, est_tau, est_res = {}, {}, {}
        for d1, d2 in sliding_pair_scheduler(days):
            g1, g2 = grids[(res, d1)], grids[(res, d2)]
            ts1, tc1 = anc.temperatures(spec, d1)
            ts2, tc2 = anc.temperatures(spec, d2)
            obs = [g1["tb_v"].values, g1["tb_h"].values, g2["tb_v"].values, g2["tb_h"].values]
            ok = np.logical_and.reduce([np.isfinite(o) for o in obs + [ts1, tc1, ts2, tc2]])
            s1, s2, tt, rr = (np.full(spec.shape, np.nan) for _ in range(4))
            for lcname, sel in _cells_by_cover(lc, ok):
                rc = RetrievalConfig(algorithm="MTDCA", land_cover=lcname, **kw)
                b = retrieve_mtdca_batch(*(o[sel] for o in obs),
                                         (ts1[sel], tc1[sel], cfg.model.clay_frac),
                                         (ts2[sel], tc2[sel], cfg.model.clay_frac), params, rc)
                s1[sel], s2[sel], tt[sel], rr[sel] = b.sm[:, 0], b.sm[:, 1], b.tau, b.residual
            est_sm[(d1, d2)] = (s1, s2)
            est_tau[(d1, d2)] = (tt, tt)
            est_res[(d1, d2)] = (rr, rr)
        sm_d = combine_pair_estimates(est_sm)
        tau_d = combine_pair_estimates(est_tau)
        res_d = combine_pair_estimates(est_res)
        for d in sm_d:
            rows.extend(uio.retrieval_rows(d, spec, res, "MTDCA", sm_d[d], tau_d[d], res_d[d]))
    return rows


def cmd_retrieve(args):
    cfg = _config(args)
    grids = load_tb_grids(_require(args.grids or cfg.paths.grids, "paths.grids"))
    if args.resolution:
        grids = {k: v for k, v in grids.items() if k[0] in {float(r) for r in args.resolution}}
    alg = (args.algorithm or cfg.retrieval.algorithm).upper().replace("-", "")
    anc = Ancillary(args.ancillary or cfg.paths.ancillary, cfg)
    params = _model_params(cfg)
    kw = dict(sm_bounds=tuple(cfg.retrieval.sm_bounds), tau_bounds=tuple(cfg.retrieval.tau_bounds))
    if alg == "MTDCA":
        rows = _retrieve_mtdca(grids, anc, cfg, params, kw)
    else:
        rows = _retrieve_single(alg, grids, anc, cfg, params, kw)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    uio.write_retrieval_csv(rows, out)
    print(f"{alg}: {len(rows)} pixel retrievals -> {out}")
    return 0


# -- bayes -------------------------------------------------------------------------------

def cmd_bayes(args):
    cfg = _config(args)
    grids = load_tb_grids(_require(args.grids or cfg.paths.grids, "paths.grids"))
    alg = (args.algorithm or cfg.retrieval.algorithm).upper().replace("-", "")
    anc = Ancillary(args.ancillary or cfg.paths.ancillary, cfg)
    b = cfg.bayes
    steps = args.steps or b.steps
    walkers = args.walkers or b.walkers
    max_pixels = args.max_pixels or b.max_pixels
    keys = sorted(grids)
    if args.resolution:
        keys = [k for k in keys if k[0] == float(args.resolution)]
    if args.date:
        keys = [k for k in keys if str(k[1]) == args.date]
    if not keys:
        raise ConfigError("arguments", "no rasters match --resolution/--date")
    params = _model_params(cfg)
    rows = []
    for res, day in keys:
        bands = grids[(res, day)]
        spec = bands["tb_v"].spec
        lc = anc.land_cover(spec)
        tau_anc = anc.tau(spec, lc)
        ts, tc = anc.temperatures(spec, day)
        e, n = spec.cell_centers()
        ok = np.isfinite(bands["tb_v"].values) & np.isfinite(bands["tb_h"].values)
        if alg == "MTDCA":
            nxt = [k for k in grids if k[0] == res and (k[1] - day).days == 1]
            if not nxt:
                continue
            b2 = grids[nxt[0]]
            ts2, tc2 = anc.temperatures(spec, nxt[0][1])
            ok &= np.isfinite(b2["tb_v"].values) & np.isfinite(b2["tb_h"].values)
        for lcname, sel in _cells_by_cover(lc, ok):
            idx = np.flatnonzero(sel.ravel())[:max_pixels]
            if idx.size == 0:
                continue
            r_, c_ = np.unravel_index(idx, spec.shape)
            if alg in ("SCAV", "SCAH"):
                obs = (bands["tb_v"] if alg == "SCAV" else bands["tb_h"]).values[r_, c_][:, None]
                aux = (AuxState(ts[r_, c_], tc[r_, c_], cfg.model.clay_frac),)
                tau_fixed = tau_anc[r_, c_]
            elif alg == "DCA":
                obs = np.stack([bands["tb_v"].values[r_, c_], bands["tb_h"].values[r_, c_]], axis=1)
                aux = (AuxState(ts[r_, c_], tc[r_, c_], cfg.model.clay_frac),)
                tau_fixed = 0.0
            else:
                obs = np.stack([bands["tb_v"].values[r_, c_], bands["tb_h"].values[r_, c_],
                                b2["tb_v"].values[r_, c_], b2["tb_h"].values[r_, c_]], axis=1)
                aux = (AuxState(ts[r_, c_], tc[r_, c_], cfg.model.clay_frac),
                       AuxState(ts2[r_, c_], tc2[r_, c_], cfg.model.clay_frac))
                tau_fixed = 0.0
            sigma2 = b.sigma2_sca if alg in ("SCAV", "SCAH") else None
            out = posterior_for_pixels(alg, obs, aux, params, tuple(cfg.retrieval.sm_bounds),
                                       tuple(cfg.retrieval.tau_bounds), tau_fixed, lcname,
                                       sigma2, args.seed, walkers, steps, b.burn_frac)
            for (summary, _), rr, cc in zip(out, r_, c_):
                for row in summary.as_rows():
                    rows.append({"date": str(day), "easting": float(e[rr, cc]),
                                 "northing": float(n[rr, cc]), "algorithm": alg, **row})
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_posterior_csv(rows, out_path)
    print(f"{alg}: {len(rows)} posterior rows -> {out_path}")
    return 0


# -- evaluate ------------------------------------------------------------------------------

def evaluate_tables(retrieval_rows, probe_rows, grav, max_distance_cells=1.5):
    """Rescale probes, pair them with retrieval grids and compute metric rows."""
    latest = {}
    for r in probe_rows:
        if r["site_id"] not in latest or r["date"] > latest[r["site_id"]]["date"]:
            latest[r["site_id"]] = r
    common = [s for s in grav if s in latest]
    if len(common) >= 3:
        corr = rescale_probes([latest[s]["sm_probe"] for s in common], [grav[s] for s in common])
    else:
        log.warning("fewer than 3 gravimetric sites; probes used without rescaling")
        corr = None
    zone = utm_zone(probe_rows[0]["lon"])
    sites = {}
    series = defaultdict(dict)
    for r in probe_rows:
        if r["site_id"] not in sites:
            e, n, _ = wgs84_to_utm(r["lat"], r["lon"], zone)
            sites[r["site_id"]] = ProbePoint(r["site_id"], e, n)
        v = r["sm_probe"] if corr is None else float(corr(r["sm_probe"]))
        series[r["site_id"]][r["date"]] = v
    metric_rows = []
    excluded = {}
    for (alg, res), by_day in sorted(uio.retrieval_grids(retrieval_rows).items()):
        pairs, report = pair_retrievals_to_probes(by_day, list(sites.values()), series,
                                                  max_distance_cells)
        excluded[(alg, res)] = report.excluded
        pairs = {k: p for k, p in pairs.items() if len(p) >= 1}
        if not pairs or sum(len(p) for p in pairs.values()) < 2:
            continue
        m = pooled_metrics(pairs)
        metric_rows.append({"algorithm": alg, "resolution": res, "bias": m.bias, "rmse": m.rmse,
                            "ubrmse": m.ubrmse, "r": m.r, "r_site_mean": per_site_mean_r(pairs),
                            "n": m.n})
    return metric_rows, corr, excluded


def cmd_evaluate(args):
    cfg = _config(args)
    rows = []
    for p in args.retrievals:
        rows.extend(uio.read_retrieval_csv(_require(p, "retrievals")))
    probes = uio.read_probe_csv(_require(args.probes or cfg.paths.probes, "paths.probes"))
    grav_path = args.gravimetric or cfg.paths.gravimetric
    grav = uio.read_gravimetric_csv(_require(grav_path, "paths.gravimetric")) if grav_path else {}
    metric_rows, corr, excluded = evaluate_tables(rows, probes, grav, args.max_distance)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metric_table(metric_rows, out)
    if corr is not None:
        print(f"probe rescaling: slope={corr.slope:.4f} intercept={corr.intercept:.4f}")
    for key, ex in excluded.items():
        for site, why in ex.items():
            log.info("%s %g m: site %s excluded (%s)", key[0], key[1], site, why)
    print(f"{len(metric_rows)} metric rows -> {out}")
    return 0


# -- simulate ---------------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args, check_paths=False)
    c = cfg.campaign
    scene_spec = SceneSpec.from_dict(c.scene)
    plan = FlightPlan.from_dict(c.plan)
    scene = generate_scene(scene_spec, args.seed)
    out = Path(args.out_dir)
    (out / "ancillary").mkdir(parents=True, exist_ok=True)
    (out / "scene.json").write_text(json.dumps(scene_spec.to_dict(), indent=2, default=str))
    (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2, default=str))
    for ai, alt in enumerate(c.altitudes):
        p = FlightPlan(**{**plan.to_dict(), "altitude": float(alt)})
        parts = [simulate_flight(scene, p, seed=(args.seed, ai, di), day=d).samples
                 for di, d in enumerate(scene.days)]
        from .geometry import FootprintSamples
        uio.write_samples_csv(FootprintSamples.concatenate(parts), out / f"samples_{alt:g}m.csv",
                              scene.zone)
    if args.raw:
        fr = simulate_flight(scene, FlightPlan(**{**plan.to_dict(), "altitude": float(c.altitudes[-1])}),
                             seed=(args.seed, 99), day=scene.days[0], raw=True,
                             cal=cfg.calibration.acs(), instrument_offset=(1.5, -1.0))
        uio.write_radiometer_csv(fr.records, out / "raw.csv")
        sky = simulate_sky_records(scene.days[0], 300, (1.5, -1.0), cfg.calibration.t_sky,
                                   args.seed, cfg.calibration.acs())
        uio.write_radiometer_csv(sky, out / "sky.csv")
    _write_ancillary(scene, out / "ancillary")
    _write_probes(scene, c, out, args.seed)
    _write_truth(scene, out / "truth.csv")
    print(f"simulated {len(scene.days)} days x {len(c.altitudes)} altitudes -> {out}")
    return 0


def _write_ancillary(scene, directory, resolution=1.0):
    spec = scene.grid_spec(resolution)
    e, n = spec.cell_centers()
    x, y = scene.to_local(e, n)
    k = scene.strip_index(y)
    codes = {v: c for c, v in LAND_COVER_CODES.items()}
    lc = np.array([codes[s.land_cover] for s in scene.strips], dtype=float)[k]
    ndvi = np.array([st.ndvi for st in scene.spec.strips])[k]
    write_ascii_grid(PixelGrid(spec, lc, zone=scene.zone, meta={"band": "land_cover",
                                                                "codes": LAND_COVER_CODES}),
                     directory / "land_cover.asc", fmt="%.0f")
    write_ascii_grid(PixelGrid(spec, ndvi, zone=scene.zone, meta={"band": "ndvi"}),
                     directory / "ndvi.asc", fmt="%.4f")
    for d in scene.days:
        for name, val in (("t_soil", scene.t_s[d]), ("t_canopy", scene.t_c[d])):
            write_ascii_grid(PixelGrid(spec, np.full(spec.shape, val), zone=scene.zone,
                                       meta={"band": name, "date": str(d)}),
                             directory / f"{name}_{d}.asc", fmt="%.3f")


def _write_probes(scene, c, out, seed):
    """Synthetic probes with a linear miscalibration and one gravimetric sample per site."""
    from .geometry import utm_to_wgs84
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4242]))
    rows, grav = [], {}
    w = scene.spec.width
    for st in scene.strips:
        xs = np.linspace(w * 0.15, w * 0.85, c.n_probes_per_strip)
        for j, x in enumerate(xs):
            y = 0.5 * (st.y0 + st.y1)
            sid = f"{st.name.replace(' ', '').lower()}_{j + 1}"
            e, n = scene.to_utm(x, y)
            lat, lon = utm_to_wgs84(e, n, scene.zone)
            for d in scene.days:
                truth = float(scene.sm(x, y, d)) + rng.normal(0, c.probe_noise)
                probe = (truth - c.probe_intercept) / c.probe_slope
                rows.append({"date": str(d), "site_id": sid, "lat": float(lat), "lon": float(lon),
                             "sm_probe": probe, "t_soil_5cm": float(scene.t_s[d])})
            grav[sid] = float(scene.sm(x, y, scene.days[-1]))
    uio.write_probe_csv(rows, out / "probes.csv")
    uio.write_gravimetric_csv(grav, out / "gravimetric.csv")


def _write_truth(scene, path):
    rows = []
    for res in sorted(set(RESOLUTION_FOR_ALTITUDE.values())):
        spec = scene.grid_spec(res)
        tau = scene.cell_truth(spec, quantity="tau")
        for d in scene.days:
            sm = scene.cell_truth(spec, d)
            rows.extend(uio.retrieval_rows(d, spec, res, "TRUTH", sm, tau))
    uio.write_retrieval_csv(rows, path)


# -- report ----------------------------------------------------------------------------------

def cmd_report(args):
    from . import report

    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.grids:
        grids = load_tb_grids(args.grids)
        days = sorted({d for _, d in grids})
        day = date.fromisoformat(args.date) if args.date else days[len(days) // 2]
        hist = {}
        for (res, d), bands in sorted(grids.items()):
            if d != day:
                continue
            for band, g in bands.items():
                written.append(report.map_svg(g, out / f"map_{band}_{d}_{res:g}m.svg",
                                              f"{band.upper()} {d} {res:g} m", "K"))
            hist[f"{res:g} m"] = bands["tb_v"].values.ravel()
        if hist:
            written.append(report.histogram_svg(hist, out / f"hist_tb_v_{day}.svg"))
    if args.retrievals:
        rows = []
        for p in args.retrievals:
            rows.extend(uio.read_retrieval_csv(_require(p, "retrievals")))
        by_key = uio.retrieval_grids(rows)
        days = sorted({d for g in by_key.values() for d in g})
        day = date.fromisoformat(args.date) if args.date else days[len(days) // 2]
        panel = {f"{a} {r:g} m": g[day] for (a, r), g in sorted(by_key.items()) if day in g}
        if panel:
            written.append(report.map_panel_svg(panel, out / f"sm_maps_{day}.svg", "m3/m3",
                                                vmin=cfg.retrieval.sm_bounds[0], vmax=0.45))
    if args.metrics:
        from .evaluation import METRIC_COLUMNS, read_metric_table
        rows = read_metric_table(_require(args.metrics, "metrics"))
        written.append(report.write_table(rows, METRIC_COLUMNS, out / "metrics_table.csv"))
    if args.posterior:
        import csv
        with open(_require(args.posterior, "posterior"), newline="") as fh:
            prow = [r for r in csv.DictReader(fh) if r["param"].startswith("sm")]
        if prow:
            prow = prow[:30]
            written.append(report.uncertainty_svg(
                [f"{r['date']} {float(r['easting']):.0f}" for r in prow],
                [float(r["map"]) for r in prow], [float(r["std"]) for r in prow], None,
                out / "posterior_uncertainty.svg"))
    if not written:
        raise ConfigError("arguments", "nothing to report; give --grids, --retrievals, --metrics or --posterior")
    print(f"wrote {len(written)} report files to {out}")
    return 0


# -- entry point --------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="uavsm", description="UAV L-band radiometry: calibration to soil moisture.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        return sp

    c = common(sub.add_parser("calibrate", help="raw radiometer CSV -> footprint sample CSV"))
    c.add_argument("--raw")
    c.add_argument("--sky", help="sky-pointing records for daily offsets")
    c.add_argument("--out", required=True)

    g = common(sub.add_parser("grid", help="footprint samples -> ESRI ASCII rasters"))
    g.add_argument("--samples")
    g.add_argument("--resolution", type=float, nargs="+")
    g.add_argument("--method", choices=("dib", "nn", "ids"))
    g.add_argument("--no-normalize", action="store_true")
    g.add_argument("--out-dir", required=True)

    r = common(sub.add_parser("retrieve", help="gridded T_B -> soil moisture long table"))
    r.add_argument("--grids")
    r.add_argument("--ancillary")
    r.add_argument("--algorithm", choices=("scav", "scah", "dca", "mtdca"), type=str.lower)
    r.add_argument("--resolution", type=float, nargs="+")
    r.add_argument("--out", required=True)

    b = common(sub.add_parser("bayes", help="posterior summaries per pixel"))
    b.add_argument("--grids")
    b.add_argument("--ancillary")
    b.add_argument("--algorithm", choices=("scav", "scah", "dca", "mtdca"), type=str.lower)
    b.add_argument("--resolution", type=float)
    b.add_argument("--date")
    b.add_argument("--max-pixels", type=int)
    b.add_argument("--steps", type=int)
    b.add_argument("--walkers", type=int)
    b.add_argument("--out", required=True)

    e = common(sub.add_parser("evaluate", help="metrics of retrievals against probes"))
    e.add_argument("--retrievals", nargs="+", required=True)
    e.add_argument("--probes")
    e.add_argument("--gravimetric")
    e.add_argument("--max-distance", type=float, default=1.5, help="in cell widths")
    e.add_argument("--out", required=True)

    s = common(sub.add_parser("simulate", help="synthetic campaign"))
    s.add_argument("--out-dir", required=True)
    s.add_argument("--raw", action="store_true", help="also write raw and sky records")

    rp = common(sub.add_parser("report", help="SVG maps and CSV tables"))
    rp.add_argument("--grids")
    rp.add_argument("--retrievals", nargs="+")
    rp.add_argument("--metrics")
    rp.add_argument("--posterior")
    rp.add_argument("--date")
    rp.add_argument("--out-dir", required=True)
    return p


COMMANDS = {"calibrate": cmd_calibrate, "grid": cmd_grid, "retrieve": cmd_retrieve,
            "bayes": cmd_bayes, "evaluate": cmd_evaluate, "simulate": cmd_simulate,
            "report": cmd_report}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UavsmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
