"""Synthetic field campaigns for closed-loop testing.

A scene is a set of parallel east-west strips (shrubland, bare soil,
forest) with known soil-moisture, optical-depth and temperature fields. A
flight plan flies serpentine tracks over it and produces footprint samples
in the same form as calibrated radiometer data, or raw radiometer records
that still need calibrating.

Local scene coordinates ``(x, y)`` run east and north from the south-west
corner, which sits at a UTM position snapped to 42 m so that 7, 14 and
21 m grids nest.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .calibration import AcsCharacterization, RadiometerRecord, synthesize_voltages
from .errors import PlanOutsideScene
from .forward import brightness_hv
from .geometry import (FootprintSamples, beam_offset, footprint_dims, utm_to_wgs84,
                       wgs84_to_utm)
from .gridding import GridSpec
from .retrieval import tau_from_vwc, vwc_from_ndvi

log = logging.getLogger(__name__)

GOLDEN_ANGLE = np.pi * (3 - np.sqrt(5))
NEST = 42.0  # common multiple of the 7, 14 and 21 m grids
RESOLUTION_FOR_ALTITUDE = {10.0: 7.0, 20.0: 14.0, 30.0: 21.0}


@dataclass(frozen=True)
class StripSpec:
    name: str
    land_cover: str
    sm_mean: float
    ndvi: float = 0.0
    b_lc: float = 0.0
    f_stem: float = 0.0


DEFAULT_STRIPS = (
    StripSpec("Shrub 1", "shrub", 0.24, 0.66, 0.15, 0.0),
    StripSpec("Shrub 2", "shrub", 0.26, 0.70, 0.15, 0.0),
    StripSpec("Shrub 3", "shrub", 0.25, 0.68, 0.15, 0.0),
    StripSpec("Shrub 4", "shrub", 0.27, 0.72, 0.15, 0.0),
    StripSpec("Shrub 5", "shrub", 0.29, 0.60, 0.15, 0.0),
    StripSpec("Soil", "bare_soil", 0.15, 0.15, 0.0, 0.0),
    StripSpec("Forest", "forest", 0.35, 0.82, 0.12, 1.5),
)

DEFAULT_DAYS = tuple((date(2024, 9, 4) + timedelta(days=i)).isoformat() for i in range(9))


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene; strips are listed south to north."""

    width: float = 240.0
    height: float = 180.0
    strips: tuple = DEFAULT_STRIPS
    gradient: float = -0.0003         # d(sm)/d(x) in m3/m3 per m; negative = drier east
    texture_amplitude: float = 0.015  # m3/m3
    texture_periods: tuple = (3, 1)   # whole periods along x and across each strip
    days: tuple = DEFAULT_DAYS
    drying_rate: float = 0.005        # m3/m3 lost per day
    t_soil: float = 294.0
    t_soil_amplitude: float = 2.0
    canopy_offset: float = 1.5
    clay_frac: float = 0.085
    ndvi_max: float = 0.85
    ndvi_min: float = 0.10
    omega: float = 0.08
    h: float = 0.13
    lat: float = 40.08
    lon: float = -88.19

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        if "strips" in d:
            d["strips"] = tuple(StripSpec(**s) for s in d["strips"])
        for k in ("texture_periods", "days"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class Strip:
    name: str
    land_cover: str
    y0: float
    y1: float
    sm_mean: float
    tau: float
    omega: float
    phase: tuple


@dataclass
class Scene:
    spec: SceneSpec
    strips: list
    origin_easting: float
    origin_northing: float
    zone: int
    days: list
    t_s: dict
    t_c: dict

    # -- field evaluation ----------------------------------------------------
    def strip_index(self, y):
        edges = np.array([s.y1 for s in self.strips[:-1]])
        return np.searchsorted(edges, np.clip(y, 0.0, self.spec.height), side="right")

    def _per_strip(self, attr):
        return np.array([getattr(s, attr) for s in self.strips])

    def day_offset(self, day):
        return -self.spec.drying_rate * self.days.index(day)

    def sm(self, x, y, day):
        """Volumetric soil moisture at local coordinates on ``day``."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.spec.width)
        y = np.clip(np.asarray(y, dtype=float), 0.0, self.spec.height)
        k = self.strip_index(y)
        s = self.spec
        kx, ky = s.texture_periods
        y0 = self._per_strip("y0")[k]
        wy = (self._per_strip("y1") - self._per_strip("y0"))[k]
        px = np.array([p[0] for p in (st.phase for st in self.strips)])[k]
        py = np.array([p[1] for p in (st.phase for st in self.strips)])[k]
        texture = (s.texture_amplitude * np.sin(2 * np.pi * kx * x / s.width + px)
                   * np.sin(2 * np.pi * ky * (y - y0) / wy + py))
        return (self._per_strip("sm_mean")[k] + s.gradient * (x - s.width / 2) + texture
                + self.day_offset(day))

    def tau(self, x, y):
        return self._per_strip("tau")[self.strip_index(np.asarray(y, dtype=float))] + 0 * np.asarray(x)

    def omega(self, x, y):
        return self._per_strip("omega")[self.strip_index(np.asarray(y, dtype=float))] + 0 * np.asarray(x)

    def land_cover_index(self, y):
        return self.strip_index(np.asarray(y, dtype=float))

    def strip_mean_sm(self, day):
        return {s.name: s.sm_mean + self.day_offset(day) for s in self.strips}

    # -- coordinates -----------------------------------------------------------
    def to_local(self, easting, northing):
        return np.asarray(easting) - self.origin_easting, np.asarray(northing) - self.origin_northing

    def to_utm(self, x, y):
        return np.asarray(x) + self.origin_easting, np.asarray(y) + self.origin_northing

    def grid_spec(self, resolution):
        return GridSpec.covering(self.origin_easting, self.origin_northing,
                                 self.origin_easting + self.spec.width,
                                 self.origin_northing + self.spec.height, resolution)

    def cell_truth(self, spec: GridSpec, day=None, quantity="sm", n_sub=None):
        """Cell means of a true field over the part of each cell inside the scene."""
        n_sub = n_sub or max(8, int(np.ceil(spec.resolution)))
        off = (np.arange(n_sub) + 0.5) / n_sub * spec.resolution
        e, n = spec.cell_centers()
        e0 = e - spec.resolution / 2
        n0 = n - spec.resolution / 2
        xs = (e0[..., None, None] + off[None, None, :, None]) - self.origin_easting
        ys = (n0[..., None, None] + off[None, None, None, :]) - self.origin_northing
        xs, ys = np.broadcast_arrays(xs, ys)
        inside = (xs >= 0) & (xs <= self.spec.width) & (ys >= 0) & (ys <= self.spec.height)
        if quantity == "sm":
            v = self.sm(xs, ys, day)
        elif quantity == "tau":
            v = self.tau(xs, ys)
        elif quantity == "omega":
            v = self.omega(xs, ys)
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
        cnt = inside.sum(axis=(2, 3))
        tot = np.where(inside, v, 0.0).sum(axis=(2, 3))
        return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)

    def cell_land_cover(self, spec: GridSpec, n_sub=8):
        """Majority strip index per cell (-1 outside the scene)."""
        off = (np.arange(n_sub) + 0.5) / n_sub * spec.resolution
        e, n = spec.cell_centers()
        ys = (n - spec.resolution / 2)[..., None] + off - self.origin_northing
        xs = (e - spec.resolution / 2)[..., None] + off - self.origin_easting
        k = self.strip_index(ys)
        out = np.empty(spec.shape, dtype=int)
        for idx in np.ndindex(spec.shape):
            counts = np.bincount(k[idx], minlength=len(self.strips))
            out[idx] = int(np.argmax(counts))
        x_in = ((xs >= 0) & (xs <= self.spec.width)).any(axis=-1)
        y_in = ((ys >= 0) & (ys <= self.spec.height)).any(axis=-1)
        out[~(x_in & y_in)] = -1
        return out


def generate_scene(spec: SceneSpec = SceneSpec(), seed=0) -> Scene:
    """Build a deterministic scene; ``seed`` only changes the texture phases."""
    rng = np.random.default_rng(seed)
    e0, n0, zone = wgs84_to_utm(spec.lat, spec.lon)
    e0 = float(np.floor(e0 / NEST) * NEST)
    n0 = float(np.floor(n0 / NEST) * NEST)
    n_strips = len(spec.strips)
    if n_strips == 0:
        raise ValueError("scene needs at least one strip")
    w = spec.height / n_strips
    strips = []
    for i, st in enumerate(spec.strips):
        vwc = vwc_from_ndvi(st.ndvi, spec.ndvi_max, spec.ndvi_min, st.f_stem)
        tau = float(tau_from_vwc(vwc, st.b_lc)) if st.land_cover != "bare_soil" else 0.0
        omega = 0.0 if st.land_cover == "bare_soil" else spec.omega
        phase = tuple(rng.uniform(0, 2 * np.pi, 2))
        strips.append(Strip(st.name, st.land_cover, i * w, (i + 1) * w, st.sm_mean, tau, omega,
                            phase))
    days = [date.fromisoformat(d) if isinstance(d, str) else d for d in spec.days]
    n_days = len(days)
    t_s = {d: spec.t_soil + spec.t_soil_amplitude * np.sin(2 * np.pi * i / max(n_days, 1))
           for i, d in enumerate(days)}
    t_c = {d: t_s[d] + spec.canopy_offset for d in days}
    scene = Scene(spec, strips, e0, n0, zone, days, t_s, t_c)
    _check_range(scene)
    return scene


def _check_range(scene: Scene):
    s = scene.spec
    spread = abs(s.gradient) * s.width / 2 + s.texture_amplitude
    lo = min(st.sm_mean for st in scene.strips) - spread - s.drying_rate * (len(scene.days) - 1)
    hi = max(st.sm_mean for st in scene.strips) + spread
    if lo < 0.02 or hi > 0.60:
        raise ValueError(f"scene soil moisture spans [{lo:.3f}, {hi:.3f}], outside [0.02, 0.60]")


# -- flights ---------------------------------------------------------------------

@dataclass(frozen=True)
class FlightPlan:
    altitude: float = 30.0
    track_spacing: float = 4.0
    speed: float = 3.0
    sample_rate: float = 14.0
    boresight: float = 40.0
    beamwidth: float = 37.0
    look_azimuth: float = 0.0
    noise_std: float = 1.0
    calibration_bias: tuple = (0.0, 0.0)   # (H, V) in K
    jitter_std: float = 3.0
    margin: float = 0.0
    strips: tuple | None = None             # strip names to fly; None = all
    footprint_points: int = 64
    start_hour_utc: float = 14.5

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown flight-plan keys: {sorted(unknown)}")
        for k in ("calibration_bias", "strips"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class FlightResult:
    samples: FootprintSamples
    zone: int
    day: date
    records: list | None = None
    clean_tb: tuple | None = None   # (H, V) before noise and bias


def _tracks(scene: Scene, plan: FlightPlan):
    """Beam-center track lines ``(x_start, x_end, y)`` in serpentine order."""
    s = scene.spec
    if plan.margin < 0 or 2 * plan.margin >= s.width:
        raise PlanOutsideScene(f"margin {plan.margin} m leaves no track inside the scene")
    if plan.track_spacing <= 0:
        raise ValueError("track_spacing must be positive")
    names = [st.name for st in scene.strips]
    wanted = names if plan.strips is None else list(plan.strips)
    missing = [n for n in wanted if n not in names]
    if missing:
        raise PlanOutsideScene(f"strips {missing} are not part of the scene")
    lines = []
    forward = True
    for st in scene.strips:
        if st.name not in wanted:
            continue
        n_lines = max(1, int(round((st.y1 - st.y0) / plan.track_spacing)))
        step = (st.y1 - st.y0) / n_lines
        for j in range(n_lines):
            y = st.y0 + (j + 0.5) * step
            x0, x1 = plan.margin, s.width - plan.margin
            lines.append((x0, x1, y) if forward else (x1, x0, y))
            forward = not forward
    return lines


def _vogel_disk(n):
    i = np.arange(n) + 0.5
    r = np.sqrt(i / n)
    phi = i * GOLDEN_ANGLE
    return r * np.cos(phi), r * np.sin(phi)


def _footprint_mean(scene, day, x_c, y_c, ux, uy, major, minor, n_points):
    """Uniform average of the true fields over each 3 dB ellipse."""
    a, b = _vogel_disk(n_points)
    # along-look (ux, uy) and cross-look (-uy, ux) axes
    px = x_c[:, None] + a * (major[:, None] / 2) * ux[:, None] - b * (minor[:, None] / 2) * uy[:, None]
    py = y_c[:, None] + a * (major[:, None] / 2) * uy[:, None] + b * (minor[:, None] / 2) * ux[:, None]
    return (scene.sm(px, py, day).mean(axis=1), scene.tau(px, py).mean(axis=1),
            scene.omega(px, py).mean(axis=1))


def _rng_for(seed, *keys):
    ent = list(np.atleast_1d(seed).astype(np.int64)) + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(ent))


def simulate_flight(scene: Scene, plan: FlightPlan = FlightPlan(), seed=0, day=None,
                    raw=False, cal: AcsCharacterization = AcsCharacterization(),
                    instrument_offset=(0.0, 0.0)) -> FlightResult:
    """Fly ``plan`` over ``scene`` on ``day`` and return footprint samples.

    Each track line gets its own random stream derived from ``seed``. With
    ``raw=True`` the antenna temperatures are also pushed back through the
    calibration chain to radiometer voltages (``records``); calibrating those
    records with the daily offsets ``instrument_offset`` returns the sample
    temperatures.
    """
    day = scene.days[0] if day is None else day
    if day not in scene.days:
        raise ValueError(f"{day} is not a scene day")
    lines = _tracks(scene, plan)
    dt = 1.0 / plan.sample_rate
    ds = plan.speed * dt
    alt = float(plan.altitude)
    t0 = datetime(day.year, day.month, day.day, tzinfo=timezone.utc).timestamp() + plan.start_hour_utc * 3600
    bx, by, tt, roll, pitch, yaw = [], [], [], [], [], []
    t_cursor = t0
    for li, (x0, x1, y) in enumerate(lines):
        rng = _rng_for(seed, li)
        n = int(np.floor(abs(x1 - x0) / ds)) + 1
        xs = x0 + np.sign(x1 - x0) * ds * np.arange(n)
        jitter = np.clip(rng.normal(0.0, plan.jitter_std, (2, n)), -3 * plan.jitter_std, 3 * plan.jitter_std) \
            if plan.jitter_std > 0 else np.zeros((2, n))
        heading = 90.0 if x1 >= x0 else 270.0
        bx.append(xs)
        by.append(np.full(n, y))
        tt.append(t_cursor + dt * np.arange(n))
        t_cursor += dt * n + 5.0
        roll.append(jitter[0])
        pitch.append(jitter[1])
        yaw.append(np.full(n, heading))
    bx, by, tt = map(np.concatenate, (bx, by, tt))
    roll, pitch, yaw = map(np.concatenate, (roll, pitch, yaw))

    # nominal platform position places the unperturbed beam on the track line
    de0, dn0, _ = beam_offset(alt, 0.0, 0.0, yaw, plan.boresight, plan.look_azimuth)
    px, py = bx - de0, by - dn0
    de, dn, inc = beam_offset(alt, roll, pitch, yaw, plan.boresight, plan.look_azimuth)
    keep = (inc >= 20.0) & (inc <= 60.0)
    if not np.all(keep):
        log.debug("discarding %d samples with incidence outside [20, 60] deg", np.sum(~keep))
    sel = lambda a: a[keep]  # noqa: E731
    px, py, de, dn, inc, tt, roll, pitch, yaw = map(sel, (px, py, de, dn, inc, tt, roll, pitch, yaw))
    x_c, y_c = px + de, py + dn
    major, minor = footprint_dims(alt, inc, plan.beamwidth)

    horiz = np.hypot(de, dn)
    ux, uy = de / horiz, dn / horiz
    th = np.radians(inc)
    half = np.radians(plan.beamwidth) / 2
    shift = alt * (np.tan(th + half) + np.tan(th - half)) / 2 - alt * np.tan(th)
    sm, tau, omega = _footprint_mean(scene, day, x_c + shift * ux, y_c + shift * uy, ux, uy,
                                     major, minor, plan.footprint_points)
    s = scene.spec
    tb_h, tb_v = brightness_hv(sm, tau, scene.t_s[day], scene.t_c[day], s.clay_frac, omega,
                               s.h, 0.0, inc, 1.4)
    rng = _rng_for(seed, len(lines), 99)
    noise = (rng.normal(0.0, plan.noise_std, (2, tb_h.size)) if plan.noise_std > 0
             else np.zeros((2, tb_h.size)))
    obs_h = tb_h + plan.calibration_bias[0] + noise[0]
    obs_v = tb_v + plan.calibration_bias[1] + noise[1]

    e, nn = scene.to_utm(x_c, y_c)
    samples = FootprintSamples(e, nn, inc, obs_h, obs_v, tt, major, minor)
    records = None
    if raw:
        pe, pn = scene.to_utm(px, py)
        lat, lon = utm_to_wgs84(pe, pn, scene.zone)
        records = _raw_records(rng, obs_h, obs_v, tt, lat, lon, alt, roll, pitch, yaw, cal,
                               instrument_offset)
    return FlightResult(samples, scene.zone, day, records, (tb_h, tb_v))


def _raw_records(rng, tb_h, tb_v, tt, lat, lon, alt, roll, pitch, yaw, cal, instrument_offset):
    n = tb_h.size
    t_acs = rng.normal(300.0, 0.5, n)
    t_rs = rng.normal(303.0, 0.5, n)
    t_ant = rng.normal(300.0, 1.0, n)
    t_cab = rng.normal(301.0, 1.0, n)
    gain = rng.uniform(180.0, 220.0, n)        # K per V
    u_rs_nominal = 1.5
    offset = t_rs - gain * u_rs_nominal
    u_acs, u_rs, u_h, u_v = synthesize_voltages(tb_h, tb_v, gain, offset, t_acs, t_rs, t_ant,
                                                t_cab, cal, *instrument_offset)
    return [RadiometerRecord(float(tt[i]), float(u_acs[i]), float(u_rs[i]), float(u_h[i]),
                             float(u_v[i]), float(t_acs[i]), float(t_rs[i]), float(t_ant[i]),
                             float(t_cab[i]), float(lat[i]), float(lon[i]), alt, float(roll[i]),
                             float(pitch[i]), float(yaw[i])) for i in range(n)]


def simulate_sky_records(day: date, n=200, instrument_offset=(0.0, 0.0), t_sky=5.0, seed=0,
                         cal: AcsCharacterization = AcsCharacterization(), noise_std=0.5,
                         n_outliers=0):
    """Sky-pointing records whose sky calibration yields ``instrument_offset``."""
    rng = _rng_for(seed, 7)
    t0 = datetime(day.year, day.month, day.day, 17, tzinfo=timezone.utc).timestamp()
    # uncorrected antenna temperatures are the sky minus the offsets
    sky_h = t_sky - instrument_offset[0] + rng.normal(0, noise_std, n)
    sky_v = t_sky - instrument_offset[1] + rng.normal(0, noise_std, n)
    if n_outliers:
        sky_h[:n_outliers] += 80.0
        sky_v[:n_outliers] += 80.0
    tt = t0 + np.arange(n) / 14.0
    zeros = np.zeros(n)
    return _raw_records(rng, sky_h, sky_v, tt, zeros + 40.0, zeros - 88.0, 1.5, zeros, zeros,
                        zeros, cal, (0.0, 0.0))


def footprint_step_profile(scene: Scene, plan: FlightPlan, day, x, y_values):
    """Footprint-averaged soil moisture along a south-north line at ``x`` (no jitter)."""
    y = np.asarray(y_values, dtype=float)
    x = np.full(y.shape, float(x))
    alt = plan.altitude
    de, dn, inc = beam_offset(alt, 0.0, 0.0, 0.0, plan.boresight, plan.look_azimuth)
    inc = np.full(y.shape, float(inc))
    major, minor = footprint_dims(alt, inc, plan.beamwidth)
    horiz = np.hypot(de, dn)
    ux = np.full(y.shape, de / horiz)
    uy = np.full(y.shape, dn / horiz)
    th = np.radians(inc)
    half = np.radians(plan.beamwidth) / 2
    shift = alt * (np.tan(th + half) + np.tan(th - half)) / 2 - alt * np.tan(th)
    sm, _, _ = _footprint_mean(scene, day, x + shift * ux, y + shift * uy, ux, uy, major, minor,
                               plan.footprint_points)
    return sm


# -- JSON --------------------------------------------------------------------------

def save_json(obj, path):
    Path(path).write_text(json.dumps(obj.to_dict(), indent=2, default=str))
    return Path(path)


def load_scene_spec(path) -> SceneSpec:
    return SceneSpec.from_dict(json.loads(Path(path).read_text()))


def load_flight_plan(path) -> FlightPlan:
    return FlightPlan.from_dict(json.loads(Path(path).read_text()))
