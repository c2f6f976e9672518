"""Observation geometry: UTM projection, beam centers, 3 dB footprints,
incidence screening and angular normalization."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import GrazingGeometry, PolarRegion, RayAboveHorizon

# WGS84
A_WGS84 = 6378137.0
F_WGS84 = 1 / 298.257223563
K0 = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0

_n = F_WGS84 / (2 - F_WGS84)
_E = np.sqrt(F_WGS84 * (2 - F_WGS84))
_A = A_WGS84 / (1 + _n) * (1 + _n**2 / 4 + _n**4 / 64 + _n**6 / 256)
# Krueger series to sixth order in n (Karney 2011)
_ALPHA = np.array([
    _n / 2 - 2 * _n**2 / 3 + 5 * _n**3 / 16 + 41 * _n**4 / 180 - 127 * _n**5 / 288 + 7891 * _n**6 / 37800,
    13 * _n**2 / 48 - 3 * _n**3 / 5 + 557 * _n**4 / 1440 + 281 * _n**5 / 630 - 1983433 * _n**6 / 1935360,
    61 * _n**3 / 240 - 103 * _n**4 / 140 + 15061 * _n**5 / 26880 + 167603 * _n**6 / 181440,
    49561 * _n**4 / 161280 - 179 * _n**5 / 168 + 6601661 * _n**6 / 7257600,
    34729 * _n**5 / 80640 - 3418889 * _n**6 / 1995840,
    212378941 * _n**6 / 319334400,
])
_BETA = np.array([
    _n / 2 - 2 * _n**2 / 3 + 37 * _n**3 / 96 - _n**4 / 360 - 81 * _n**5 / 512 + 96199 * _n**6 / 604800,
    _n**2 / 48 + _n**3 / 15 - 437 * _n**4 / 1440 + 46 * _n**5 / 105 - 1118711 * _n**6 / 3870720,
    17 * _n**3 / 480 - 37 * _n**4 / 840 - 209 * _n**5 / 4480 + 5569 * _n**6 / 90720,
    4397 * _n**4 / 161280 - 11 * _n**5 / 504 - 830251 * _n**6 / 7257600,
    4583 * _n**5 / 161280 - 108847 * _n**6 / 3991680,
    20648693 * _n**6 / 638668800,
])
_J2 = 2 * np.arange(1, 7)


def utm_zone(lon) -> int:
    return int(np.floor((float(lon) + 180.0) / 6.0)) % 60 + 1


def central_meridian(zone: int) -> float:
    return -183.0 + 6.0 * zone


def wgs84_to_utm(lat, lon, zone: int | None = None):
    """Project geodetic coordinates to UTM.

    Returns ``(easting, northing, zone)``. The zone is chosen from the first
    longitude unless given; southern latitudes get the 10 000 km false
    northing.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if np.any(np.abs(lat) > 84.0):
        raise PolarRegion("UTM is defined for |lat| <= 84 deg")
    if zone is None:
        zone = utm_zone(np.ravel(lon)[0])
    phi = np.radians(lat)
    lam = np.radians(lon - central_meridian(zone))
    lam = (lam + np.pi) % (2 * np.pi) - np.pi
    sphi = np.sin(phi)
    t = np.sinh(np.arctanh(sphi) - _E * np.arctanh(_E * sphi))
    xi_p = np.arctan2(t, np.cos(lam))
    eta_p = np.arctanh(np.sin(lam) / np.sqrt(1 + t * t))
    xi = xi_p + np.sum(_ALPHA[:, None] * np.sin(_J2[:, None] * np.ravel(xi_p)) * np.cosh(_J2[:, None] * np.ravel(eta_p)), axis=0).reshape(np.shape(xi_p))
    eta = eta_p + np.sum(_ALPHA[:, None] * np.cos(_J2[:, None] * np.ravel(xi_p)) * np.sinh(_J2[:, None] * np.ravel(eta_p)), axis=0).reshape(np.shape(eta_p))
    easting = FALSE_EASTING + K0 * _A * eta
    northing = K0 * _A * xi + np.where(lat < 0, FALSE_NORTHING_SOUTH, 0.0)
    if easting.ndim == 0:
        return float(easting), float(northing), zone
    return easting, northing, zone


def utm_to_wgs84(easting, northing, zone: int, northern: bool = True):
    """Inverse projection; returns ``(lat, lon)`` in degrees."""
    easting = np.asarray(easting, dtype=float)
    northing = np.asarray(northing, dtype=float)
    if not northern:
        northing = northing - FALSE_NORTHING_SOUTH
    xi = northing / (K0 * _A)
    eta = (easting - FALSE_EASTING) / (K0 * _A)
    shape = np.shape(xi)
    xr, er = np.ravel(xi), np.ravel(eta)
    xi_p = xr - np.sum(_BETA[:, None] * np.sin(_J2[:, None] * xr) * np.cosh(_J2[:, None] * er), axis=0)
    eta_p = er - np.sum(_BETA[:, None] * np.cos(_J2[:, None] * xr) * np.sinh(_J2[:, None] * er), axis=0)
    tau_p = np.sin(xi_p) / np.sqrt(np.sinh(eta_p) ** 2 + np.cos(xi_p) ** 2)
    lam = np.arctan2(np.sinh(eta_p), np.cos(xi_p))
    # Newton iteration for the geodetic latitude tangent
    e2 = _E * _E
    tau = tau_p.copy()
    for _ in range(8):
        sig = np.sinh(_E * np.arctanh(_E * tau / np.sqrt(1 + tau * tau)))
        tau_i = tau * np.sqrt(1 + sig * sig) - sig * np.sqrt(1 + tau * tau)
        dtau = ((tau_p - tau_i) / np.sqrt(1 + tau_i * tau_i)
                * (1 + (1 - e2) * tau * tau) / ((1 - e2) * np.sqrt(1 + tau * tau)))
        tau = tau + dtau
        if np.all(np.abs(dtau) < 1e-14):
            break
    lat = np.degrees(np.arctan(tau)).reshape(shape)
    lon = (np.degrees(lam) + central_meridian(zone)).reshape(shape)
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


@dataclass(frozen=True)
class PlatformPose:
    lat: float
    lon: float
    alt_agl: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not (abs(self.roll) < 90 and abs(self.pitch) < 90):
            raise ValueError("|roll| and |pitch| must be below 90 deg")
        if not self.alt_agl > 0:
            raise ValueError("alt_agl must be positive")


def boresight_ned(roll, pitch, yaw, boresight=40.0, look_azimuth=0.0):
    """Unit boresight vector in north-east-down for the given attitude.

    The antenna looks ``boresight`` degrees off the body's down axis, towards
    ``look_azimuth`` measured clockwise from the nose (0 = forward, 90 = right
    wing). Attitude follows the aerospace yaw-pitch-roll sequence: positive
    roll puts the right wing down, positive pitch raises the nose.
    """
    b = np.radians(boresight)
    az = np.radians(look_azimuth)
    r, p, y = (np.radians(np.asarray(v, dtype=float)) for v in (roll, pitch, yaw))
    vx = np.sin(b) * np.cos(az)
    vy = np.sin(b) * np.sin(az)
    vz = np.cos(b)
    # roll about body x
    vy, vz = np.cos(r) * vy - np.sin(r) * vz, np.sin(r) * vy + np.cos(r) * vz
    # pitch about body y
    vx, vz = np.cos(p) * vx + np.sin(p) * vz, -np.sin(p) * vx + np.cos(p) * vz
    # yaw about down
    vn, ve = np.cos(y) * vx - np.sin(y) * vy, np.sin(y) * vx + np.cos(y) * vy
    return vn, ve, vz


def beam_offset(alt_agl, roll, pitch, yaw, boresight=40.0, look_azimuth=0.0):
    """Ground offset ``(d_east, d_north)`` of the beam center and its incidence (deg).

    Flat ground at ``alt_agl`` below the antenna.
    """
    vn, ve, vd = boresight_ned(roll, pitch, yaw, boresight, look_azimuth)
    if np.any(vd <= 1e-9):
        raise RayAboveHorizon("boresight does not intersect the ground")
    alt = np.asarray(alt_agl, dtype=float)
    incidence = np.degrees(np.arccos(np.clip(vd, -1.0, 1.0)))
    return alt * ve / vd, alt * vn / vd, incidence


def beam_center(pose: PlatformPose, boresight=40.0, look_azimuth=0.0, zone=None):
    """UTM beam-center coordinates and incidence angle for one pose."""
    e0, n0, zone = wgs84_to_utm(pose.lat, pose.lon, zone)
    de, dn, inc = beam_offset(pose.alt_agl, pose.roll, pose.pitch, pose.yaw, boresight, look_azimuth)
    return e0 + float(de), n0 + float(dn), float(inc)


def geolocate(lat, lon, alt_agl, roll, pitch, yaw, tb_h, tb_v, timestamp, boresight=40.0,
              look_azimuth=0.0, beamwidth=37.0, zone=None):
    """Vectorized beam-center geolocation of calibrated antenna temperatures.

    Returns ``(samples, zone)`` where ``samples`` is a :class:`FootprintSamples`.
    """
    e0, n0, zone = wgs84_to_utm(np.atleast_1d(lat), np.atleast_1d(lon), zone)
    de, dn, inc = beam_offset(alt_agl, roll, pitch, yaw, boresight, look_azimuth)
    major, minor = footprint_dims(alt_agl, inc, beamwidth)
    samples = FootprintSamples(e0 + de, n0 + dn, inc, tb_h, tb_v, timestamp, major, minor)
    return samples, zone


def footprint_dims(alt_agl, incidence, beamwidth=37.0):
    """Along-look (major) and cross-look (minor) extent of the 3 dB footprint in m."""
    alt = np.asarray(alt_agl, dtype=float)
    th = np.radians(np.asarray(incidence, dtype=float))
    half = np.radians(beamwidth) / 2
    if np.any(th + half >= np.pi / 2):
        raise GrazingGeometry("far edge of the 3 dB cone misses the ground")
    major = alt * (np.tan(th + half) - np.tan(th - half))
    minor = 2 * alt / np.cos(th) * np.tan(half)
    return major, minor


class FootprintSample(NamedTuple):
    easting: float
    northing: float
    incidence: float
    tb_h: float
    tb_v: float
    timestamp: float
    footprint_major: float
    footprint_minor: float


@dataclass
class FootprintSamples:
    """Column store of footprint samples; rows are :class:`FootprintSample`."""

    easting: np.ndarray
    northing: np.ndarray
    incidence: np.ndarray
    tb_h: np.ndarray
    tb_v: np.ndarray
    timestamp: np.ndarray
    footprint_major: np.ndarray
    footprint_minor: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.atleast_1d(np.asarray(getattr(self, f.name), dtype=float)))
        n = {len(getattr(self, f.name)) for f in fields(self)}
        if len(n) > 1:
            raise ValueError("sample columns differ in length")

    @classmethod
    def empty(cls):
        return cls(*([np.empty(0)] * len(fields(cls))))

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        if not rows:
            return cls.empty()
        return cls(*map(np.asarray, zip(*rows)))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*[np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)])

    def __len__(self):
        return len(self.easting)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return FootprintSample(*(float(getattr(self, f.name)[idx]) for f in fields(self)))
        return FootprintSamples(*(getattr(self, f.name)[idx] for f in fields(self)))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def band(self, name):
        return getattr(self, name)

    def with_band(self, name, values):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw[name] = np.asarray(values, dtype=float)
        return FootprintSamples(**kw)


def filter_incidence(samples: FootprintSamples, lo=30.0, hi=50.0) -> FootprintSamples:
    keep = (samples.incidence >= lo) & (samples.incidence <= hi)
    return samples[keep]


def normalize_to_reference_angle(incidence, values, theta_ref=40.0, min_samples=3, min_spread=2.0):
    """Shift each value to ``theta_ref`` along a linear T_B(theta) fit.

    Falls back to the input values when there are too few samples or too
    little angular spread for a stable slope.
    """
    inc = np.asarray(incidence, dtype=float)
    v = np.asarray(values, dtype=float)
    if inc.size < min_samples or np.ptp(inc) < min_spread:
        return v.copy()
    slope = np.polyfit(inc, v, 1)[0]
    return v - slope * (inc - theta_ref)


def normalize_by_cell(samples: FootprintSamples, spec, theta_ref=40.0, bands=("tb_h", "tb_v"),
                      min_samples=3, min_spread=2.0) -> FootprintSamples:
    """Apply :func:`normalize_to_reference_angle` within every cell of ``spec``."""
    rows, cols, inside = spec.cell_index(samples.easting, samples.northing)
    key = np.where(inside, rows * spec.width + cols, -1)
    out = samples
    for band in bands:
        vals = samples.band(band).copy()
        for k in np.unique(key[key >= 0]):
            sel = np.flatnonzero(key == k)
            vals[sel] = normalize_to_reference_angle(samples.incidence[sel], vals[sel], theta_ref,
                                                     min_samples, min_spread)
        out = out.with_band(band, vals)
    return out
