"""Radiometer calibration: detector voltages to antenna brightness temperature.

The chain runs in four steps. The active cold source (ACS) and the resistive
source (RS) give a gain and offset for each sampling cycle. Those turn the H
and V voltages into switch-input brightness temperatures. The antenna/cable
transmission loss is then removed, and a daily sky-derived offset is added.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateReferences, EmptySkySet, LossOutOfRange

log = logging.getLogger(__name__)

#: plausible operating range of the internal temperature sensors (K)
TEMPERATURE_RANGE = (200.0, 350.0)
GAIN_EPS = 1e-9


@dataclass(frozen=True)
class RadiometerRecord:
    """One raw sampling cycle (ACS, RS, H, V) with housekeeping temperatures."""

    timestamp: float
    u_acs: float
    u_rs: float
    u_h: float
    u_v: float
    t_acs: float
    t_rs: float
    t_ant: float
    t_cab: float
    lat: float = float("nan")
    lon: float = float("nan")
    alt: float = float("nan")
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    @property
    def day(self) -> date:
        return utc_day(self.timestamp)

    def temperatures_valid(self) -> bool:
        lo, hi = TEMPERATURE_RANGE
        return all(lo <= t <= hi for t in (self.t_acs, self.t_rs, self.t_ant, self.t_cab))


@dataclass(frozen=True)
class AcsCharacterization:
    """Linear ACS model ``T_B_ACS = m * T_ACS + b`` and antenna-cable loss."""

    m: float = 0.355
    b: float = -90.0
    l_db: float = -0.1

    def __post_init__(self):
        if self.l_db > 0:
            raise LossOutOfRange(f"l_db={self.l_db} dB is a gain, expected <= 0")

    @property
    def alpha(self) -> float:
        return absorption(self.l_db)


@dataclass(frozen=True)
class DailyOffsets:
    date: date
    d_h: float
    d_v: float

    def __post_init__(self):
        if not (np.isfinite(self.d_h) and np.isfinite(self.d_v)):
            raise ValueError("daily offsets must be finite")


def utc_day(timestamp: float) -> date:
    return datetime.fromtimestamp(float(timestamp), tz=timezone.utc).date()


def absorption(l_db):
    """Absorption coefficient of the antenna-cable path from its loss in dB."""
    l_db = np.asarray(l_db, dtype=float)
    if np.any(l_db > 0):
        raise LossOutOfRange("antenna-cable loss must be <= 0 dB")
    alpha = 1.0 - 10.0 ** (l_db / 10.0)
    return float(alpha) if alpha.ndim == 0 else alpha


def acs_brightness(t_acs, cal: AcsCharacterization):
    return cal.m * np.asarray(t_acs, dtype=float) + cal.b


def gain_and_offset(u_acs, u_rs, t_acs, t_rs, cal: AcsCharacterization, eps: float = GAIN_EPS):
    """Gain (K/V) and offset (K) from the two internal references.

    The RS brightness temperature is taken equal to its physical temperature.
    """
    du = np.asarray(u_rs, dtype=float) - np.asarray(u_acs, dtype=float)
    if np.any(np.abs(du) < eps):
        raise DegenerateReferences("u_rs and u_acs coincide; broken switch cycle?")
    t_rs = np.asarray(t_rs, dtype=float)
    gain = (t_rs - acs_brightness(t_acs, cal)) / du
    offset = -gain * np.asarray(u_rs, dtype=float) + t_rs
    return gain, offset


def record_gain_and_offset(rec: RadiometerRecord, cal: AcsCharacterization):
    g, off = gain_and_offset(rec.u_acs, rec.u_rs, rec.t_acs, rec.t_rs, cal)
    return float(g), float(off)


def switch_input_tb(u_p, gain, offset):
    return gain * np.asarray(u_p, dtype=float) + offset


def transmission_path_temperature(t_ant, t_cab):
    return 0.5 * (np.asarray(t_ant, dtype=float) + np.asarray(t_cab, dtype=float))


def antenna_tb(tb_in, cal: AcsCharacterization, t_ant, t_cab, d_p=0.0):
    """Remove antenna-cable self-emission and add the daily offset ``d_p``."""
    alpha = cal.alpha
    t_tp = transmission_path_temperature(t_ant, t_cab)
    return (np.asarray(tb_in, dtype=float) - alpha * t_tp) / (1.0 - alpha) + d_p


def synthesize_voltages(tb_ant_h, tb_ant_v, gain, offset, t_acs, t_rs, t_ant, t_cab,
                        cal: AcsCharacterization, d_h=0.0, d_v=0.0):
    """Inverse of the calibration chain; used by the campaign simulator.

    Returns ``(u_acs, u_rs, u_h, u_v)`` that the forward chain maps back to
    ``tb_ant_h``/``tb_ant_v``.
    """
    gain = np.asarray(gain, dtype=float)
    alpha = cal.alpha
    t_tp = transmission_path_temperature(t_ant, t_cab)
    u_rs = (np.asarray(t_rs, dtype=float) - offset) / gain
    u_acs = (acs_brightness(t_acs, cal) - offset) / gain
    tb_in_h = (np.asarray(tb_ant_h, dtype=float) - d_h) * (1.0 - alpha) + alpha * t_tp
    tb_in_v = (np.asarray(tb_ant_v, dtype=float) - d_v) * (1.0 - alpha) + alpha * t_tp
    return u_acs, u_rs, (tb_in_h - offset) / gain, (tb_in_v - offset) / gain


@dataclass
class CalibratedRecords:
    """Antenna brightness temperatures for the records that passed screening."""

    records: list
    tb_h: np.ndarray
    tb_v: np.ndarray
    n_dropped: int = 0
    missing_offset_days: set = field(default_factory=set)


def _as_arrays(records: Sequence[RadiometerRecord]):
    names = ("u_acs", "u_rs", "u_h", "u_v", "t_acs", "t_rs", "t_ant", "t_cab")
    return {n: np.array([getattr(r, n) for r in records], dtype=float) for n in names}


def screen_records(records: Sequence[RadiometerRecord]):
    """Split records into (kept, n_dropped) by the temperature plausibility band."""
    kept = [r for r in records if r.temperatures_valid()]
    n_dropped = len(records) - len(kept)
    if n_dropped:
        log.warning("dropped %d record(s) with out-of-range temperatures", n_dropped)
    return kept, n_dropped


def calibrate_records(records: Sequence[RadiometerRecord], cal: AcsCharacterization,
                      offsets: Mapping[date, DailyOffsets] | DailyOffsets | None = None
                      ) -> CalibratedRecords:
    """Run the full chain on ``records``.

    ``offsets`` may be a single :class:`DailyOffsets` or a mapping by date. An
    offset is applied only to records whose UTC date matches it; records of
    other dates get zero offset and their dates are reported.
    """
    kept, n_dropped = screen_records(records)
    if isinstance(offsets, DailyOffsets):
        offsets = {offsets.date: offsets}
    offsets = offsets or {}
    if not kept:
        empty = np.empty(0)
        return CalibratedRecords([], empty, empty.copy(), n_dropped)

    a = _as_arrays(kept)
    gain, off = gain_and_offset(a["u_acs"], a["u_rs"], a["t_acs"], a["t_rs"], cal)
    d_h = np.zeros(len(kept))
    d_v = np.zeros(len(kept))
    missing = set()
    for i, rec in enumerate(kept):
        day = rec.day
        o = offsets.get(day)
        if o is None:
            missing.add(day)
        else:
            d_h[i], d_v[i] = o.d_h, o.d_v
    if offsets and missing:
        log.warning("no daily offsets for %s; using 0 K", sorted(missing))
    tb_h = antenna_tb(switch_input_tb(a["u_h"], gain, off), cal, a["t_ant"], a["t_cab"], d_h)
    tb_v = antenna_tb(switch_input_tb(a["u_v"], gain, off), cal, a["t_ant"], a["t_cab"], d_v)
    return CalibratedRecords(kept, tb_h, tb_v, n_dropped, missing)


def _mad_keep(x, n_mad=3.0):
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0:
        return np.ones(x.shape, dtype=bool)
    return np.abs(x - med) <= n_mad * mad


def sky_calibrate(sky_records: Sequence[RadiometerRecord], cal: AcsCharacterization,
                  t_sky: float = 5.0, day: date | None = None, n_mad: float = 3.0) -> DailyOffsets:
    """Daily offsets that bring the mean sky brightness to ``t_sky``.

    Samples further than ``n_mad`` median absolute deviations from the median
    are discarded (per polarization) before averaging.
    """
    kept, _ = screen_records(sky_records)
    if not kept:
        raise EmptySkySet("no valid sky-pointing records")
    raw = calibrate_records(kept, cal, None)
    means = []
    for tb in (raw.tb_h, raw.tb_v):
        means.append(float(np.mean(tb[_mad_keep(tb, n_mad)])))
    if day is None:
        day = kept[0].day
    return DailyOffsets(day, t_sky - means[0], t_sky - means[1])
