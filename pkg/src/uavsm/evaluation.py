"""Validation metrics, probe rescaling and retrieval-to-probe pairing.

All statistics use population moments (divide by n), so that
``rmse**2 == bias**2 + ubrmse**2`` holds exactly up to rounding.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


log = logging.getLogger(__name__)

DEFAULT_MAX_DISTANCE_CELLS = 1.5


@dataclass
class TimeSeriesPair:
    dates: list
    sm_ret: np.ndarray
    sm_ref: np.ndarray

    def __post_init__(self):
        self.sm_ret = np.asarray(self.sm_ret, dtype=float)
        self.sm_ref = np.asarray(self.sm_ref, dtype=float)
        if not len(self.dates) == len(self.sm_ret) == len(self.sm_ref):
            raise ValueError("dates, sm_ret and sm_ref must have equal lengths")
        if np.any(~np.isfinite(self.sm_ret)) or np.any(~np.isfinite(self.sm_ref)):
            raise ValueError("paired series must not contain missing values")

    def __len__(self):
        return len(self.dates)


@dataclass
class MetricReport:
    bias: float
    rmse: float
    ubrmse: float
    r: float
    n: int
    zero_variance: bool = False

    def as_dict(self):
        return {"bias": self.bias, "rmse": self.rmse, "ubrmse": self.ubrmse,
                "r": self.r, "n": self.n}


def metrics(pair: TimeSeriesPair | tuple) -> MetricReport:
    """Bias, RMSE, ubRMSE and Pearson R of retrievals against references.

    When either series is constant the correlation is undefined: ``r`` is
    NaN and ``zero_variance`` is set, the other metrics are still reported.
    """
    if not isinstance(pair, TimeSeriesPair):
        ret, ref = pair
        pair = TimeSeriesPair(list(range(len(ret))), ret, ref)
    if len(pair) < 2:
        raise ValueError("metrics need at least two paired values")
    ret, ref = pair.sm_ret, pair.sm_ref
    diff = ret - ref
    bias = float(np.mean(diff))
    ubrmse = float(np.sqrt(np.mean((diff - bias) ** 2)))
    rmse = float(np.sqrt(np.mean(diff * diff)))
    dr, df = ret - ret.mean(), ref - ref.mean()
    var_r, var_f = np.mean(dr * dr), np.mean(df * df)
    scale = max(np.max(np.abs(ret)), np.max(np.abs(ref)), 1.0)
    if var_r <= (1e-12 * scale) ** 2 or var_f <= (1e-12 * scale) ** 2:
        return MetricReport(bias, rmse, ubrmse, float("nan"), len(pair), zero_variance=True)
    r = float(np.clip(np.mean(dr * df) / np.sqrt(var_r * var_f), -1.0, 1.0))
    return MetricReport(bias, rmse, ubrmse, r, len(pair))


def ubrmse_from_bias_rmse(bias, rmse):
    """ubRMSE implied by a (bias, RMSE) pair."""
    return float(np.sqrt(max(rmse * rmse - bias * bias, 0.0)))


def ubrmse_interval_from_rounded(bias, rmse, half_step=0.0005):
    """Range of ubRMSE consistent with ``bias`` and ``rmse`` printed at finite precision.

    Each input may differ from its printed value by up to ``half_step``.
    """
    b_abs = abs(bias)
    b_lo, b_hi = max(b_abs - half_step, 0.0), b_abs + half_step
    r_lo, r_hi = rmse - half_step, rmse + half_step
    lo = np.sqrt(max(r_lo ** 2 - b_hi ** 2, 0.0))
    hi = np.sqrt(max(r_hi ** 2 - b_lo ** 2, 0.0))
    return float(lo), float(hi)


# -- probe rescaling ------------------------------------------------------------

@dataclass(frozen=True)
class LinearCorrection:
    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def rescale_probes(probe_sm: Sequence[float], gravimetric_sm: Sequence[float],
                   min_corr=0.5) -> LinearCorrection:
    """OLS fit ``gravimetric = slope * probe + intercept``."""
    x = np.asarray(probe_sm, dtype=float)
    y = np.asarray(gravimetric_sm, dtype=float)
    if x.shape != y.shape:
        raise ValueError("probe and gravimetric samples must pair up")
    if x.size < 3:
        raise ValueError("probe rescaling needs at least 3 paired samples")
    if np.ptp(x) == 0:
        raise ValueError("probe samples have zero variance")
    if np.ptp(y) > 0:
        corr = np.corrcoef(x, y)[0, 1]
        if corr < min_corr:
            log.warning("probe/gravimetric correlation %.2f below %.2f", corr, min_corr)
    slope, intercept = np.polyfit(x, y, 1)
    return LinearCorrection(float(slope), float(intercept))


# -- pairing ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProbePoint:
    site_id: str
    easting: float
    northing: float


@dataclass
class PairingReport:
    cells: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)


def assign_cell(spec, easting, northing, max_distance_cells=DEFAULT_MAX_DISTANCE_CELLS):
    """Containing cell, or the nearest cell within ``max_distance_cells``.

    Distance is measured from the point to the cell rectangle, so any cell
    containing the point has distance 0. Returns ``(row, col, distance)`` or
    ``None`` when no cell is close enough.
    """
    res = spec.resolution
    u = (easting - spec.origin_easting) / res
    v = (northing - spec.origin_northing) / res
    # nearest column/row index after clamping to the grid extent
    c = int(np.clip(np.floor(u), 0, spec.width - 1))
    k = int(np.clip(np.floor(v), 0, spec.height - 1))
    du = max(c - u, 0.0, u - (c + 1))
    dv = max(k - v, 0.0, v - (k + 1))
    dist = float(np.hypot(du, dv))
    if dist > max_distance_cells:
        return None
    return spec.height - 1 - k, c, dist


def pair_retrievals_to_probes(grids: Mapping, probes: Sequence[ProbePoint], probe_series: Mapping,
                              max_distance_cells=DEFAULT_MAX_DISTANCE_CELLS):
    """Build one :class:`TimeSeriesPair` per probe.

    ``grids`` maps date to :class:`PixelGrid` (all on the same grid);
    ``probe_series`` maps site id to ``{date: sm}``. The cell for each probe
    is fixed once, so pairing does not change from date to date. Dates where
    either side is missing are dropped.
    """
    dates = sorted(grids)
    if not dates:
        return {}, PairingReport()
    spec = grids[dates[0]].spec
    for d in dates:
        if grids[d].spec != spec:
            raise ValueError("all grids must share one GridSpec")
    report = PairingReport()
    pairs = {}
    for p in probes:
        cell = assign_cell(spec, p.easting, p.northing, max_distance_cells)
        if cell is None:
            report.excluded[p.site_id] = "beyond maximum pairing distance"
            continue
        row, col, _ = cell
        report.cells[p.site_id] = (row, col)
        ref = probe_series.get(p.site_id, {})
        keep = [d for d in dates if d in ref and np.isfinite(grids[d].values[row, col])
                and np.isfinite(ref[d])]
        if not keep:
            report.excluded[p.site_id] = "no overlapping dates"
            continue
        pairs[p.site_id] = TimeSeriesPair(keep, [grids[d].values[row, col] for d in keep],
                                          [ref[d] for d in keep])
    return pairs, report


def pooled_metrics(pairs: Mapping) -> MetricReport:
    """Metrics over all sites pooled into one sample."""
    ret = np.concatenate([p.sm_ret for p in pairs.values()])
    ref = np.concatenate([p.sm_ref for p in pairs.values()])
    return metrics((ret, ref))


def per_site_mean_r(pairs: Mapping) -> float:
    """Mean of per-site correlations, skipping sites where R is undefined."""
    rs = [metrics(p).r for p in pairs.values() if len(p) >= 2]
    rs = [r for r in rs if np.isfinite(r)]
    return float(np.mean(rs)) if rs else float("nan")


METRIC_COLUMNS = ("algorithm", "resolution", "bias", "rmse", "ubrmse", "r", "r_site_mean", "n")


def write_metric_table(rows: Sequence[dict], path):
    """CSV with one row per (algorithm, resolution), mirroring the usual metric table."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    return path


def read_metric_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("bias", "rmse", "ubrmse", "r", "r_site_mean"):
            r[k] = float(r[k]) if r.get(k) not in (None, "") else float("nan")
        r["resolution"] = float(r["resolution"])
        r["n"] = int(r["n"])
    return rows
