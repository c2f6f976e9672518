"""Aggregation of footprint samples onto regular UTM grids.

Three estimators are provided: drop-in-bucket (cell mean), nearest neighbour
(sample closest to the cell center) and inverse-distance-squared. Samples are
assigned to cells by beam-center containment in every case.

Rasters are stored north-up: row 0 is the northernmost row, as in ESRI ASCII
grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

NODATA = -9999.0
#: below this beam-center distance (m) IDS returns the closest sample directly
D_FLOOR = 0.01


@dataclass(frozen=True)
class GridSpec:
    origin_easting: float
    origin_northing: float
    resolution: float
    width: int
    height: int

    @classmethod
    def covering(cls, e_min, n_min, e_max, n_max, resolution):
        """Smallest grid with origin snapped to a multiple of ``resolution``."""
        e0 = np.floor(e_min / resolution) * resolution
        n0 = np.floor(n_min / resolution) * resolution
        width = max(1, int(np.ceil((e_max - e0) / resolution - 1e-9)))
        height = max(1, int(np.ceil((n_max - n0) / resolution - 1e-9)))
        return cls(float(e0), float(n0), float(resolution), width, height)

    @property
    def shape(self):
        return (self.height, self.width)

    def cell_index(self, easting, northing):
        """Return ``(row, col, inside)`` arrays for the given points."""
        c = np.floor((np.asarray(easting, dtype=float) - self.origin_easting) / self.resolution).astype(int)
        k = np.floor((np.asarray(northing, dtype=float) - self.origin_northing) / self.resolution).astype(int)
        inside = (c >= 0) & (c < self.width) & (k >= 0) & (k < self.height)
        return self.height - 1 - k, c, inside

    def cell_centers(self):
        """Center coordinates ``(E, N)`` as 2-D arrays of ``shape``."""
        cols = self.origin_easting + (np.arange(self.width) + 0.5) * self.resolution
        rows = self.origin_northing + (self.height - np.arange(self.height) - 0.5) * self.resolution
        return np.meshgrid(cols, rows)

    def center_of(self, row, col):
        e = self.origin_easting + (np.asarray(col) + 0.5) * self.resolution
        n = self.origin_northing + (self.height - np.asarray(row) - 0.5) * self.resolution
        return e, n


@dataclass
class PixelGrid:
    """Georeferenced raster; missing cells are NaN with count 0."""

    spec: GridSpec
    values: np.ndarray
    counts: np.ndarray | None = None
    zone: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.spec.shape}")
        if self.counts is None:
            self.counts = np.isfinite(self.values).astype(int)
        self.counts = np.asarray(self.counts, dtype=int)

    @property
    def missing(self):
        return ~np.isfinite(self.values)

    def with_values(self, values, **meta):
        return replace(self, values=np.asarray(values, dtype=float),
                       counts=np.where(np.isfinite(values), np.maximum(self.counts, 1), 0),
                       meta={**self.meta, **meta})

    def value_at(self, easting, northing):
        r, c, inside = self.spec.cell_index(easting, northing)
        out = np.full(np.shape(r), np.nan)
        out[inside] = self.values[r[inside], c[inside]]
        return out


def _cell_keys(spec, x, y):
    r, c, inside = spec.cell_index(x, y)
    return r * spec.width + c, inside


def _center_distance(spec, x, y, keys):
    r, c = np.divmod(keys, spec.width)
    ce, cn = spec.center_of(r, c)
    return np.hypot(x - ce, y - cn)


def _nearest_per_cell(keys, dist, tiebreak, ncell):
    """Index (into the inputs) of the closest sample per cell, or -1."""
    order = np.lexsort((tiebreak, dist, keys))
    k_sorted = keys[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = k_sorted[1:] != k_sorted[:-1]
    best = np.full(ncell, -1, dtype=int)
    best[k_sorted[first]] = order[first]
    return best


def grid_points(x, y, v, spec: GridSpec, method="ids", timestamp=None, d_floor=D_FLOOR,
                zone=None, **meta) -> PixelGrid:
    """Grid scattered values ``v`` at ``(x, y)`` with ``method`` in {dib, nn, ids}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    ok = np.isfinite(v)
    keys, inside = _cell_keys(spec, x, y)
    sel = inside & ok
    x, y, v, keys = x[sel], y[sel], v[sel], keys[sel]
    ts = np.zeros(len(v)) if timestamp is None else np.asarray(timestamp, dtype=float)[sel]
    ncell = spec.width * spec.height
    counts = np.bincount(keys, minlength=ncell)
    values = np.full(ncell, np.nan)
    has = counts > 0
    method = method.lower()
    if method == "dib":
        values[has] = np.bincount(keys, weights=v, minlength=ncell)[has] / counts[has]
    elif method in ("nn", "ids"):
        d = _center_distance(spec, x, y, keys)
        best = _nearest_per_cell(keys, d, ts, ncell)
        if method == "nn":
            values[has] = v[best[has]]
        else:
            w = 1.0 / np.maximum(d, d_floor) ** 2
            values[has] = (np.bincount(keys, weights=w * v, minlength=ncell)[has]
                           / np.bincount(keys, weights=w, minlength=ncell)[has])
            close = has.copy()
            close[has] = d[best[has]] < d_floor
            values[close] = v[best[close]]
    else:
        raise ValueError(f"unknown gridding method {method!r}")
    meta.setdefault("method", method)
    return PixelGrid(spec, values.reshape(spec.shape), counts.reshape(spec.shape), zone, meta)


def grid_dib(samples, spec, band="tb_v", **kw):
    return grid_points(samples.easting, samples.northing, samples.band(band), spec, "dib",
                       samples.timestamp, band=band, **kw)


def grid_nn(samples, spec, band="tb_v", **kw):
    return grid_points(samples.easting, samples.northing, samples.band(band), spec, "nn",
                       samples.timestamp, band=band, **kw)


def grid_ids(samples, spec, band="tb_v", **kw):
    return grid_points(samples.easting, samples.northing, samples.band(band), spec, "ids",
                       samples.timestamp, band=band, **kw)


GRIDDERS = {"dib": grid_dib, "nn": grid_nn, "ids": grid_ids}


def resample_block_mean(grid: PixelGrid, target: GridSpec, weighted=False) -> PixelGrid:
    """Block-average ``grid`` onto ``target`` (DIB on source cell centers).

    Missing source cells are ignored; target cells with no valid source stay
    missing. With ``weighted=True`` each source cell counts with its sample
    count, so a DIB grid resampled onto a nested coarser grid reproduces the
    DIB of the original samples on that grid.
    """
    e, n = grid.spec.cell_centers()
    v = grid.values.ravel()
    if not weighted:
        out = grid_points(e.ravel(), n.ravel(), v, target, "dib", zone=grid.zone)
    else:
        w = grid.counts.ravel().astype(float)
        ok = np.isfinite(v) & (w > 0)
        keys, inside = _cell_keys(target, e.ravel(), n.ravel())
        sel = ok & inside
        ncell = target.width * target.height
        wsum = np.bincount(keys[sel], weights=w[sel], minlength=ncell)
        vsum = np.bincount(keys[sel], weights=w[sel] * v[sel], minlength=ncell)
        vals = np.full(ncell, np.nan)
        vals[wsum > 0] = vsum[wsum > 0] / wsum[wsum > 0]
        out = PixelGrid(target, vals.reshape(target.shape), wsum.reshape(target.shape).astype(int),
                        grid.zone)
    out.meta = {**grid.meta, "method": "dib", "resampled_from": grid.spec.resolution}
    return out


# -- ESRI ASCII grid + JSON sidecar -------------------------------------------

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_ascii_grid(grid: PixelGrid, path, fmt="%.6f"):
    path = Path(path)
    s = grid.spec
    header = (f"ncols {s.width}\nnrows {s.height}\nxllcorner {s.origin_easting:.6f}\n"
              f"yllcorner {s.origin_northing:.6f}\ncellsize {s.resolution:.6f}\n"
              f"NODATA_value {NODATA:g}\n")
    vals = np.where(np.isfinite(grid.values), grid.values, NODATA)
    with open(path, "w") as fh:
        fh.write(header)
        np.savetxt(fh, vals, fmt=fmt)
    side = {"zone": grid.zone, "resolution": s.resolution, **grid.meta}
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True, default=str))
    return path


def read_ascii_grid(path) -> PixelGrid:
    path = Path(path)
    header = {}
    with open(path) as fh:
        for _ in range(6):
            key, val = fh.readline().split()
            header[key.lower()] = val
        data = np.loadtxt(fh, ndmin=2)
    nodata = float(header.get("nodata_value", NODATA))
    spec = GridSpec(float(header["xllcorner"]), float(header["yllcorner"]),
                    float(header["cellsize"]), int(header["ncols"]), int(header["nrows"]))
    values = np.where(data == nodata, np.nan, data)
    meta = {}
    zone = None
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        zone = meta.pop("zone", None)
        meta.pop("resolution", None)
    return PixelGrid(spec, values, None, zone, meta)
