"""Static SVG figures and CSV tables for a processed campaign."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gridding import PixelGrid  # noqa: E402

# fixed metadata keeps the SVG output byte-stable between runs
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def _extent(grid: PixelGrid):
    s = grid.spec
    return (s.origin_easting, s.origin_easting + s.width * s.resolution,
            s.origin_northing, s.origin_northing + s.height * s.resolution)


def map_svg(grid: PixelGrid, path, title="", label="", vmin=None, vmax=None, cmap="viridis_r"):
    """North-up raster map with a colorbar."""
    plt.rcParams["svg.hashsalt"] = "uavsm"
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    data = np.ma.masked_invalid(grid.values)
    im = ax.imshow(data, extent=_extent(grid), origin="upper", cmap=cmap, vmin=vmin, vmax=vmax,
                   interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("easting (m)")
    ax.set_ylabel("northing (m)")
    ax.ticklabel_format(useOffset=False, style="plain")
    fig.colorbar(im, ax=ax, label=label)
    fig.tight_layout()
    return _save(fig, path)


def map_panel_svg(grids: dict, path, label="", vmin=None, vmax=None, cmap="viridis_r"):
    """Rows of maps, e.g. algorithms by resolution. ``grids`` maps title to grid."""
    plt.rcParams["svg.hashsalt"] = "uavsm"
    n = len(grids)
    cols = min(n, 3)
    rows = int(np.ceil(n / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(4.0 * cols, 3.4 * rows), squeeze=False)
    im = None
    for ax, (title, g) in zip(axes.ravel(), grids.items()):
        im = ax.imshow(np.ma.masked_invalid(g.values), extent=_extent(g), origin="upper",
                       cmap=cmap, vmin=vmin, vmax=vmax, interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    if im is not None:
        fig.colorbar(im, ax=axes.ravel().tolist(), label=label, shrink=0.8)
    return _save(fig, path)


def histogram_svg(series: dict, path, xlabel="T_B (K)", bins=40):
    """Overlaid normalized histograms, one per label."""
    plt.rcParams["svg.hashsalt"] = "uavsm"
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    finite = [np.asarray(v)[np.isfinite(v)] for v in series.values()]
    allv = np.concatenate(finite) if finite else np.array([0.0, 1.0])
    edges = np.linspace(allv.min(), allv.max(), bins + 1) if allv.size else bins
    for (name, _), v in zip(series.items(), finite):
        ax.hist(v, bins=edges, density=True, histtype="step", label=str(name))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def uncertainty_svg(days, estimate, std, reference, path, ylabel="soil moisture (m3/m3)"):
    """Time series of estimates with one-standard-deviation bars and references."""
    plt.rcParams["svg.hashsalt"] = "uavsm"
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    x = np.arange(len(days))
    ax.errorbar(x, estimate, yerr=std, fmt="o", capsize=3, label="MAP +/- std")
    if reference is not None:
        ax.plot(x, reference, "k^", label="reference")
    ax.set_xticks(x)
    ax.set_xticklabels([str(d) for d in days], rotation=45, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def scatter_svg(x, y, path, xlabel, ylabel):
    plt.rcParams["svg.hashsalt"] = "uavsm"
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.plot(x, y, ".", ms=3)
    lo = np.nanmin([np.nanmin(x), np.nanmin(y)])
    hi = np.nanmax([np.nanmax(x), np.nanmax(y)])
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save(fig, path)


def write_table(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if isinstance(r.get(k), float) else r.get(k))
                        for k in columns})
    return Path(path)
