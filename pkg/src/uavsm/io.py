"""File formats and run configuration.

CSV schemas
-----------
raw radiometer records
    ``timestamp,u_acs,u_rs,u_h,u_v,t_acs,t_rs,t_ant,t_cab,lat,lon,alt,roll,pitch,yaw``
    with ISO-8601 timestamps.
footprint samples
    ``timestamp,easting,northing,zone,incidence,tb_h,tb_v,footprint_major,footprint_minor``
retrievals (long table)
    ``date,easting,northing,resolution,algorithm,sm,tau,residual,at_bound``
probes
    ``date,site_id,lat,lon,sm_probe,t_soil_5cm``
gravimetric samples
    ``site_id,sm_grav``
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from .calibration import AcsCharacterization, DailyOffsets, RadiometerRecord
from .errors import ConfigError
from .geometry import FootprintSamples
from .gridding import GridSpec, PixelGrid, grid_points, read_ascii_grid, resample_block_mean

RAW_COLUMNS = ("timestamp", "u_acs", "u_rs", "u_h", "u_v", "t_acs", "t_rs", "t_ant", "t_cab",
               "lat", "lon", "alt", "roll", "pitch", "yaw")
SAMPLE_COLUMNS = ("timestamp", "easting", "northing", "zone", "incidence", "tb_h", "tb_v",
                  "footprint_major", "footprint_minor")
RETRIEVAL_COLUMNS = ("date", "easting", "northing", "resolution", "algorithm", "sm", "tau",
                     "residual", "at_bound")
PROBE_COLUMNS = ("date", "site_id", "lat", "lon", "sm_probe", "t_soil_5cm")
GRAVIMETRIC_COLUMNS = ("site_id", "sm_grav")
ENV_PREFIX = "UAVSM_"


# -- timestamps --------------------------------------------------------------------

def parse_timestamp(text: str) -> float:
    """ISO-8601 to POSIX seconds; naive times are taken as UTC."""
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(t: float) -> str:
    return datetime.fromtimestamp(float(t), tz=timezone.utc).isoformat(timespec="microseconds")


def _check_header(header, expected, path):
    missing = [c for c in expected if c not in (header or [])]
    if missing:
        raise ConfigError(str(path), f"missing CSV column(s): {', '.join(missing)}")


# -- raw records -------------------------------------------------------------------

def read_radiometer_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        _check_header(rd.fieldnames, RAW_COLUMNS, path)
        out = []
        for row in rd:
            vals = {k: float(row[k]) for k in RAW_COLUMNS[1:]}
            out.append(RadiometerRecord(parse_timestamp(row["timestamp"]), **vals))
    return out


def write_radiometer_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_COLUMNS)
        for r in records:
            w.writerow([format_timestamp(r.timestamp)]
                       + [repr(float(getattr(r, k))) for k in RAW_COLUMNS[1:]])
    return Path(path)


# -- footprint samples -------------------------------------------------------------

def write_samples_csv(samples: FootprintSamples, path, zone):
    cols = [samples.timestamp, samples.easting, samples.northing, samples.incidence,
            samples.tb_h, samples.tb_v, samples.footprint_major, samples.footprint_minor]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for t, e, n, inc, h, v, a, b in zip(*cols):
            w.writerow([format_timestamp(t), f"{e:.4f}", f"{n:.4f}", zone, f"{inc:.5f}",
                        f"{h:.6f}", f"{v:.6f}", f"{a:.4f}", f"{b:.4f}"])
    return Path(path)


def read_samples_csv(path):
    """Return ``(FootprintSamples, zone)``."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        _check_header(rd.fieldnames, SAMPLE_COLUMNS, path)
        rows = list(rd)
    zones = {int(r["zone"]) for r in rows}
    if len(zones) > 1:
        raise ConfigError(str(path), f"samples span several UTM zones {sorted(zones)}")
    ts = np.array([parse_timestamp(r["timestamp"]) for r in rows])
    num = {k: np.array([float(r[k]) for r in rows]) for k in SAMPLE_COLUMNS[1:] if k != "zone"}
    samples = FootprintSamples(num["easting"], num["northing"], num["incidence"], num["tb_h"],
                               num["tb_v"], ts, num["footprint_major"], num["footprint_minor"])
    return samples, (zones.pop() if zones else None)


def sample_days(samples: FootprintSamples):
    """UTC date of every sample."""
    return np.array([datetime.fromtimestamp(t, tz=timezone.utc).date() for t in samples.timestamp])


# -- retrievals --------------------------------------------------------------------

def retrieval_rows(day, spec: GridSpec, resolution, algorithm, sm, tau, residual=None,
                   at_bound=None):
    e, n = spec.cell_centers()
    residual = np.full(spec.shape, np.nan) if residual is None else residual
    at_bound = np.zeros(spec.shape, dtype=bool) if at_bound is None else at_bound
    for idx in zip(*np.nonzero(np.isfinite(sm))):
        yield {"date": str(day), "easting": float(e[idx]), "northing": float(n[idx]),
               "resolution": float(resolution), "algorithm": algorithm, "sm": float(sm[idx]),
               "tau": float(tau[idx]), "residual": float(residual[idx]),
               "at_bound": int(bool(at_bound[idx]))}


def write_retrieval_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, RETRIEVAL_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k])
                        for k in RETRIEVAL_COLUMNS})
    return Path(path)


def read_retrieval_csv(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        _check_header(rd.fieldnames, RETRIEVAL_COLUMNS, path)
        rows = list(rd)
    for r in rows:
        for k in ("easting", "northing", "resolution", "sm", "tau", "residual"):
            r[k] = float(r[k])
        r["at_bound"] = bool(int(r["at_bound"]))
        r["date"] = date.fromisoformat(r["date"])
    return rows


def retrieval_grids(rows, quantity="sm"):
    """Rebuild ``{(algorithm, resolution): {date: PixelGrid}}`` from long-table rows.

    All dates of one (algorithm, resolution) share the grid covering every
    row of that group.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["resolution"]), []).append(r)
    out = {}
    for key, rs in groups.items():
        res = key[1]
        e = np.array([r["easting"] for r in rs])
        n = np.array([r["northing"] for r in rs])
        spec = GridSpec.covering(e.min() - res / 2, n.min() - res / 2, e.max() + res / 2,
                                 n.max() + res / 2, res)
        by_day = {}
        for d in sorted({r["date"] for r in rs}):
            sel = [r for r in rs if r["date"] == d]
            by_day[d] = grid_points([r["easting"] for r in sel], [r["northing"] for r in sel],
                                    [r[quantity] for r in sel], spec, "dib")
        out[key] = by_day
    return out


# -- probes ------------------------------------------------------------------------

def read_probe_csv(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        _check_header(rd.fieldnames, PROBE_COLUMNS, path)
        rows = list(rd)
    for r in rows:
        r["date"] = date.fromisoformat(r["date"])
        for k in ("lat", "lon", "sm_probe", "t_soil_5cm"):
            r[k] = float(r[k])
    return rows


def write_probe_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, PROBE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in PROBE_COLUMNS})
    return Path(path)


def read_gravimetric_csv(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        _check_header(rd.fieldnames, GRAVIMETRIC_COLUMNS, path)
        return {r["site_id"]: float(r["sm_grav"]) for r in rd}


def write_gravimetric_csv(values: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRAVIMETRIC_COLUMNS)
        for k, v in values.items():
            w.writerow([k, f"{v:.6f}"])
    return Path(path)


# -- rasters -----------------------------------------------------------------------

def ingest_raster(path, target: GridSpec | None = None) -> PixelGrid:
    """Read an ESRI ASCII grid (plus sidecar) and block-average it onto ``target``."""
    grid = read_ascii_grid(path)
    if target is None:
        return grid
    return resample_block_mean(grid, target)


def resample_majority(grid: PixelGrid, target: GridSpec) -> PixelGrid:
    """Most frequent integer class of the source cells inside each target cell."""
    e, n = grid.spec.cell_centers()
    v = grid.values.ravel()
    r, c, inside = target.cell_index(e.ravel(), n.ravel())
    ok = inside & np.isfinite(v)
    keys = (r * target.width + c)[ok]
    classes = v[ok].astype(int)
    out = np.full(target.width * target.height, np.nan)
    if keys.size:
        n_cls = classes.max() + 1
        counts = np.zeros((target.width * target.height, n_cls))
        np.add.at(counts, (keys, classes), 1)
        has = counts.sum(axis=1) > 0
        out[has] = np.argmax(counts[has], axis=1)
    return PixelGrid(target, out.reshape(target.shape), zone=grid.zone, meta=dict(grid.meta))


# -- run configuration ---------------------------------------------------------------

@dataclass
class PathsSection:
    raw: str | None = None
    sky: str | None = None
    samples: str | None = None
    grids: str | None = None
    ancillary: str | None = None
    probes: str | None = None
    gravimetric: str | None = None
    output_dir: str = "out"


@dataclass
class CalibrationSection:
    m: float = 0.355
    b: float = -90.0
    l_db: float = -0.1
    t_sky: float = 5.0
    daily_offsets: list = field(default_factory=list)

    def acs(self):
        return AcsCharacterization(self.m, self.b, self.l_db)

    def offsets(self):
        out = {}
        for i, o in enumerate(self.daily_offsets):
            try:
                d = date.fromisoformat(o["date"])
                out[d] = DailyOffsets(d, float(o["d_h"]), float(o["d_v"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"calibration.daily_offsets[{i}]", str(exc)) from exc
        return out


@dataclass
class GeometrySection:
    boresight: float = 40.0
    beamwidth: float = 37.0
    look_azimuth: float = 0.0
    incidence_range: list = field(default_factory=lambda: [30.0, 50.0])
    theta_ref: float = 40.0


@dataclass
class GridSection:
    resolutions: list = field(default_factory=lambda: [7.0, 14.0, 21.0])
    method: str = "ids"
    normalize: bool = True


@dataclass
class ModelSection:
    omega: float = 0.08
    h: float = 0.13
    q: float = 0.0
    theta: float = 40.0
    frequency: float = 1.4
    clay_frac: float = 0.085


@dataclass
class RetrievalSection:
    algorithm: str = "DCA"
    sm_bounds: list = field(default_factory=lambda: [0.02, 0.60])
    tau_bounds: list = field(default_factory=lambda: [0.0, 3.0])
    land_cover: dict = field(default_factory=lambda: {
        "shrub": {"b_lc": 0.15, "f_stem": 0.0},
        "bare_soil": {"b_lc": 0.0, "f_stem": 0.0},
        "forest": {"b_lc": 0.12, "f_stem": 1.5},
    })
    ndvi_max: float = 0.85
    ndvi_min: float = 0.10


@dataclass
class BayesSection:
    walkers: int = 32
    steps: int = 5000
    burn_frac: float = 0.2
    sigma2_sca: float = 1e-6
    max_pixels: int = 50


@dataclass
class CampaignSection:
    scene: dict = field(default_factory=dict)
    plan: dict = field(default_factory=lambda: {"noise_std": 1.0, "calibration_bias": [-2.0, 2.0]})
    altitudes: list = field(default_factory=lambda: [10.0, 20.0, 30.0])
    n_probes_per_strip: int = 5
    probe_noise: float = 0.01
    probe_slope: float = 0.9
    probe_intercept: float = -0.02


@dataclass
class RunConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    grid: GridSection = field(default_factory=GridSection)
    model: ModelSection = field(default_factory=ModelSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    bayes: BayesSection = field(default_factory=BayesSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {f.name: f.type for f in fields(RunConfig)}
_SECTION_CLASSES = {"paths": PathsSection, "calibration": CalibrationSection,
                    "geometry": GeometrySection, "grid": GridSection, "model": ModelSection,
                    "retrieval": RetrievalSection, "bayes": BayesSection,
                    "campaign": CampaignSection}
_INPUT_PATHS = ("raw", "sky", "samples", "grids", "ancillary", "probes", "gravimetric")


def _coerce(section, key, value, default):
    name = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(name, "expected true or false")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return type(default)(value) if isinstance(default, float) else value
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(name, "expected a list")
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(name, "expected an object")
    return value


def _env_overrides(data: dict, environ):
    """Apply ``UAVSM_<SECTION>__<KEY>=<json or text>`` overrides."""
    for var, raw in environ.items():
        if not var.startswith(ENV_PREFIX) or "__" not in var:
            continue
        section, _, key = var[len(ENV_PREFIX):].lower().partition("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        data.setdefault(section, {})[key] = value
    return data


def config_from_dict(data: dict, environ=None, check_paths=True, base_dir=None) -> RunConfig:
    """Validate a configuration mapping; unknown keys raise :class:`ConfigError`."""
    data = json.loads(json.dumps(data))  # deep copy
    data = _env_overrides(data, os.environ if environ is None else environ)
    kwargs = {}
    for section, values in data.items():
        if section not in _SECTION_CLASSES:
            raise ConfigError(section, "unknown configuration section")
        if not isinstance(values, dict):
            raise ConfigError(section, "expected an object")
        cls = _SECTION_CLASSES[section]
        defaults = cls()
        known = {f.name for f in fields(cls)}
        sec_kw = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"{section}.{key}", "unknown configuration key")
            sec_kw[key] = _coerce(section, key, value, getattr(defaults, key))
        kwargs[section] = cls(**sec_kw)
    cfg = RunConfig(**kwargs)
    _validate(cfg, check_paths, Path(base_dir) if base_dir else None)
    return cfg


def _validate(cfg: RunConfig, check_paths, base_dir):
    if check_paths:
        for key in _INPUT_PATHS:
            p = getattr(cfg.paths, key)
            if p is None:
                continue
            path = Path(p) if base_dir is None or Path(p).is_absolute() else base_dir / p
            if not path.exists():
                raise ConfigError(f"paths.{key}", f"file not found: {path}")
            setattr(cfg.paths, key, str(path))
    if cfg.grid.method not in ("dib", "nn", "ids"):
        raise ConfigError("grid.method", "must be one of dib, nn, ids")
    if any(r <= 0 for r in cfg.grid.resolutions):
        raise ConfigError("grid.resolutions", "resolutions must be positive")
    lo, hi = cfg.geometry.incidence_range
    if not lo < hi:
        raise ConfigError("geometry.incidence_range", "must be an increasing pair")
    for name in ("sm_bounds", "tau_bounds"):
        b = getattr(cfg.retrieval, name)
        if len(b) != 2 or not b[0] < b[1]:
            raise ConfigError(f"retrieval.{name}", "must be an increasing pair")
    alg = cfg.retrieval.algorithm.upper().replace("-", "")
    if alg not in ("SCAV", "SCAH", "DCA", "MTDCA"):
        raise ConfigError("retrieval.algorithm", "must be one of SCAV, SCAH, DCA, MTDCA")
    for lc, entry in cfg.retrieval.land_cover.items():
        if lc not in ("shrub", "bare_soil", "forest"):
            raise ConfigError(f"retrieval.land_cover.{lc}", "unknown land cover")
        for k in ("b_lc", "f_stem"):
            if k not in entry:
                raise ConfigError(f"retrieval.land_cover.{lc}.{k}", "required field missing")
        extra = set(entry) - {"b_lc", "f_stem"}
        if extra:
            raise ConfigError(f"retrieval.land_cover.{lc}.{sorted(extra)[0]}",
                              "unknown configuration key")
    if cfg.calibration.l_db > 0:
        raise ConfigError("calibration.l_db", "loss must be <= 0 dB")
    cfg.calibration.offsets()
    if cfg.bayes.walkers < 4 or cfg.bayes.steps < 2:
        raise ConfigError("bayes.walkers", "need at least 4 walkers and 2 steps")
    if not 0 <= cfg.bayes.burn_frac < 1:
        raise ConfigError("bayes.burn_frac", "must lie in [0, 1)")


def load_config(path, environ=None, check_paths=True) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be an object")
    return config_from_dict(data, environ, check_paths, base_dir=path.parent)


def example_config_path() -> Path:
    return Path(__file__).with_name("data") / "example_config.json"
