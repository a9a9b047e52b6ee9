"""Deterministic synthetic park standing in for proprietary patrol datasets.

Everything is a pure function of the seed: terrain comes from three octaves
of bilinear lattice noise (persistence 0.5, lattice spacing 8/4/2 grid
cells), rivers are the cells whose D8 flow accumulation clears the 95th
percentile, dynamic layers are seasonal sinusoids plus noise, and observed
labels pass true attacks through an imperfect-detection filter
(probability 1 - exp(-detection_rate * effort)).
"""

from __future__ import annotations

import datetime
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geoformats import GeoTransform, Geometry, RasterDataset, VectorDataset, write_geotiff, write_shapefile
from .grid import build_grid
from .rasterops import (
    FeatureLayer,
    d8_flow_direction,
    distance_to_cells,
    distance_to_geometries,
    flow_accumulation,
    resample_to_grid,
    slope_aspect,
)
from .temporal import Quarter, TimeStampedLayer, aggregate_quarters

__all__ = ["SynthConfig", "generate_park", "default_pipeline_config"]

DEFAULT_RISK_WEIGHTS = {
    "dist_river": -1.6,
    "dist_road": -0.5,
    "elevation": -0.9,
    "slope": -0.6,
    "temperature": 0.8,
    "precipitation": 0.6,
}

OCTAVES = ((8.0, 1.0), (4.0, 0.5), (2.0, 0.25))

# substream labels so draws stay independent of evaluation order
_S_TERRAIN, _S_LANDCOVER, _S_ROAD, _S_VILLAGES = 1, 2, 3, 4
_S_DYN_SPATIAL, _S_DYN_NOISE = 5, 6
_S_ATTACK, _S_DETECT, _S_PATROL, _S_EFFORT = 7, 8, 9, 10

DYNAMIC_FEATURES = {
    # name: (base, spatial_amplitude, season_amplitude, phase, monthly_noise)
    "temperature": (20.0, 6.0, 6.0, 0.0, 0.4),
    "precipitation": (100.0, 80.0, 60.0, math.pi / 2, 4.0),
    "npp": (0.5, 0.4, 0.2, math.pi, 0.02),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    size: int = 40
    years: int = 4
    start_year: int = 2016
    resolution: float = 1000.0
    risk_weights: dict = field(default_factory=lambda: dict(DEFAULT_RISK_WEIGHTS))
    risk_intercept: float = -1.1
    detection_rate: float = 3.0
    effort_budget: float = 1.0

    def __post_init__(self):
        if self.size < 8:
            raise ValueError("park size must be at least 8 cells per side")
        if self.years < 4:
            raise ValueError("need at least 4 years (3 train + 1 test)")
        if self.detection_rate <= 0:
            raise ValueError("detection rate must be positive")

    def quarters(self):
        return [Quarter(self.start_year + y, q) for y in range(self.years) for q in (1, 2, 3, 4)]


def _rng(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def _lattice_noise(points_km, size_km, seed, stream, octaves=OCTAVES):
    """Multi-octave bilinear lattice noise in [0, 1), indexed in km."""
    points_km = np.asarray(points_km, dtype=float)
    stream = stream if isinstance(stream, tuple) else (stream,)
    total = np.zeros(len(points_km))
    amp_sum = 0.0
    for octave, (spacing, amp) in enumerate(octaves):
        nodes = int(np.ceil(size_km / spacing)) + 2
        lattice = _rng(seed, *stream, octave).uniform(size=(nodes, nodes))
        u = points_km[:, 0] / spacing
        v = points_km[:, 1] / spacing
        i = np.clip(np.floor(u).astype(int), 0, nodes - 2)
        j = np.clip(np.floor(v).astype(int), 0, nodes - 2)
        fu = np.clip(u - i, 0.0, 1.0)
        fv = np.clip(v - j, 0.0, 1.0)
        val = (
            lattice[i, j] * (1 - fu) * (1 - fv)
            + lattice[i + 1, j] * fu * (1 - fv)
            + lattice[i, j + 1] * (1 - fu) * fv
            + lattice[i + 1, j + 1] * fu * fv
        )
        total += amp * val
        amp_sum += amp
    return total / amp_sum


def _boundary_polygon(size_km):
    s = size_km * 1000.0
    cut = s / 5.0
    ring = [
        (cut, 0.0), (s - cut, 0.0), (s, cut), (s, s - cut),
        (s - cut, s), (cut, s), (0.0, s - cut), (0.0, cut), (cut, 0.0),
    ]
    return VectorDataset([Geometry("polygon", [ring])])


def _grid_raster(values, size_km, pixel_m, kind="continuous"):
    n = int(round(size_km * 1000.0 / pixel_m))
    return RasterDataset(n, n, GeoTransform(0.0, size_km * 1000.0, pixel_m, pixel_m),
                         values.reshape(n, n), nodata=float("nan"), kind=kind)


def _pixel_centers_km(size_km, pixel_m):
    n = int(round(size_km * 1000.0 / pixel_m))
    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    x = (cols.ravel() + 0.5) * pixel_m / 1000.0
    y = size_km - (rows.ravel() + 0.5) * pixel_m / 1000.0
    return np.column_stack([x, y])


def _road_polyline(cfg):
    s = cfg.size * 1000.0
    ys = _rng(cfg.seed, _S_ROAD).uniform(0.25 * s, 0.75 * s, size=4)
    points = [(0.0, ys[0]), (s / 3.0, ys[1]), (2 * s / 3.0, ys[2]), (s, ys[3])]
    return VectorDataset([Geometry("polyline", [points])])


def _village_points(cfg):
    s = cfg.size * 1000.0
    pts = _rng(cfg.seed, _S_VILLAGES).uniform(0.1 * s, 0.9 * s, size=(5, 2))
    return VectorDataset([Geometry("point", [[(float(x), float(y))]]) for x, y in pts])


def _dynamic_month_values(cfg, name, spatial, month_index):
    base, spatial_amp, season_amp, phase, noise_sd = DYNAMIC_FEATURES[name]
    feature_id = sorted(DYNAMIC_FEATURES).index(name)
    season = season_amp * math.sin(2 * math.pi * (month_index % 12) / 12.0 + phase)
    noise = _rng(cfg.seed, _S_DYN_NOISE, feature_id, month_index).normal(0.0, noise_sd, size=len(spatial))
    return base + spatial_amp * spatial + season + noise


def _zscore(values):
    std = values.std()
    if std == 0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def generate_park(cfg: SynthConfig, out_dir) -> dict:
    """Write the synthetic park dataset and return its manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    boundary = _boundary_polygon(cfg.size)
    (out / "boundary.shp").write_bytes(write_shapefile(boundary))
    grid = build_grid(boundary, cfg.resolution)

    # terrain at half the grid resolution so resampling is exercised
    dem_pixel = cfg.resolution / 2.0
    dem_centers = _pixel_centers_km(cfg.size, dem_pixel)
    dem_values = 400.0 + 600.0 * _lattice_noise(dem_centers, cfg.size, cfg.seed, _S_TERRAIN)
    dem = _grid_raster(dem_values, cfg.size, dem_pixel)
    (out / "dem.tif").write_bytes(write_geotiff(dem))

    landcover_noise = _lattice_noise(dem_centers, cfg.size, cfg.seed, _S_LANDCOVER)
    cuts = np.quantile(landcover_noise, [0.25, 0.5, 0.75])
    landcover = _grid_raster(
        np.searchsorted(cuts, landcover_noise).astype(float) + 1.0,
        cfg.size, dem_pixel, kind="categorical",
    )
    (out / "landcover.tif").write_bytes(write_geotiff(landcover))

    roads = _road_polyline(cfg)
    villages = _village_points(cfg)
    (out / "roads.shp").write_bytes(write_shapefile(roads))
    (out / "villages.shp").write_bytes(write_shapefile(villages))

    # truth features follow the same derivation the pipeline applies
    elevation = resample_to_grid(dem, grid, name="elevation")
    slope, _ = slope_aspect(elevation)
    accumulation = flow_accumulation(d8_flow_direction(elevation))
    acc_values = accumulation.values[grid.mask]
    river_threshold = float(np.percentile(acc_values, 95))
    dist_river = distance_to_cells(grid, accumulation, river_threshold, name="dist_river")
    dist_road = distance_to_geometries(grid, roads, name="dist_road")

    quarters = cfg.quarters()
    months = [(cfg.start_year + y, m) for y in range(cfg.years) for m in range(1, 13)]
    grid_centers_km = _pixel_centers_km(cfg.size, cfg.resolution)
    spatial_fields = {
        name: _lattice_noise(grid_centers_km, cfg.size, cfg.seed,
                             (_S_DYN_SPATIAL, sorted(DYNAMIC_FEATURES).index(name)))
        for name in DYNAMIC_FEATURES
    }
    dynamic_series = {name: [] for name in DYNAMIC_FEATURES}
    for i, (year, month) in enumerate(months):
        for name in sorted(DYNAMIC_FEATURES):
            vals = _dynamic_month_values(cfg, name, spatial_fields[name], i)
            raster = _grid_raster(vals, cfg.size, cfg.resolution)
            path = out / "dynamic" / name / f"{year}-{month:02d}.tif"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(write_geotiff(raster))
            layer = FeatureLayer(name, raster, "continuous", "remote-sensing")
            dynamic_series[name].append(TimeStampedLayer(year, month, layer))

    quarterly = {
        name: aggregate_quarters(series, grid) for name, series in dynamic_series.items()
    }

    # standardized truth features: statics over cells, dynamics over cells x quarters
    mask_idx = grid.mask
    statics = {
        "dist_river": dist_river,
        "dist_road": dist_road,
        "elevation": elevation,
        "slope": slope,
    }
    z_static = {
        name: _zscore(layer.values[mask_idx]) for name, layer in statics.items()
    }
    z_dynamic = {}
    for name in ("temperature", "precipitation"):
        stack = np.stack([quarterly[name][q].values[mask_idx] for q in quarters])
        std = stack.std()
        z_dynamic[name] = (stack - stack.mean()) / std if std else np.zeros_like(stack)

    n_cells = grid.n_cells
    n_quarters = len(quarters)
    logits = np.full((n_quarters, n_cells), cfg.risk_intercept)
    for name, weight in cfg.risk_weights.items():
        if name in z_static:
            logits += weight * z_static[name][None, :]
        elif name in z_dynamic:
            logits += weight * z_dynamic[name]
        else:
            raise ValueError(f"risk weight for unknown feature {name!r}")
    true_p = 1.0 / (1.0 + np.exp(-logits))

    attacks = _rng(cfg.seed, _S_ATTACK).uniform(size=true_p.shape) < true_p

    # patrol allocation by accessibility: near-road cells are searched more
    road_d = dist_road.values[mask_idx]
    access = 1.0 / (1.0 + road_d / 2000.0)
    patrol_prob = np.clip(1.5 * access, 0.05, 0.95)
    patrolled = _rng(cfg.seed, _S_PATROL).uniform(size=true_p.shape) < patrol_prob[None, :]
    effort_jitter = _rng(cfg.seed, _S_EFFORT).uniform(size=true_p.shape)
    efforts = np.where(
        patrolled, cfg.effort_budget * access[None, :] * (0.5 + effort_jitter), 0.0
    )

    detect_u = _rng(cfg.seed, _S_DETECT).uniform(size=true_p.shape)
    detect_p = 1.0 - np.exp(-cfg.detection_rate * efforts)
    observed = attacks & (detect_u < detect_p)

    centers = grid.cell_centers()
    effort_lines = ["x,y,date,effort"]
    activity_lines = ["x,y,date"]
    for qi, q in enumerate(quarters):
        effort_date = datetime.date(q.year, 3 * q.index - 2, 15)
        activity_date = datetime.date(q.year, 3 * q.index - 1, 10)
        for c in range(n_cells):
            x, y = float(centers[c, 0]), float(centers[c, 1])
            if efforts[qi, c] > 0:
                effort_lines.append(f"{x!r},{y!r},{effort_date.isoformat()},{float(efforts[qi, c])!r}")
            if observed[qi, c]:
                activity_lines.append(f"{x!r},{y!r},{activity_date.isoformat()}")
    (out / "efforts.csv").write_text("\n".join(effort_lines) + "\n")
    (out / "activities.csv").write_text("\n".join(activity_lines) + "\n")

    manifest = {
        "config": asdict(cfg),
        "grid": {
            "width": grid.width,
            "height": grid.height,
            "resolution": cfg.resolution,
            "n_cells": n_cells,
        },
        "quarters": [str(q) for q in quarters],
        "river_accumulation_threshold": river_threshold,
        "river_cells": [int(i) for i in np.nonzero(acc_values >= river_threshold)[0]],
        "true_probability": [[float(v) for v in row] for row in true_p],
        "true_attacks": [[int(v) for v in row] for row in attacks],
        "observed_positive_rate": float(observed[patrolled].mean()) if patrolled.any() else 0.0,
        "patrolled_fraction": float(patrolled.mean()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def default_pipeline_config(park_dir, out_dir, cfg: SynthConfig | None = None,
                            train_overrides: dict | None = None) -> dict:
    """Pipeline config wired to generate_park's on-disk layout."""
    cfg = cfg or SynthConfig()
    park = str(park_dir)
    train = {
        "num_bins": 5, "trees_per_bin": 32, "max_depth": 8, "min_leaf": 5,
        "bootstrap_fraction": 1.0, "seed": cfg.seed, "resample": True,
    }
    train.update(train_overrides or {})
    final_year = cfg.start_year + cfg.years - 1
    return {
        "version": 1,
        "park": "synthpark",
        "resolution": cfg.resolution,
        "boundary": f"{park}/boundary.shp",
        "static": [
            {
                "name": "elevation",
                "path": f"{park}/dem.tif",
                "source": "remote-sensing",
                "derive_terrain": True,
                "surface_water_percentile": 95,
            },
            {
                "name": "land_cover",
                "path": f"{park}/landcover.tif",
                "source": "remote-sensing",
                "kind": "categorical",
            },
            {"name": "roads", "path": f"{park}/roads.shp", "source": "park"},
            {"name": "villages", "path": f"{park}/villages.shp", "source": "park"},
        ],
        "dynamic": [
            {"name": name, "dir": f"{park}/dynamic/{name}"} for name in sorted(DYNAMIC_FEATURES)
        ],
        "efforts": f"{park}/efforts.csv",
        "activities": f"{park}/activities.csv",
        "test_years": [final_year],
        "conditions": ["baseline", "remote-sensing", "all"],
        "train": train,
        "out_dir": str(out_dir),
        "synth": asdict(cfg),
    }
