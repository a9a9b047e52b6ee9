"""Command-line pipeline: poachgrid <subcommand> --config <path>.

Subcommands chain through on-disk artifacts under the configured output
directory so every intermediate (feature rasters, models, risk maps, metrics)
can be inspected:

    synth      generate the synthetic park the config's synth section describes
    featurize  boundary + rasters/shapefiles -> out/features/
    train      out/features/ + CSVs -> out/model-<year>-<condition>.json
    predict    models -> out/risk-<year>-<condition>-e<effort>.tif/.png
    evaluate   models + test rows -> out/metrics.csv
    run        all of the above in order

Exit codes: 0 ok, 2 config error, 3 input/stage-dependency error, 4 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    CONDITIONS,
    FeatureCatalog,
    FeatureEntry,
    RESERVED_REMOTE_NAMES,
    assemble,
    read_activity_csv,
    read_effort_csv,
)
from .evaluation import metrics_to_csv, score_condition_models, train_condition_models
from .geoformats import FormatError, RasterDataset, read_geotiff, read_shapefile, write_geotiff
from .grid import ParkGrid, build_grid
from .model import (
    TrainConfig,
    ensemble_from_json,
    ensemble_to_json,
    predict_risk_map,
)
from .rasterops import (
    FeatureLayer,
    d8_flow_direction,
    distance_to_cells,
    distance_to_geometries,
    flow_accumulation,
    resample_to_grid,
    slope_aspect,
)
from .render import render_risk_png
from .synth import SynthConfig, generate_park
from .temporal import Quarter, TimeStampedLayer, aggregate_quarters

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4

CONFIG_VERSION = 1

DERIVED_TERRAIN = ("slope", "aspect", "drainage_direction", "flow_accumulation")


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass(frozen=True)
class StaticSpec:
    name: str
    path: Path
    source: str
    kind: str = "continuous"
    derive_terrain: bool = False
    surface_water_percentile: float | None = None


@dataclass(frozen=True)
class DynamicSpec:
    name: str
    dir: Path


@dataclass
class PipelineConfig:
    park: str
    resolution: float
    boundary: Path
    static: list
    dynamic: list
    efforts: Path
    activities: Path
    test_years: list
    conditions: list
    train: TrainConfig
    out_dir: Path
    synth: SynthConfig | None = None

    def quarters(self):
        years = range(min(self.test_years) - 3, max(self.test_years) + 1)
        return [Quarter(y, q) for y in years for q in (1, 2, 3, 4)]


def load_config(path, seed_override=None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")

    base = path.parent

    def resolve(p):
        return (base / p).resolve() if not Path(p).is_absolute() else Path(p)

    try:
        train_doc = dict(doc.get("train", {}))
        if seed_override is not None:
            train_doc["seed"] = seed_override
        train = TrainConfig(**train_doc)
        synth = None
        if "synth" in doc:
            synth_doc = dict(doc["synth"])
            if seed_override is not None:
                synth_doc["seed"] = seed_override
            synth = SynthConfig(**synth_doc)
        static = [
            StaticSpec(
                name=s["name"],
                path=resolve(s["path"]),
                source=s["source"],
                kind=s.get("kind", "continuous"),
                derive_terrain=bool(s.get("derive_terrain", False)),
                surface_water_percentile=s.get("surface_water_percentile"),
            )
            for s in doc.get("static", [])
        ]
        dynamic = [DynamicSpec(d["name"], resolve(d["dir"])) for d in doc.get("dynamic", [])]
        cfg = PipelineConfig(
            park=doc["park"],
            resolution=float(doc.get("resolution", 1000.0)),
            boundary=resolve(doc["boundary"]),
            static=static,
            dynamic=dynamic,
            efforts=resolve(doc["efforts"]),
            activities=resolve(doc["activities"]),
            test_years=[int(y) for y in doc["test_years"]],
            conditions=list(doc.get("conditions", list(CONDITIONS))),
            train=train,
            out_dir=resolve(doc["out_dir"]),
            synth=synth,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc!r}")

    if not cfg.test_years:
        raise ConfigError("test_years must not be empty")
    for c in cfg.conditions:
        if c not in CONDITIONS:
            raise ConfigError(f"unknown condition {c!r}; choose from {CONDITIONS}")
    for spec in cfg.static:
        if spec.derive_terrain and spec.source != "remote-sensing":
            raise ConfigError(f"derive_terrain on {spec.name!r} requires a remote-sensing source")
    return cfg


def _require_inputs(cfg: PipelineConfig):
    missing = [p for p in [cfg.boundary, cfg.efforts, cfg.activities]
               + [s.path for s in cfg.static] + [d.dir for d in cfg.dynamic]
               if not Path(p).exists()]
    if missing:
        raise ConfigError(f"config references missing paths: {', '.join(str(m) for m in missing)}")


# --- featurize ---------------------------------------------------------------


def _read_vector(path):
    try:
        return read_shapefile(Path(path).read_bytes())
    except FormatError as exc:
        raise InputError(f"{path}: {exc}")


def _read_raster(path):
    try:
        return read_geotiff(Path(path).read_bytes())
    except FormatError as exc:
        raise InputError(f"{path}: {exc}")


def _features_dir(cfg):
    return Path(cfg.out_dir) / "features"


def featurize_stage(cfg: PipelineConfig):
    """Derive every grid-aligned feature layer and persist it under out/features/."""
    _require_inputs(cfg)
    boundary = _read_vector(cfg.boundary)
    try:
        grid = build_grid(boundary, cfg.resolution)
    except ValueError as exc:
        raise InputError(f"boundary {cfg.boundary}: {exc}")

    entries = []
    static_layers = {}

    def add_static(layer, temporality="static"):
        static_layers[layer.name] = layer
        entries.append(FeatureEntry(layer.name, layer.source, temporality, layer.kind))

    for spec in cfg.static:
        if spec.path.suffix == ".shp":
            vector = _read_vector(spec.path)
            add_static(distance_to_geometries(grid, vector, name=spec.name, source=spec.source))
            continue
        raster = _read_raster(spec.path)
        try:
            layer = resample_to_grid(raster, grid, kind=spec.kind, name=spec.name,
                                     source=spec.source)
        except ValueError as exc:
            raise InputError(f"{spec.path}: {exc}")
        add_static(layer)
        if spec.derive_terrain:
            slope, aspect = slope_aspect(layer)
            dirs = d8_flow_direction(layer)
            acc = flow_accumulation(dirs)
            for derived in (slope, aspect, dirs, acc):
                add_static(derived)
            if spec.surface_water_percentile is not None:
                threshold = float(
                    np.percentile(acc.values[grid.mask], spec.surface_water_percentile)
                )
                add_static(distance_to_cells(grid, acc, threshold, name="surface_water"))

    quarters = cfg.quarters()
    quarterly = {q: {} for q in quarters}
    for spec in cfg.dynamic:
        series = []
        for tif in sorted(Path(spec.dir).glob("*.tif")):
            try:
                year, month = (int(v) for v in tif.stem.split("-"))
            except ValueError:
                raise InputError(f"{tif}: dynamic files must be named YYYY-MM.tif")
            raster = _read_raster(tif)
            layer = resample_to_grid(raster, grid, name=spec.name, source="remote-sensing")
            series.append(TimeStampedLayer(year, month, layer))
        if not series:
            raise InputError(f"{spec.dir}: no YYYY-MM.tif files found")
        by_quarter = aggregate_quarters(series, grid)
        entries.append(FeatureEntry(spec.name, "remote-sensing", "dynamic", "continuous"))
        for q in quarters:
            if q in by_quarter:
                quarterly[q][spec.name] = by_quarter[q]

    try:
        catalog = FeatureCatalog(tuple(entries))
    except ValueError as exc:
        raise ConfigError(str(exc))

    out = _features_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    mask_raster = RasterDataset(grid.width, grid.height, grid.transform,
                                grid.mask.astype(float), kind="categorical")
    (out / "mask.tif").write_bytes(write_geotiff(mask_raster))

    files = {}
    for name, layer in static_layers.items():
        fname = f"{name}.tif"
        (out / fname).write_bytes(write_geotiff(layer.raster))
        files[name] = fname
    for q in quarters:
        for name, layer in quarterly[q].items():
            fname = f"{name}-{q}.tif"
            (out / fname).write_bytes(write_geotiff(layer.raster))
            files[f"{name}-{q}"] = fname

    doc = {
        "version": CONFIG_VERSION,
        "park": cfg.park,
        "resolution": cfg.resolution,
        "quarters": [str(q) for q in quarters],
        "entries": [dataclasses.asdict(e) for e in catalog.entries],
        "files": files,
    }
    (out / "catalog.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return catalog, grid, static_layers, quarterly


def _parse_quarter(text):
    year, index = text.split("Q")
    return Quarter(int(year), int(index))


def load_features(cfg: PipelineConfig):
    """Reload the featurize stage's artifacts."""
    out = _features_dir(cfg)
    catalog_path = out / "catalog.json"
    if not catalog_path.exists():
        raise InputError(f"{catalog_path} missing; run `poachgrid featurize` first")
    doc = json.loads(catalog_path.read_text())
    catalog = FeatureCatalog(tuple(FeatureEntry(**e) for e in doc["entries"]))
    quarters = [_parse_quarter(q) for q in doc["quarters"]]

    mask_raster = _read_raster(out / "mask.tif")
    grid = ParkGrid(mask_raster.transform, mask_raster.width, mask_raster.height,
                    mask_raster.transform.pixel_w, mask_raster.values == 1.0)

    static_layers, quarterly = {}, {q: {} for q in quarters}
    for entry in catalog.entries:
        if entry.temporality == "static":
            raster = _read_raster(out / doc["files"][entry.name])
            static_layers[entry.name] = FeatureLayer(entry.name, raster, entry.kind, entry.source)
        else:
            for q in quarters:
                key = f"{entry.name}-{q}"
                if key in doc["files"]:
                    raster = _read_raster(out / doc["files"][key])
                    quarterly[q][entry.name] = FeatureLayer(entry.name, raster,
                                                            entry.kind, entry.source)
    return catalog, grid, static_layers, quarterly, quarters


def _load_table(cfg, catalog, grid, static_layers, quarterly, quarters):
    if not Path(cfg.efforts).exists() or not Path(cfg.activities).exists():
        raise ConfigError(f"config references missing paths: {cfg.efforts}, {cfg.activities}")
    try:
        efforts = read_effort_csv(Path(cfg.efforts).read_text())
        activities = read_activity_csv(Path(cfg.activities).read_text())
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad effort/activity CSV: {exc}")
    return assemble(grid, catalog, static_layers, quarterly, efforts, activities, quarters)


def _model_path(cfg, year, condition):
    return Path(cfg.out_dir) / f"model-{year}-{condition}.json"


def _threads():
    raw = os.environ.get("POACHGRID_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"POACHGRID_THREADS must be an integer, got {raw!r}")


def train_stage(cfg: PipelineConfig):
    catalog, grid, static_layers, quarterly, quarters = load_features(cfg)
    table = _load_table(cfg, catalog, grid, static_layers, quarterly, quarters)
    threads = _threads()
    try:
        if threads == 1:
            models = train_condition_models(table, cfg.test_years, cfg.conditions, cfg.train)
        else:
            from concurrent.futures import ThreadPoolExecutor

            from .dataset import select_feature_set, split_by_year
            from .model import train_iware

            def one(args):
                year, condition = args
                sub = select_feature_set(table, condition)
                train, _ = split_by_year(sub, year)
                return (year, condition), train_iware(train, cfg.train)

            pairs = [(y, c) for y in cfg.test_years for c in cfg.conditions]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                models = dict(pool.map(one, pairs))
    except ValueError as exc:
        raise InputError(str(exc))

    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    for (year, condition) in sorted(models):
        _model_path(cfg, year, condition).write_text(ensemble_to_json(models[(year, condition)]) + "\n")
    return models


def _load_models(cfg):
    models = {}
    for year in cfg.test_years:
        for condition in cfg.conditions:
            path = _model_path(cfg, year, condition)
            if not path.exists():
                raise InputError(f"{path} missing; run `poachgrid train` first")
            models[(year, condition)] = ensemble_from_json(path.read_text())
    return models


def _format_effort(value):
    return format(float(value), "g")


def predict_stage(cfg: PipelineConfig, effort_levels=None):
    catalog, grid, static_layers, quarterly, quarters = load_features(cfg)
    models = _load_models(cfg)
    written = []
    for (year, condition), ens in sorted(models.items()):
        has_dynamic = any(e.temporality == "dynamic" for e in ens.catalog.entries)
        quarter_layers = {}
        if has_dynamic:
            candidates = [q for q in quarters if q.year == year and quarterly[q]]
            if not candidates:
                raise InputError(f"no dynamic layers available for test year {year}")
            quarter_layers = quarterly[max(candidates)]
        levels = effort_levels or [max(ens.thresholds)]
        for effort in levels:
            try:
                risk = predict_risk_map(ens, grid, static_layers, quarter_layers, effort)
            except ValueError as exc:
                raise InputError(f"[year={year}, condition={condition}] {exc}")
            stem = f"risk-{year}-{condition}-e{_format_effort(effort)}"
            (Path(cfg.out_dir) / f"{stem}.tif").write_bytes(write_geotiff(risk.raster))
            (Path(cfg.out_dir) / f"{stem}.png").write_bytes(render_risk_png(risk.values))
            written.append(stem)
    return written


def evaluate_stage(cfg: PipelineConfig):
    catalog, grid, static_layers, quarterly, quarters = load_features(cfg)
    table = _load_table(cfg, catalog, grid, static_layers, quarterly, quarters)
    models = _load_models(cfg)
    try:
        rows = score_condition_models(cfg.park, models, table, cfg.test_years, cfg.conditions)
    except ValueError as exc:
        raise InputError(str(exc))
    (Path(cfg.out_dir) / "metrics.csv").write_text(metrics_to_csv(rows))
    return rows


def synth_stage(cfg: PipelineConfig):
    if cfg.synth is None:
        raise ConfigError("config has no synth section")
    park_dir = Path(cfg.boundary).parent
    return generate_park(cfg.synth, park_dir)


def run_stage(cfg: PipelineConfig, effort_levels=None):
    if cfg.synth is not None:
        synth_stage(cfg)
    featurize_stage(cfg)
    train_stage(cfg)
    predict_stage(cfg, effort_levels)
    return evaluate_stage(cfg)


def run_pipeline(config_path, effort_levels=None, seed=None) -> int:
    """Run the full pipeline; returns the CLI exit status."""
    return _dispatch("run", config_path, effort_levels or [], seed)


STAGES = {
    "synth": lambda cfg, efforts: synth_stage(cfg),
    "featurize": lambda cfg, efforts: featurize_stage(cfg),
    "train": lambda cfg, efforts: train_stage(cfg),
    "predict": lambda cfg, efforts: predict_stage(cfg, efforts),
    "evaluate": lambda cfg, efforts: evaluate_stage(cfg),
    "run": lambda cfg, efforts: run_stage(cfg, efforts),
}


def _report(stage, kind, message):
    print(json.dumps({"error": {"stage": stage, "kind": kind, "message": message}}),
          file=sys.stderr)


def _dispatch(stage, config_path, efforts, seed) -> int:
    try:
        cfg = load_config(config_path, seed_override=seed)
    except ConfigError as exc:
        _report(stage, "config", str(exc))
        return EXIT_CONFIG
    try:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        STAGES[stage](cfg, efforts)
        return EXIT_OK
    except ConfigError as exc:
        _report(stage, "config", str(exc))
        return EXIT_CONFIG
    except InputError as exc:
        _report(stage, "input", str(exc))
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        _report(stage, "internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poachgrid",
        description="poaching-risk pipeline: synthesize, featurize, train, predict, evaluate",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override train/synth seed")
        if name in ("predict", "run"):
            p.add_argument("--effort", type=float, action="append", default=[],
                           help="effort threshold for risk maps (repeatable)")
    args = parser.parse_args(argv)
    efforts = getattr(args, "effort", [])
    return _dispatch(args.stage, args.config, efforts, args.seed)


if __name__ == "__main__":
    sys.exit(main())
