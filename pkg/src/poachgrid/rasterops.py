"""Static feature layers derived on the park grid.

Covers grid-aligned resampling, Horn slope/aspect, D8 drainage direction and
flow accumulation, Euclidean distance maps, and z-score standardization.
All layers share the grid's transform and use NaN as nodata outside the park
mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geoformats import RasterDataset, VectorDataset
from .grid import ParkGrid, points_in_polygon

__all__ = [
    "FeatureLayer",
    "layer_from_values",
    "resample_to_grid",
    "slope_aspect",
    "d8_flow_direction",
    "flow_accumulation",
    "distance_to_geometries",
    "distance_to_cells",
    "standardize",
]

# D8 categories 1..8; 0 marks a sink.
D8_OFFSETS = [
    (0, 1),    # 1 E
    (1, 1),    # 2 SE
    (1, 0),    # 3 S
    (1, -1),   # 4 SW
    (0, -1),   # 5 W
    (-1, -1),  # 6 NW
    (-1, 0),   # 7 N
    (-1, 1),   # 8 NE
]


@dataclass
class FeatureLayer:
    """Named raster aligned to the park grid."""

    name: str
    raster: RasterDataset
    kind: str = "continuous"
    source: str = "remote-sensing"

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.source not in ("park", "remote-sensing"):
            raise ValueError(f"unknown layer source {self.source!r}")

    @property
    def values(self):
        return self.raster.values


def _check_aligned(layer: FeatureLayer, grid: ParkGrid):
    t, r = layer.raster.transform, layer.raster
    if (r.width, r.height) != (grid.width, grid.height) or t != grid.transform:
        raise ValueError(f"layer {layer.name!r} is not aligned to the park grid")


def layer_from_values(name, grid: ParkGrid, values, kind="continuous", source="remote-sensing"):
    """Wrap a value grid as an aligned FeatureLayer, NaN outside the mask."""
    values = np.asarray(values, dtype=float).reshape(grid.height, grid.width).copy()
    values[~grid.mask] = np.nan
    raster = RasterDataset(
        grid.width, grid.height, grid.transform, values, nodata=float("nan"), kind=kind
    )
    return FeatureLayer(name, raster, kind, source)


def resample_to_grid(src: RasterDataset, grid: ParkGrid, kind="continuous",
                     name="resampled", source="remote-sensing") -> FeatureLayer:
    """Aggregate a finer raster onto the grid.

    Continuous sources take the mean of the source pixels whose centers fall
    inside each cell; categorical sources take the mode with ties resolved to
    the smallest category. Cells with no contributing pixels become nodata.
    """
    t = src.transform
    if t.pixel_w > grid.resolution or t.pixel_h > grid.resolution:
        raise ValueError("source pixels are coarser than the grid resolution")

    cols, rows = np.meshgrid(np.arange(src.width), np.arange(src.height))
    x = t.origin_x + (cols.ravel() + 0.5) * t.pixel_w
    y = t.origin_y - (rows.ravel() + 0.5) * t.pixel_h
    tcol = np.floor((x - grid.transform.origin_x) / grid.resolution).astype(int)
    trow = np.floor((grid.transform.origin_y - y) / grid.resolution).astype(int)
    in_bounds = (tcol >= 0) & (tcol < grid.width) & (trow >= 0) & (trow < grid.height)
    if not in_bounds.any():
        raise ValueError("source raster lies entirely outside the grid")

    vals = src.values.ravel()
    usable = in_bounds & ~src.nodata_mask().ravel()
    idx = trow[usable] * grid.width + tcol[usable]
    vals = vals[usable]
    n = grid.width * grid.height

    out = np.full(n, np.nan)
    if kind == "continuous":
        counts = np.bincount(idx, minlength=n)
        sums = np.bincount(idx, weights=vals, minlength=n)
        np.divide(sums, counts, out=out, where=counts > 0)
    else:
        categories, cat_idx = np.unique(vals, return_inverse=True)
        counts = np.bincount(idx * len(categories) + cat_idx,
                             minlength=n * len(categories)).reshape(n, len(categories))
        hit = counts.sum(axis=1) > 0
        # argmax returns the first maximum; categories are sorted ascending,
        # which realizes the smallest-category tie rule.
        out[hit] = categories[np.argmax(counts[hit], axis=1)]

    return layer_from_values(name, grid, out, kind=kind, source=source)


def _horn_gradients(dem: FeatureLayer):
    z = dem.values
    res = dem.raster.transform.pixel_w
    padded = np.pad(z, 1, mode="edge")
    center = z
    win = {}
    for k, (dr, dc) in enumerate(
        [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)], start=1
    ):
        v = padded[1 + dr : 1 + dr + z.shape[0], 1 + dc : 1 + dc + z.shape[1]]
        win[k] = np.where(np.isnan(v), center, v)
    # z1..z9 row-major NW..SE
    gx = ((win[3] + 2 * win[6] + win[9]) - (win[1] + 2 * win[4] + win[7])) / (8 * res)
    gy = ((win[7] + 2 * win[8] + win[9]) - (win[1] + 2 * win[2] + win[3])) / (8 * res)
    return gx, gy


def slope_aspect(dem: FeatureLayer):
    """Horn slope (degrees) and aspect (compass bearing of steepest descent).

    Edges replicate the border; nodata neighbors fall back to the center
    value; flat cells get nodata aspect.
    """
    gx, gy = _horn_gradients(dem)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    flat = (gx == 0) & (gy == 0)
    with np.errstate(invalid="ignore"):
        aspect = np.mod(np.degrees(np.arctan2(-gx, gy)), 360.0)
    aspect[flat] = np.nan
    grid_nan = np.isnan(dem.values)
    slope[grid_nan] = np.nan
    aspect[grid_nan] = np.nan
    slope_layer = FeatureLayer(
        "slope",
        RasterDataset(dem.raster.width, dem.raster.height, dem.raster.transform,
                      slope, nodata=float("nan")),
        "continuous", dem.source,
    )
    aspect_layer = FeatureLayer(
        "aspect",
        RasterDataset(dem.raster.width, dem.raster.height, dem.raster.transform,
                      aspect, nodata=float("nan")),
        "continuous", dem.source,
    )
    return slope_layer, aspect_layer


def d8_flow_direction(dem: FeatureLayer) -> FeatureLayer:
    """Steepest-descent D8 direction, categories 1..8 (E,SE,S,SW,W,NW,N,NE).

    The drop is divided by the step length (diagonals sqrt(2) longer); cells
    with no strictly lower neighbor are sinks (category 0).
    """
    z = dem.values
    res = dem.raster.transform.pixel_w
    h, w = z.shape
    slopes = np.full((8, h, w), -np.inf)
    padded = np.pad(z, 1, mode="constant", constant_values=np.nan)
    for k, (dr, dc) in enumerate(D8_OFFSETS):
        neighbor = padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
        dist = res * (np.sqrt(2.0) if dr and dc else 1.0)
        drop = (z - neighbor) / dist
        slopes[k] = np.where(np.isnan(neighbor), -np.inf, drop)
    best = np.argmax(slopes, axis=0)
    best_drop = np.take_along_axis(slopes, best[None], axis=0)[0]
    dirs = np.where(best_drop > 0, best + 1.0, 0.0)
    dirs[np.isnan(z)] = np.nan
    raster = RasterDataset(w, h, dem.raster.transform, dirs, nodata=float("nan"),
                           kind="categorical")
    return FeatureLayer("drainage_direction", raster, "categorical", dem.source)


def flow_accumulation(dirs: FeatureLayer) -> FeatureLayer:
    """Count of upstream cells draining through each cell, in topological order."""
    d = dirs.values
    h, w = d.shape
    flat_dirs = d.ravel()
    valid = ~np.isnan(flat_dirs)
    downstream = np.full(h * w, -1, dtype=np.int64)
    for k, (dr, dc) in enumerate(D8_OFFSETS, start=1):
        sel = np.nonzero(valid & (flat_dirs == k))[0]
        rows, cols = sel // w + dr, sel % w + dc
        ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        target = rows[ok] * w + cols[ok]
        # flow into a nodata cell leaves the accounted area
        target = np.where(valid[target], target, -1)
        downstream[sel[ok]] = target

    indegree = np.zeros(h * w, dtype=np.int64)
    has_down = downstream >= 0
    np.add.at(indegree, downstream[has_down], 1)

    acc = np.zeros(h * w)
    queue = list(np.nonzero(valid & (indegree == 0))[0])
    processed = 0
    while queue:
        cell = queue.pop()
        processed += 1
        down = downstream[cell]
        if down >= 0:
            acc[down] += acc[cell] + 1
            indegree[down] -= 1
            if indegree[down] == 0:
                queue.append(down)
    if processed != int(valid.sum()):
        raise ValueError("cycle detected in flow directions")

    acc[~valid] = np.nan
    raster = RasterDataset(w, h, dirs.raster.transform, acc.reshape(h, w),
                           nodata=float("nan"))
    return FeatureLayer("flow_accumulation", raster, "continuous", dirs.source)


def _segment_distances(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(points[:, 0] - proj[:, 0], points[:, 1] - proj[:, 1])


def distance_to_geometries(grid: ParkGrid, features: VectorDataset,
                           name="distance", source="park") -> FeatureLayer:
    """Exact Euclidean distance from each cell center to the nearest geometry."""
    if not features.geometries:
        raise ValueError("empty vector dataset")
    centers = grid.cell_centers()
    best = np.full(len(centers), np.inf)
    for geom in features.geometries:
        if geom.variant == "point":
            (px, py), = geom.coordinates[0]
            best = np.minimum(best, np.hypot(centers[:, 0] - px, centers[:, 1] - py))
            continue
        for part in geom.coordinates:
            pts = np.asarray(part)
            for i in range(len(pts) - 1):
                best = np.minimum(best, _segment_distances(centers, pts[i], pts[i + 1]))
        if geom.variant == "polygon":
            inside = points_in_polygon(centers, geom)
            best[inside] = 0.0

    out = np.full(grid.height * grid.width, np.nan)
    rc = grid.masked_rowcols()
    out[rc[:, 0] * grid.width + rc[:, 1]] = best
    return layer_from_values(name, grid, out, kind="continuous", source=source)


def distance_to_cells(grid: ParkGrid, source_layer: FeatureLayer, threshold,
                      name="cell_distance") -> FeatureLayer:
    """Distance from each cell center to the nearest cell satisfying the predicate.

    Continuous sources match when value >= threshold, categorical sources on
    equality; satisfying cells get distance 0.
    """
    _check_aligned(source_layer, grid)
    vals = source_layer.values
    with np.errstate(invalid="ignore"):
        if source_layer.kind == "categorical":
            satisfied = vals == threshold
        else:
            satisfied = vals >= threshold
    satisfied &= grid.mask & ~np.isnan(vals)
    if not satisfied.any():
        raise ValueError("no cells satisfy the predicate")

    rows, cols = np.nonzero(satisfied)
    src_x = grid.transform.origin_x + (cols + 0.5) * grid.resolution
    src_y = grid.transform.origin_y - (rows + 0.5) * grid.resolution
    centers = grid.cell_centers()
    dx = centers[:, 0][:, None] - src_x[None, :]
    dy = centers[:, 1][:, None] - src_y[None, :]
    best = np.sqrt(dx * dx + dy * dy).min(axis=1)

    out = np.full(grid.height * grid.width, np.nan)
    rc = grid.masked_rowcols()
    out[rc[:, 0] * grid.width + rc[:, 1]] = best
    return layer_from_values(name, grid, out, kind="continuous", source=source_layer.source)


def standardize(layers):
    """Z-score each continuous layer over its masked, non-nodata cells."""
    result = []
    for layer in layers:
        if layer.kind != "continuous":
            raise ValueError(f"cannot standardize categorical layer {layer.name!r}")
        vals = layer.values.copy()
        finite = ~np.isnan(vals)
        mean = vals[finite].mean()
        std = vals[finite].std()
        if std == 0:
            vals[finite] = 0.0
        else:
            vals[finite] = (vals[finite] - mean) / std
        raster = RasterDataset(layer.raster.width, layer.raster.height,
                               layer.raster.transform, vals, nodata=float("nan"))
        result.append(FeatureLayer(layer.name, raster, layer.kind, layer.source))
    return result
