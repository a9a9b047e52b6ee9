"""Discretize a park boundary into a square-cell grid and map cells to coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geoformats import GeoTransform, Geometry, VectorDataset

__all__ = ["ParkGrid", "build_grid", "point_in_polygon", "points_in_polygon", "cell_center"]


@dataclass
class ParkGrid:
    """The park's cell grid: transform, in-park mask and row-major cell ids."""

    transform: GeoTransform
    width: int
    height: int
    resolution: float
    mask: np.ndarray
    cell_ids: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.height, self.width)
        if not self.mask.any():
            raise ValueError("grid has no in-park cells")
        ids = np.full(self.mask.shape, -1, dtype=np.int64)
        ids[self.mask] = np.arange(int(self.mask.sum()))
        self.cell_ids = ids

    @property
    def n_cells(self):
        """Number of in-park cells."""
        return int(self.mask.sum())

    def masked_rowcols(self):
        """(n_cells, 2) array of (row, col) in cell-id order."""
        rows, cols = np.nonzero(self.mask)
        return np.column_stack([rows, cols])

    def cell_centers(self):
        """(n_cells, 2) array of in-park cell centers in cell-id order."""
        rc = self.masked_rowcols()
        xs = self.transform.origin_x + (rc[:, 1] + 0.5) * self.resolution
        ys = self.transform.origin_y - (rc[:, 0] + 0.5) * self.resolution
        return np.column_stack([xs, ys])

    def cell_at(self, x, y):
        """(row, col) of the cell containing (x, y), or None when off-grid."""
        col = int(np.floor((x - self.transform.origin_x) / self.resolution))
        row = int(np.floor((self.transform.origin_y - y) / self.resolution))
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None


def points_in_polygon(points, polygon: Geometry):
    """Vectorized even-odd ray casting over all rings of one polygon.

    Uses the half-open edge rule, so points sitting exactly on an edge
    resolve deterministically.
    """
    if polygon.variant != "polygon":
        raise ValueError("geometry is not a polygon")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    px, py = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    for ring in polygon.coordinates:
        xs = np.array([v[0] for v in ring])
        ys = np.array([v[1] for v in ring])
        for i in range(len(ring) - 1):
            x1, y1, x2, y2 = xs[i], ys[i], xs[i + 1], ys[i + 1]
            straddles = (y1 > py) != (y2 > py)
            if not straddles.any():
                continue
            x_cross = np.full(len(points), np.nan)
            np.divide(
                (x2 - x1) * (py - y1),
                y2 - y1,
                out=x_cross,
                where=straddles,
            )
            inside ^= straddles & (px < x_cross + x1)
    return inside


def point_in_polygon(point, polygon: Geometry) -> bool:
    """Even-odd membership test for one point (holes via inner rings)."""
    return bool(points_in_polygon([point], polygon)[0])


def _polygon_area(geometry):
    total = 0.0
    for ring in geometry.coordinates:
        xs = np.array([v[0] for v in ring])
        ys = np.array([v[1] for v in ring])
        total += 0.5 * abs(np.sum(xs[:-1] * ys[1:] - xs[1:] * ys[:-1]))
    return total


def build_grid(boundary: VectorDataset, resolution: float = 1000.0) -> ParkGrid:
    """Lay a cell grid over the boundary bbox; mask cells whose center is in-park.

    The grid origin snaps outward to a multiple of ``resolution`` so feature
    layers built at different times align exactly.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    polygons = [g for g in boundary.geometries if g.variant == "polygon"]
    if not polygons:
        raise ValueError("boundary has no polygons")
    if all(_polygon_area(p) == 0.0 for p in polygons):
        raise ValueError("boundary polygon is degenerate (zero area)")

    min_x, min_y, max_x, max_y = boundary.bbox
    x0 = np.floor(min_x / resolution) * resolution
    y0 = np.floor(min_y / resolution) * resolution
    width = max(1, int(np.ceil((max_x - x0) / resolution)))
    height = max(1, int(np.ceil((max_y - y0) / resolution)))
    top = y0 + height * resolution
    transform = GeoTransform(x0, top, resolution, resolution)

    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    centers = np.column_stack(
        [
            x0 + (cols.ravel() + 0.5) * resolution,
            top - (rows.ravel() + 0.5) * resolution,
        ]
    )
    mask = np.zeros(width * height, dtype=bool)
    for poly in polygons:
        mask |= points_in_polygon(centers, poly)
    return ParkGrid(transform, width, height, float(resolution), mask.reshape(height, width))


def cell_center(grid: ParkGrid, row: int, col: int):
    """World coordinates of a cell center."""
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise IndexError(f"cell ({row}, {col}) outside {grid.height}x{grid.width} grid")
    return grid.transform.pixel_center(row, col)
