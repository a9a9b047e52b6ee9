"""Join features, patrol effort and activity labels into the per-cell-per-quarter table."""

from __future__ import annotations

import csv
import datetime
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import ParkGrid
from .rasterops import FeatureLayer, _check_aligned
from .temporal import Quarter

__all__ = [
    "RESERVED_REMOTE_NAMES",
    "FeatureEntry",
    "FeatureCatalog",
    "ActivityRecord",
    "EffortRecord",
    "ObservationTable",
    "assemble",
    "split_by_year",
    "select_feature_set",
    "read_activity_csv",
    "read_effort_csv",
]

logger = logging.getLogger(__name__)

# Names reserved for the remote-sensing catalog; park-provided features must
# not use them, and every remote-sensing entry must be one of them.
RESERVED_REMOTE_NAMES = frozenset(
    {
        "land_cover",
        "rivers",
        "surface_water",
        "flow_accumulation",
        "elevation",
        "slope",
        "aspect",
        "drainage_direction",
        "temperature",
        "precipitation",
        "npp",
        "gpp",
        "aerosol",
        "cirrus",
    }
)

CONDITIONS = ("baseline", "remote-sensing", "all")


@dataclass(frozen=True)
class FeatureEntry:
    name: str
    source: str  # park | remote-sensing
    temporality: str = "static"  # static | dynamic
    kind: str = "continuous"  # continuous | categorical

    def __post_init__(self):
        if self.source not in ("park", "remote-sensing"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.temporality not in ("static", "dynamic"):
            raise ValueError(f"unknown temporality {self.temporality!r}")
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"unknown kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureCatalog:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names in catalog")
        for e in self.entries:
            if (e.source == "remote-sensing") != (e.name in RESERVED_REMOTE_NAMES):
                raise ValueError(
                    f"feature {e.name!r}: remote-sensing entries must use a reserved "
                    "name and park entries must not"
                )

    @property
    def names(self):
        return [e.name for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def subset(self, condition: str) -> "FeatureCatalog":
        if condition == "baseline":
            kept = [e for e in self.entries if e.source == "park"]
        elif condition == "remote-sensing":
            kept = [e for e in self.entries if e.source == "remote-sensing"]
        elif condition == "all":
            kept = list(self.entries)
        else:
            raise ValueError(f"unknown condition {condition!r}")
        return FeatureCatalog(tuple(kept))


@dataclass(frozen=True)
class ActivityRecord:
    x: float
    y: float
    date: datetime.date


@dataclass(frozen=True)
class EffortRecord:
    x: float
    y: float
    date: datetime.date
    effort: float

    def __post_init__(self):
        if self.effort < 0:
            raise ValueError("effort must be nonnegative")


@dataclass
class ObservationTable:
    """One row per (in-park cell, quarter): features, summed effort, 0/1 label."""

    catalog: FeatureCatalog
    cell_ids: np.ndarray
    years: np.ndarray
    quarter_indices: np.ndarray
    features: np.ndarray
    efforts: np.ndarray
    labels: np.ndarray
    skipped_records: int = 0

    def __post_init__(self):
        n = len(self.cell_ids)
        if self.features.shape != (n, len(self.catalog)):
            raise ValueError("feature matrix shape disagrees with catalog")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1")

    def __len__(self):
        return len(self.cell_ids)

    @property
    def column_names(self):
        return self.catalog.names

    def quarter(self, i) -> Quarter:
        return Quarter(int(self.years[i]), int(self.quarter_indices[i]))

    def take(self, indices) -> "ObservationTable":
        return ObservationTable(
            self.catalog,
            self.cell_ids[indices],
            self.years[indices],
            self.quarter_indices[indices],
            self.features[indices],
            self.efforts[indices],
            self.labels[indices],
            self.skipped_records,
        )


def _fill_value(layer: FeatureLayer):
    """Imputation value: masked mean for continuous layers, mode for categorical."""
    vals = layer.values[~np.isnan(layer.values)]
    if vals.size == 0:
        return 0.0
    if layer.kind == "categorical":
        cats, counts = np.unique(vals, return_counts=True)
        return float(cats[np.argmax(counts)])
    return float(vals.mean())


def feature_matrix(grid: ParkGrid, catalog: FeatureCatalog, static_layers: dict,
                   quarter_layers: dict | None = None):
    """(n_cells, n_features) matrix in catalog order, nodata imputed."""
    columns = []
    rc = grid.masked_rowcols()
    for entry in catalog.entries:
        if entry.temporality == "static":
            layer = static_layers.get(entry.name)
        else:
            layer = (quarter_layers or {}).get(entry.name)
        if layer is None:
            raise ValueError(f"missing feature layer {entry.name!r}")
        _check_aligned(layer, grid)
        col = layer.values[rc[:, 0], rc[:, 1]]
        missing = np.isnan(col)
        if missing.any():
            col = np.where(missing, _fill_value(layer), col)
        columns.append(col)
    return np.column_stack(columns)


def assemble(grid: ParkGrid, catalog: FeatureCatalog, static_layers: dict,
             quarterly_layers: dict, efforts, activities, quarters) -> ObservationTable:
    """Build the observation table over the given quarters.

    ``static_layers`` maps name -> FeatureLayer; ``quarterly_layers`` maps
    Quarter -> {name -> FeatureLayer} for dynamic features. Effort records
    sum per (cell, quarter); the label is 1 iff at least one activity record
    falls in the cell-quarter. Records outside the grid are skipped and
    counted.
    """
    quarters = sorted(quarters)
    q_index = {q: i for i, q in enumerate(quarters)}
    n_cells = grid.n_cells

    effort_grid = np.zeros((len(quarters), n_cells))
    label_grid = np.zeros((len(quarters), n_cells), dtype=np.int8)
    skipped = 0

    def locate(rec):
        pos = grid.cell_at(rec.x, rec.y)
        if pos is None:
            return None
        cell = grid.cell_ids[pos]
        if cell < 0:
            return None
        q = Quarter.from_date(rec.date)
        if q not in q_index:
            return None
        return q_index[q], cell

    for rec in efforts:
        hit = locate(rec)
        if hit is None:
            skipped += 1
            continue
        effort_grid[hit] += rec.effort
    for rec in activities:
        hit = locate(rec)
        if hit is None:
            skipped += 1
            continue
        label_grid[hit] = 1
    if skipped:
        logger.warning("assemble: skipped %d records outside the grid/quarters", skipped)

    blocks = []
    for q in quarters:
        blocks.append(feature_matrix(grid, catalog, static_layers, quarterly_layers.get(q, {})))

    n = n_cells * len(quarters)
    return ObservationTable(
        catalog=catalog,
        cell_ids=np.tile(np.arange(n_cells), len(quarters)),
        years=np.repeat([q.year for q in quarters], n_cells),
        quarter_indices=np.repeat([q.index for q in quarters], n_cells),
        features=np.vstack(blocks) if blocks else np.zeros((0, len(catalog))),
        efforts=effort_grid.reshape(n),
        labels=label_grid.reshape(n),
        skipped_records=skipped,
    )


def split_by_year(table: ObservationTable, test_year: int):
    """Train on the three years before ``test_year``, test on ``test_year``.

    Rows with zero patrol effort are unobserved and excluded from both sides.
    """
    years_present = set(int(y) for y in np.unique(table.years))
    needed = set(range(test_year - 3, test_year + 1))
    if not needed <= years_present:
        raise ValueError(
            f"table must span {test_year - 3}..{test_year}; missing {sorted(needed - years_present)}"
        )
    observed = table.efforts > 0
    train_sel = observed & (table.years >= test_year - 3) & (table.years <= test_year - 1)
    test_sel = observed & (table.years == test_year)
    if not test_sel.any():
        raise ValueError(f"no positive-effort rows in test year {test_year}")
    return table.take(np.nonzero(train_sel)[0]), table.take(np.nonzero(test_sel)[0])


def select_feature_set(table: ObservationTable, condition: str) -> ObservationTable:
    """Filter feature columns to the paper-style condition."""
    sub = table.catalog.subset(condition)
    if len(sub) == 0:
        raise ValueError(f"condition {condition!r} selects no feature columns")
    keep = [table.catalog.names.index(name) for name in sub.names]
    return ObservationTable(
        sub,
        table.cell_ids,
        table.years,
        table.quarter_indices,
        table.features[:, keep],
        table.efforts,
        table.labels,
        table.skipped_records,
    )


def _read_records(text: str, want_effort: bool):
    reader = csv.DictReader(io.StringIO(text))
    records = []
    for row in reader:
        date = datetime.date.fromisoformat(row["date"].strip())
        x, y = float(row["x"]), float(row["y"])
        if want_effort:
            records.append(EffortRecord(x, y, date, float(row["effort"])))
        else:
            records.append(ActivityRecord(x, y, date))
    return records


def read_activity_csv(text: str):
    """Parse activities.csv (header x,y,date; date as YYYY-MM-DD)."""
    return _read_records(text, want_effort=False)


def read_effort_csv(text: str):
    """Parse efforts.csv (header x,y,date,effort)."""
    return _read_records(text, want_effort=True)
