"""Aggregate monthly dynamic layers into calendar quarters (Q1 = Jan-Mar)."""

from __future__ import annotations

import datetime
from dataclasses import dataclass

import numpy as np

from .rasterops import FeatureLayer, _check_aligned, layer_from_values

__all__ = ["Quarter", "TimeStampedLayer", "aggregate_quarters"]


@dataclass(frozen=True, order=True)
class Quarter:
    year: int
    index: int

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"quarter index {self.index} not in 1..4")

    @classmethod
    def from_date(cls, date: datetime.date):
        return cls(date.year, (date.month - 1) // 3 + 1)

    @classmethod
    def from_month(cls, year: int, month: int):
        return cls(year, (month - 1) // 3 + 1)

    def __str__(self):
        return f"{self.year}Q{self.index}"


@dataclass(frozen=True)
class TimeStampedLayer:
    year: int
    month: int
    layer: FeatureLayer

    def quarter(self):
        return Quarter.from_month(self.year, self.month)


def aggregate_quarters(series, grid) -> dict:
    """Per-cell mean of each quarter's monthly layers, skipping nodata months.

    Quarters with no layers are absent from the result; a layer that is not
    aligned to the grid is rejected.
    """
    groups = {}
    for stamped in series:
        _check_aligned(stamped.layer, grid)
        groups.setdefault(stamped.quarter(), []).append(stamped.layer)

    out = {}
    for quarter in sorted(groups):
        layers = groups[quarter]
        stack = np.stack([l.values for l in layers])
        with np.errstate(invalid="ignore"):
            counts = np.sum(~np.isnan(stack), axis=0)
            total = np.nansum(stack, axis=0)
            mean = np.full(stack.shape[1:], np.nan)
            np.divide(total, counts, out=mean, where=counts > 0)
        first = layers[0]
        out[quarter] = layer_from_values(first.name, grid, mean,
                                         kind=first.kind, source=first.source)
    return out
