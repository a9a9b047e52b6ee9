"""ROC-AUC scoring, the conditions-by-years experiment harness, and map roughness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import ObservationTable, select_feature_set, split_by_year
from .model import TrainConfig, predict_rows, train_iware
from .rasterops import FeatureLayer

__all__ = [
    "MetricsRow",
    "roc_auc",
    "train_condition_models",
    "score_condition_models",
    "run_experiment",
    "roughness",
    "metrics_to_csv",
]


@dataclass(frozen=True)
class MetricsRow:
    park: str
    test_year: object  # int, or "avg" for the per-condition average row
    condition: str
    auc: float
    n_test: int
    n_positive: int

    def __post_init__(self):
        if not 0 <= self.auc <= 1:
            raise ValueError("auc out of [0, 1]")
        if self.n_positive > self.n_test:
            raise ValueError("n_positive exceeds n_test")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != len(labels):
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined without both classes")

    unique, counts = np.unique(scores, return_counts=True)
    cum = np.cumsum(counts)
    midranks = cum - (counts - 1) / 2.0
    ranks = midranks[np.searchsorted(unique, scores)]
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def train_condition_models(table: ObservationTable, test_years, conditions,
                           config: TrainConfig) -> dict:
    """Train one ensemble per (test_year, condition); keys in that order."""
    models = {}
    for year in test_years:
        for condition in conditions:
            try:
                sub = select_feature_set(table, condition)
                train, _ = split_by_year(sub, year)
                models[(year, condition)] = train_iware(train, config)
            except ValueError as exc:
                raise ValueError(f"[year={year}, condition={condition}] {exc}") from exc
    return models


def score_condition_models(park: str, models: dict, table: ObservationTable,
                           test_years, conditions) -> list:
    """Score each model on its test year; rows in (year, condition) order with
    one unweighted per-condition average row appended per condition."""
    rows = []
    for year in test_years:
        for condition in conditions:
            try:
                sub = select_feature_set(table, condition)
                _, test = split_by_year(sub, year)
                scores = predict_rows(models[(year, condition)], test)
                auc = roc_auc(scores, test.labels)
            except ValueError as exc:
                raise ValueError(f"[year={year}, condition={condition}] {exc}") from exc
            rows.append(MetricsRow(park, year, condition, auc, len(test),
                                   int(test.labels.sum())))
    for condition in conditions:
        group = [r for r in rows if r.condition == condition and r.test_year != "avg"]
        rows.append(
            MetricsRow(
                park,
                "avg",
                condition,
                float(np.mean([r.auc for r in group])),
                sum(r.n_test for r in group),
                sum(r.n_positive for r in group),
            )
        )
    return rows


def run_experiment(park: str, table: ObservationTable, test_years, conditions,
                   config: TrainConfig) -> list:
    """Full harness: per (year, condition) train on the prior three years,
    score the test year's rows at their own recorded efforts, report AUC."""
    models = train_condition_models(table, test_years, conditions, config)
    return score_condition_models(park, models, table, test_years, conditions)


def roughness(risk: FeatureLayer) -> float:
    """Mean absolute difference over 4-adjacent pairs of in-park cells."""
    v = risk.values
    valid = ~np.isnan(v)
    if valid.sum() < 2:
        raise ValueError("roughness needs at least two in-park cells")
    diffs = []
    pair_h = valid[:, 1:] & valid[:, :-1]
    diffs.append(np.abs(v[:, 1:] - v[:, :-1])[pair_h])
    pair_v = valid[1:, :] & valid[:-1, :]
    diffs.append(np.abs(v[1:, :] - v[:-1, :])[pair_v])
    diffs = np.concatenate(diffs)
    if diffs.size == 0:
        raise ValueError("no 4-adjacent in-park cell pairs")
    return float(diffs.mean())


def metrics_to_csv(rows) -> str:
    """metrics.csv text: park,test_year,condition,auc,n_test,n_positive."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["park", "test_year", "condition", "auc", "n_test", "n_positive"])
    for r in rows:
        writer.writerow([r.park, r.test_year, r.condition, repr(r.auc), r.n_test, r.n_positive])
    return buf.getvalue()
