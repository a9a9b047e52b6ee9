"""Effort-binned ensemble of bagged CART trees with effort-conditioned prediction.

Patrol effort quantiles carve the training rows into bins; each bin trains a
bagged forest, and a prediction at effort ``e`` averages every forest whose
bin threshold lies at or below ``e``. Negative labels from lightly patrolled
cells therefore only influence the forests trained on comparable effort.

Randomness: bootstrap draws come from NumPy's PCG64 generator seeded with
``SeedSequence([seed, bin_index, tree_index])``, so results are independent
of training order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import FeatureCatalog, FeatureEntry, ObservationTable, feature_matrix
from .rasterops import FeatureLayer, layer_from_values

__all__ = [
    "TrainConfig",
    "DecisionTree",
    "IWareEnsemble",
    "train_tree",
    "train_iware",
    "predict_at_effort",
    "predict_matrix",
    "predict_risk_map",
    "ensemble_to_json",
    "ensemble_from_json",
]

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    num_bins: int = 5
    trees_per_bin: int = 32
    max_depth: int = 8
    min_leaf: int = 5
    bootstrap_fraction: float = 1.0
    seed: int = 0
    # resample=False replaces every bootstrap draw with the full bin, which
    # reduces a 1-bin/1-tree ensemble to a single deterministic CART.
    resample: bool = True

    def __post_init__(self):
        if self.num_bins < 1 or self.trees_per_bin < 1:
            raise ValueError("num_bins and trees_per_bin must be >= 1")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("max_depth and min_leaf must be >= 1")
        if not 0 < self.bootstrap_fraction <= 1:
            raise ValueError("bootstrap_fraction must be in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


class DecisionTree:
    """CART stored as flat node arrays; feature < 0 marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                return self.value[node]
            rows = active
            x = X[rows, feat[rows]]
            go_left = x <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def to_node_dict(self, i=0):
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_node_dict(self.left[i]),
            "right": self.to_node_dict(self.right[i]),
        }

    @classmethod
    def from_node_dict(cls, node):
        feature, threshold, left, right, value = [], [], [], [], []

        def add(n):
            i = len(feature)
            if "leaf" in n:
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(n["leaf"]))
                return i
            feature.append(int(n["feature"]))
            threshold.append(float(n["threshold"]))
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            left[i] = add(n["left"])
            right[i] = add(n["right"])
            return i

        add(node)
        return cls(feature, threshold, left, right, value)


def _gini(pos, n):
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _best_split(X, y, min_leaf):
    n, n_features = X.shape
    parent_pos = float(y.sum())
    parent_gini = _gini(parent_pos, n)

    order = np.argsort(X, axis=0)  # ties may permute, but cuts sit on group edges
    xs = np.take_along_axis(X, order, axis=0)
    cum_pos = np.cumsum(y[order], axis=0)[:-1]

    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    usable = (xs[1:] != xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not usable.any():
        return None
    rp = parent_pos - cum_pos
    gl = 1.0 - (cum_pos / nl) ** 2 - ((nl - cum_pos) / nl) ** 2
    gr = 1.0 - (rp / nr) ** 2 - ((nr - rp) / nr) ** 2
    gains = parent_gini - (nl * gl + nr * gr) / n
    gains[~usable] = -np.inf

    # scan feature-major so ties resolve to the lowest feature index, then the
    # lowest threshold (cut positions ascend with the sorted values)
    flat = int(np.argmax(gains.T))
    best_feature, cut = divmod(flat, n - 1)
    best_gain = gains[cut, best_feature]
    if best_gain <= 0.0:
        return None
    threshold = (xs[cut, best_feature] + xs[cut + 1, best_feature]) / 2.0
    return int(best_feature), float(threshold)


def train_tree(X, y, config: TrainConfig) -> DecisionTree:
    """Grow a Gini CART; candidate thresholds are midpoints between distinct
    sorted values, ties resolve to the lowest feature index then threshold."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot train a tree on zero rows")

    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows, depth):
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        sub_y = y[rows]
        value.append(float(sub_y.mean()))
        if depth >= config.max_depth or sub_y.min() == sub_y.max():
            return i
        split = _best_split(X[rows], sub_y, config.min_leaf)
        if split is None:
            return i
        j, thr = split
        go_left = X[rows, j] <= thr
        feature[i] = j
        threshold[i] = thr
        value[i] = 0.0
        left[i] = grow(rows[go_left], depth + 1)
        right[i] = grow(rows[~go_left], depth + 1)
        return i

    grow(np.arange(len(y)), 0)
    return DecisionTree(feature, threshold, left, right, value)


@dataclass
class IWareEnsemble:
    thresholds: list
    forests: list
    catalog: FeatureCatalog
    config: TrainConfig
    trained_from: list = field(default_factory=list)

    def __post_init__(self):
        if list(self.thresholds) != sorted(set(self.thresholds)):
            raise ValueError("thresholds must be strictly increasing")
        if len(self.forests) != len(self.thresholds):
            raise ValueError("one forest per threshold required")
        if not self.trained_from:
            self.trained_from = list(range(len(self.forests)))


def effort_bin_thresholds(efforts, num_bins):
    """Deduplicated lower empirical quantiles: the 1-based order statistic at
    index max(1, ceil(k*n/num_bins)) for k = 0..num_bins-1."""
    ordered = np.sort(np.asarray(efforts, dtype=float))
    n = len(ordered)
    idx = [max(1, math.ceil(k * n / num_bins)) - 1 for k in range(num_bins)]
    thresholds = []
    for i in idx:
        t = float(ordered[i])
        if not thresholds or t > thresholds[-1]:
            thresholds.append(t)
    return thresholds


def _tree_rng(seed, bin_index, tree_index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, bin_index, tree_index])))


def train_iware(train: ObservationTable, config: TrainConfig) -> IWareEnsemble:
    """Train one bagged forest per effort bin.

    Bin m holds rows with effort in [t_m, t_{m+1}) (last bin unbounded); an
    empty bin borrows the nearest non-empty lower bin's rows and the borrow
    is recorded in ``trained_from``.
    """
    observed = train.efforts > 0
    if not observed.any():
        raise ValueError("no positive-effort rows to train on")
    X = train.features[observed]
    y = train.labels[observed].astype(float)
    efforts = train.efforts[observed]

    thresholds = effort_bin_thresholds(efforts, config.num_bins)
    bins = np.searchsorted(thresholds, efforts, side="right") - 1
    bins = np.clip(bins, 0, len(thresholds) - 1)

    bin_rows = [np.nonzero(bins == m)[0] for m in range(len(thresholds))]
    trained_from = []
    forests = []
    for m in range(len(thresholds)):
        source = m
        while len(bin_rows[source]) == 0 and source > 0:
            source -= 1
        rows = bin_rows[source]
        trained_from.append(source)
        n = len(rows)
        draw = max(1, math.ceil(config.bootstrap_fraction * n))
        forest = []
        for t in range(config.trees_per_bin):
            if config.resample:
                sample = rows[_tree_rng(config.seed, m, t).integers(0, n, size=draw)]
            else:
                sample = rows
            forest.append(train_tree(X[sample], y[sample], config))
        forests.append(forest)
    return IWareEnsemble(thresholds, forests, train.catalog, config, trained_from)


def _check_width(ens, X):
    if X.ndim != 2 or X.shape[1] != len(ens.catalog):
        raise ValueError(
            f"feature matrix has {X.shape[-1]} columns, catalog expects {len(ens.catalog)}"
        )


def _prefix_forest_means(ens: IWareEnsemble, X):
    """(M, n) running means over forests 1..m; row m serves effort >= t_{m+1}."""
    forest_means = [
        np.mean([tree.predict(X) for tree in forest], axis=0) for forest in ens.forests
    ]
    prefix = np.cumsum(forest_means, axis=0)
    return prefix / np.arange(1, len(forest_means) + 1)[:, None]


def _qualified_count(ens, efforts):
    # number of thresholds <= effort; anything below t_1 still uses forest 1
    k = np.searchsorted(ens.thresholds, efforts, side="right")
    return np.maximum(k, 1)


def predict_matrix(ens: IWareEnsemble, X, effort):
    """Probabilities for each row of X at one effort level."""
    X = np.asarray(X, dtype=float)
    _check_width(ens, X)
    k = int(_qualified_count(ens, effort))
    return _prefix_forest_means(ens, X)[k - 1]


def predict_at_effort(ens: IWareEnsemble, features, effort) -> float:
    """Probability for a single feature vector at one effort level."""
    vec = np.asarray(features, dtype=float).reshape(1, -1)
    return float(predict_matrix(ens, vec, effort)[0])


def predict_rows(ens: IWareEnsemble, table: ObservationTable):
    """Score each table row at its own recorded effort."""
    if table.column_names != ens.catalog.names:
        raise ValueError("table columns do not match the model's catalog")
    X = table.features
    _check_width(ens, X)
    prefix = _prefix_forest_means(ens, X)
    k = _qualified_count(ens, table.efforts)
    return prefix[k - 1, np.arange(len(X))]


def predict_risk_map(ens: IWareEnsemble, grid, static_layers, quarter_layers,
                     effort) -> FeatureLayer:
    """Per-cell risk at one effort threshold; off-park cells stay nodata."""
    X = feature_matrix(grid, ens.catalog, static_layers, quarter_layers)
    probs = predict_matrix(ens, X, effort)
    values = np.full(grid.height * grid.width, np.nan)
    rc = grid.masked_rowcols()
    values[rc[:, 0] * grid.width + rc[:, 1]] = probs
    return layer_from_values("risk", grid, values)


# --- serialization ----------------------------------------------------------


def ensemble_to_json(ens: IWareEnsemble) -> str:
    doc = {
        "format": "iware-ensemble",
        "version": MODEL_FORMAT_VERSION,
        "rng": "numpy-pcg64 seeded by SeedSequence([seed, bin, tree])",
        "config": asdict(ens.config),
        "catalog": [asdict(e) for e in ens.catalog.entries],
        "thresholds": [float(t) for t in ens.thresholds],
        "trained_from": list(ens.trained_from),
        "forests": [[tree.to_node_dict() for tree in forest] for forest in ens.forests],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def ensemble_from_json(text: str) -> IWareEnsemble:
    doc = json.loads(text)
    if doc.get("format") != "iware-ensemble" or doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError("unrecognized model file format/version")
    config = TrainConfig(**doc["config"])
    catalog = FeatureCatalog(tuple(FeatureEntry(**e) for e in doc["catalog"]))
    forests = [[DecisionTree.from_node_dict(t) for t in forest] for forest in doc["forests"]]
    return IWareEnsemble(doc["thresholds"], forests, catalog, config, doc["trained_from"])
