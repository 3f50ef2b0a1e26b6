"""Binomial-deviance gradient boosting over depth-limited regression trees.

Trees are fit to residuals r = y - p by least-squares split gain; leaf
values are the Newton step sum(r) / sum(p(1-p)), clipped.  Numeric splits
route by value <= threshold where the threshold is an order statistic of
the training column, so predictions are invariant under strictly increasing
transforms applied consistently to train and test data.  Missing values
take the per-split learned direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ..util import derive_seed
from .backend import grow_tree
from .binning import BinnedDataset

_PROB_EPS = 1e-15


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    subsample: float = 1.0
    max_bins: int = 255
    leaf_clip: float = 4.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        if self.leaf_clip <= 0:
            raise ValueError("leaf_clip must be positive")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_leaf": self.min_samples_leaf,
            "subsample": self.subsample,
            "max_bins": self.max_bins,
            "leaf_clip": self.leaf_clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class Tree:
    """Flat node arrays; feature[i] < 0 marks a leaf.

    Numeric internal nodes carry a threshold (route left iff x <= threshold);
    categorical ones carry the left-set of category codes.  missing_left
    routes NaN features.
    """

    feature: np.ndarray
    threshold: np.ndarray
    categories: list[Optional[np.ndarray]]
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


@dataclass
class GbmModel:
    initial_score: float
    learning_rate: float
    trees: list[Tree]
    hyperparams: Hyperparams
    catalog_version: str
    feature_names: Optional[list[str]]
    feature_kinds: list[str]
    train_deviance: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_kinds)

    @property
    def total_leaves(self) -> int:
        return sum(t.n_leaves for t in self.trees)


class CatalogMismatch(Exception):
    """Feature layout of the input does not match the trained model."""


def _check_target(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    values = np.unique(y)
    if not np.isin(values, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if len(values) < 2:
        raise ValueError("degenerate target: both classes required for training")
    return y


def _deviance(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _to_tree(raw: dict, binned: BinnedDataset) -> Tree:
    n_nodes = raw["n_nodes"]
    threshold = np.full(n_nodes, np.nan)
    categories: list[Optional[np.ndarray]] = [None] * n_nodes
    for node in range(n_nodes):
        j = int(raw["feature"][node])
        if j < 0:
            continue
        if binned.is_categorical[j]:
            bits = np.unpackbits(raw["cat_bitset"][node], bitorder="little")
            bin_ids = np.flatnonzero(bits)
            categories[node] = binned.category_codes[j][bin_ids]
        else:
            threshold[node] = float(binned.numeric_boundaries[j][raw["split_bin"][node]])
    return Tree(
        feature=raw["feature"].copy(),
        threshold=threshold,
        categories=categories,
        missing_left=np.asarray(raw["missing_left"], dtype=bool).copy(),
        left=raw["left"].copy(),
        right=raw["right"].copy(),
        value=raw["value"].copy(),
        gain=raw["gain"].copy(),
        n_samples=raw["n_samples"].copy(),
    )


def _route_binned(raw: dict, binned: BinnedDataset, rows: np.ndarray) -> np.ndarray:
    """Leaf ids for rows not grown in this tree (subsample out-of-bag)."""
    node = np.zeros(len(rows), dtype=np.int64)
    feature = raw["feature"]
    while True:
        active = feature[node] >= 0
        if not active.any():
            return node
        for nid in np.unique(node[active]):
            at = node == nid
            j = int(feature[nid])
            bins = binned.binned[rows[at], j]
            miss = bins == binned.n_bins[j]
            if binned.is_categorical[j]:
                bitset = raw["cat_bitset"][nid]
                go_left = (bitset[bins >> 3] >> (bins & 7)).astype(bool) & ~miss
            else:
                go_left = bins <= raw["split_bin"][nid]
            if raw["missing_left"][nid]:
                go_left |= miss
            node[at] = np.where(go_left, raw["left"][nid], raw["right"][nid])


def _train_binned(
    binned: BinnedDataset,
    y: np.ndarray,
    hp: Hyperparams,
    seed: int,
    feature_names: Optional[Sequence[str]],
    kinds: Sequence[str],
    catalog_version: str,
) -> tuple[GbmModel, np.ndarray]:
    y = _check_target(y)
    n = binned.n_rows
    p_mean = float(y.mean())
    initial = math.log(p_mean / (1.0 - p_mean))
    scores = np.full(n, initial)
    rng = np.random.default_rng(derive_seed(seed, "gbm-subsample"))
    all_rows = np.arange(n, dtype=np.int64)
    deviance = [_deviance(y, expit(scores))]
    trees: list[Tree] = []

    for _ in range(hp.n_trees):
        p = expit(scores)
        grad = y - p
        hess = p * (1.0 - p)
        if hp.subsample < 1.0:
            size = max(1, int(round(n * hp.subsample)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = all_rows
        raw = grow_tree(
            binned.binned, binned.n_bins, binned.is_categorical,
            grad, hess, rows, hp.max_depth, hp.min_samples_leaf, hp.leaf_clip,
        )
        scores[raw["rows"]] += hp.learning_rate * raw["value"][raw["row_leaf"]]
        if hp.subsample < 1.0:
            oob = np.setdiff1d(all_rows, raw["rows"], assume_unique=False)
            if len(oob):
                scores[oob] += hp.learning_rate * raw["value"][_route_binned(raw, binned, oob)]
        trees.append(_to_tree(raw, binned))
        deviance.append(_deviance(y, expit(scores)))

    model = GbmModel(
        initial_score=initial,
        learning_rate=hp.learning_rate,
        trees=trees,
        hyperparams=hp,
        catalog_version=catalog_version,
        feature_names=list(feature_names) if feature_names is not None else None,
        feature_kinds=list(kinds),
        train_deviance=deviance,
    )
    return model, scores


def train(
    x: np.ndarray,
    y: np.ndarray,
    kinds: Optional[Sequence[str]] = None,
    hp: Optional[Hyperparams] = None,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
    catalog_version: str = "1",
) -> GbmModel:
    """Fit the boosted-tree classifier; deterministic for a fixed seed."""
    x = np.asarray(x, dtype=np.float64)
    hp = hp or Hyperparams()
    if kinds is None:
        kinds = ["NUMERIC"] * x.shape[1]
    if feature_names is not None and len(feature_names) != x.shape[1]:
        raise ValueError("feature_names length must match matrix width")
    binned = BinnedDataset.from_matrix(x, kinds, hp.max_bins)
    model, _ = _train_binned(binned, y, hp, seed, feature_names, kinds, catalog_version)
    return model


def _predict_tree(tree: Tree, x: np.ndarray) -> np.ndarray:
    node = np.zeros(len(x), dtype=np.int64)
    while True:
        active = tree.feature[node] >= 0
        if not active.any():
            return tree.value[node]
        for nid in np.unique(node[active]):
            at = node == nid
            j = int(tree.feature[nid])
            col = x[at, j]
            miss = np.isnan(col)
            if tree.categories[nid] is not None:
                codes = np.rint(np.where(miss, 0.0, col)).astype(np.int64)
                go_left = np.isin(codes, tree.categories[nid])
            else:
                with np.errstate(invalid="ignore"):
                    go_left = col <= tree.threshold[nid]
            go_left = np.where(miss, bool(tree.missing_left[nid]), go_left)
            node[at] = np.where(go_left, tree.left[nid], tree.right[nid])


def decision_scores(model: GbmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise CatalogMismatch(
            f"matrix has {x.shape[1] if x.ndim == 2 else '?'} features, "
            f"model expects {model.n_features}"
        )
    scores = np.full(len(x), model.initial_score)
    for tree in model.trees:
        scores += model.learning_rate * _predict_tree(tree, x)
    return scores


def predict(model: GbmModel, x: np.ndarray) -> np.ndarray:
    """Probability of the positive class per row."""
    return expit(decision_scores(model, x))


# ---------------------------------------------------------------------------
# Serialization: versioned JSON, round-trips to bit-identical predictions
# ---------------------------------------------------------------------------


def model_to_dict(model: GbmModel, provenance: Optional[dict] = None) -> dict:
    trees = []
    for t in model.trees:
        trees.append({
            "feature": t.feature.tolist(),
            "threshold": [None if math.isnan(v) else v for v in t.threshold.tolist()],
            "categories": [
                None if c is None else [int(v) for v in c] for c in t.categories
            ],
            "missing_left": t.missing_left.astype(int).tolist(),
            "left": t.left.tolist(),
            "right": t.right.tolist(),
            "value": t.value.tolist(),
            "gain": t.gain.tolist(),
            "n_samples": t.n_samples.tolist(),
        })
    doc = {
        "format": "litmap-gbm",
        "format_version": 1,
        "catalog_version": model.catalog_version,
        "feature_names": model.feature_names,
        "feature_kinds": model.feature_kinds,
        "hyperparameters": model.hyperparams.to_dict(),
        "initial_score": model.initial_score,
        "learning_rate": model.learning_rate,
        "trees": trees,
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def model_from_dict(doc: dict) -> GbmModel:
    if doc.get("format") != "litmap-gbm" or doc.get("format_version") != 1:
        raise ValueError("unrecognized model document")
    trees = []
    for t in doc["trees"]:
        trees.append(Tree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(
                [math.nan if v is None else v for v in t["threshold"]], dtype=np.float64
            ),
            categories=[
                None if c is None else np.asarray(c, dtype=np.int64)
                for c in t["categories"]
            ],
            missing_left=np.asarray(t["missing_left"], dtype=bool),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            value=np.asarray(t["value"], dtype=np.float64),
            gain=np.asarray(t["gain"], dtype=np.float64),
            n_samples=np.asarray(t["n_samples"], dtype=np.int32),
        ))
    return GbmModel(
        initial_score=doc["initial_score"],
        learning_rate=doc["learning_rate"],
        trees=trees,
        hyperparams=Hyperparams.from_dict(doc["hyperparameters"]),
        catalog_version=doc["catalog_version"],
        feature_names=doc["feature_names"],
        feature_kinds=doc["feature_kinds"],
    )


def save_model(model: GbmModel, path: str | Path, provenance: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, provenance), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> GbmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def shrink(hp: Hyperparams, **overrides) -> Hyperparams:
    return replace(hp, **overrides)
