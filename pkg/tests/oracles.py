"""Independent reference implementations used as test oracles.

Everything here is deliberately written brute-force against the documented
contracts (raw-value scans, recursion, O(n^2) loops) and shares no code with
the package internals it checks.
"""

from __future__ import annotations

import math

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def _leaf_value(residuals, hessians, clip=4.0):
    h = float(np.sum(hessians))
    g = float(np.sum(residuals))
    if h <= 0.0:
        return 0.0 if g == 0.0 else math.copysign(clip, g)
    return float(np.clip(g / h, -clip, clip))


def _best_split_exhaustive(x, grad, rows, min_leaf):
    """Scan every feature, every boundary between distinct values, and both
    missing routes; first-best under (feature asc, boundary asc, missing-left
    first) with strictly-positive gain."""
    n = len(rows)
    g_total = float(np.sum(grad[rows]))
    parent = g_total * g_total / n
    best = None
    best_gain = 0.0
    for j in range(x.shape[1]):
        col = x[rows, j]
        present = rows[~np.isnan(col)]
        missing = rows[np.isnan(col)]
        values = np.unique(x[present, j])
        for boundary in values[:-1]:
            base_left = present[x[present, j] <= boundary]
            base_right = present[x[present, j] > boundary]
            for missing_left in (True, False):
                left = np.concatenate([base_left, missing]) if missing_left else base_left
                right = base_right if missing_left else np.concatenate([base_right, missing])
                if len(left) < min_leaf or len(right) < min_leaf:
                    continue
                gl = float(np.sum(grad[left]))
                gr = float(np.sum(grad[right]))
                gain = gl * gl / len(left) + gr * gr / len(right) - parent
                if gain > best_gain:
                    best_gain = gain
                    best = (j, float(boundary), missing_left, left, right)
    return best


def _grow(x, grad, hess, rows, depth, max_depth, min_leaf, clip):
    if depth < max_depth and len(rows) >= 2 * min_leaf:
        split = _best_split_exhaustive(x, grad, rows, min_leaf)
    else:
        split = None
    if split is None:
        return ("leaf", _leaf_value(grad[rows], hess[rows], clip))
    j, boundary, missing_left, left, right = split
    return (
        "node", j, boundary, missing_left,
        _grow(x, grad, hess, left, depth + 1, max_depth, min_leaf, clip),
        _grow(x, grad, hess, right, depth + 1, max_depth, min_leaf, clip),
    )


def _eval_tree(tree, row):
    while tree[0] == "node":
        _, j, boundary, missing_left, left, right = tree
        v = row[j]
        if math.isnan(v):
            tree = left if missing_left else right
        else:
            tree = left if v <= boundary else right
    return tree[1]


def brute_force_gbm_predict(x_train, y_train, x_test, n_rounds, max_depth=3,
                            learning_rate=0.1, min_leaf=1, clip=4.0):
    """Reference boosted-trees probabilities after n_rounds Newton steps."""
    x_train = np.asarray(x_train, dtype=float)
    y = np.asarray(y_train, dtype=float)
    p_mean = y.mean()
    score0 = math.log(p_mean / (1 - p_mean))
    scores = np.full(len(y), score0)
    trees = []
    rows = np.arange(len(y))
    for _ in range(n_rounds):
        p = sigmoid(scores)
        grad = y - p
        hess = p * (1 - p)
        tree = _grow(x_train, grad, hess, rows, 0, max_depth, min_leaf, clip)
        trees.append(tree)
        scores = scores + learning_rate * np.array(
            [_eval_tree(tree, x_train[i]) for i in range(len(y))]
        )
    test_scores = np.full(len(x_test), score0)
    for tree in trees:
        test_scores = test_scores + learning_rate * np.array(
            [_eval_tree(tree, row) for row in np.asarray(x_test, dtype=float)]
        )
    return sigmoid(test_scores)


def idw_direct(tower_lonlat_values, query_lon, query_lat, power, k, exact_km,
               haversine):
    """Straightforward k-nearest IDW at one query point."""
    d = np.array([
        haversine(query_lon, query_lat, lon, lat) for lon, lat, _ in tower_lonlat_values
    ])
    v = np.array([t[2] for t in tower_lonlat_values])
    order = np.argsort(d, kind="stable")[:k]
    if d[order[0]] < exact_km:
        return float(v[order[0]])
    w = 1.0 / d[order] ** power
    return float(np.sum(w * v[order]) / np.sum(w))


def chi_square_stat(counts, expected):
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.sum((counts - expected) ** 2 / expected))


def simulated_chi_square_p95(probabilities, n_draws, n_sims=4000, seed=123):
    """95th percentile of the multinomial chi-square statistic, by direct
    simulation (independent of any chi-square distribution tables)."""
    rng = np.random.default_rng(seed)
    probabilities = np.asarray(probabilities, dtype=float)
    expected = probabilities * n_draws
    stats = np.empty(n_sims)
    for s in range(n_sims):
        draw = rng.multinomial(n_draws, probabilities)
        stats[s] = chi_square_stat(draw, expected)
    return float(np.percentile(stats, 95))
