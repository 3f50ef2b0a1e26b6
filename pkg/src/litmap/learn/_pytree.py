"""Pure-numpy regression-tree grower (fallback backend).

litmap.learn._tree_kernel implements the same contract in Cython; the two
must stay bit-for-bit interchangeable.  The shared semantics:

  * nodes grow breadth-first in creation order; children allocated left-first,
  * histogram accumulation iterates rows ascending, features ascending
    (numpy bincount over the row-major flattened bin matrix matches a
    sequential C loop per cell),
  * split gain is the least-squares improvement
    GL^2/NL + GR^2/NR - G^2/N over residual sums, counted with missing
    routed left first then right for each candidate; strict > keeps the
    first-best candidate, features scanned ascending (ties -> lowest index),
  * categorical candidates are prefixes of bins ordered by (mean residual,
    bin id),
  * leaf value is sum(residual)/sum(hessian) clipped to +-leaf_clip,
  * partitions are stable, so row order inside every node stays ascending.
"""

from __future__ import annotations

import numpy as np

from .binning import BIN_STRIDE


def grow_tree(
    binned: np.ndarray,
    n_bins: np.ndarray,
    is_categorical: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    rows: np.ndarray,
    max_depth: int,
    min_samples_leaf: int,
    leaf_clip: float,
) -> dict:
    n_features = binned.shape[1]
    max_nodes = 2 ** (max_depth + 1) - 1

    feature = np.full(max_nodes, -1, dtype=np.int32)
    split_bin = np.full(max_nodes, -1, dtype=np.int32)
    cat_bitset = np.zeros((max_nodes, BIN_STRIDE // 8), dtype=np.uint8)
    missing_left = np.zeros(max_nodes, dtype=np.uint8)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)
    gain = np.zeros(max_nodes, dtype=np.float64)
    n_samples = np.zeros(max_nodes, dtype=np.int32)
    row_leaf = np.empty(len(rows), dtype=np.int32)

    rows_buf = np.array(rows, dtype=np.int64)
    offsets = np.arange(n_features, dtype=np.intp) * BIN_STRIDE

    # queue entries: (node_id, start, end, depth)
    queue = [(0, 0, len(rows_buf), 0)]
    n_nodes = 1

    while queue:
        node_id, start, end, depth = queue.pop(0)
        node_rows = rows_buf[start:end]
        n_node = end - start
        n_samples[node_id] = n_node
        g_node = grad[node_rows]
        g_total = float(np.cumsum(g_node)[-1]) if n_node else 0.0

        best = None
        if depth < max_depth and n_node >= 2 * min_samples_leaf:
            best = _best_split(
                binned, n_bins, is_categorical, node_rows, g_node, g_total,
                offsets, min_samples_leaf,
            )

        if best is None:
            h_total = float(np.cumsum(hess[node_rows])[-1]) if n_node else 0.0
            value[node_id] = _leaf_value(g_total, h_total, leaf_clip)
            row_leaf[start:end] = node_id
            continue

        j, bin_id, ml, best_gain, left_bins = best
        feature[node_id] = j
        missing_left[node_id] = 1 if ml else 0
        gain[node_id] = best_gain
        bins_j = binned[node_rows, j]
        if left_bins is None:
            split_bin[node_id] = bin_id
            mask = bins_j <= bin_id
        else:
            for b in left_bins:
                cat_bitset[node_id, b >> 3] |= 1 << (b & 7)
            mask = np.isin(bins_j, left_bins)
        if ml:
            mask |= bins_j == n_bins[j]
        rows_buf[start:end] = np.concatenate([node_rows[mask], node_rows[~mask]])
        n_left = int(mask.sum())
        left[node_id] = n_nodes
        right[node_id] = n_nodes + 1
        queue.append((n_nodes, start, start + n_left, depth + 1))
        queue.append((n_nodes + 1, start + n_left, end, depth + 1))
        n_nodes += 2

    return {
        "n_nodes": n_nodes,
        "feature": feature[:n_nodes],
        "split_bin": split_bin[:n_nodes],
        "cat_bitset": cat_bitset[:n_nodes],
        "missing_left": missing_left[:n_nodes].astype(bool),
        "left": left[:n_nodes],
        "right": right[:n_nodes],
        "value": value[:n_nodes],
        "gain": gain[:n_nodes],
        "n_samples": n_samples[:n_nodes],
        "rows": rows_buf,
        "row_leaf": row_leaf,
    }


def _leaf_value(g_total: float, h_total: float, leaf_clip: float) -> float:
    if h_total <= 0.0:
        if g_total == 0.0:
            return 0.0
        return leaf_clip if g_total > 0.0 else -leaf_clip
    v = g_total / h_total
    return min(max(v, -leaf_clip), leaf_clip)


def _best_split(binned, n_bins, is_categorical, node_rows, g_node, g_total,
                offsets, min_samples_leaf):
    n_node = len(node_rows)
    n_features = binned.shape[1]
    bins_node = binned[node_rows]
    flat = (bins_node.astype(np.intp) + offsets).ravel()
    hist_g = np.bincount(flat, weights=np.repeat(g_node, n_features),
                         minlength=n_features * BIN_STRIDE).reshape(n_features, BIN_STRIDE)
    hist_n = np.bincount(flat, minlength=n_features * BIN_STRIDE).reshape(
        n_features, BIN_STRIDE)

    parent_term = g_total * g_total / n_node
    best_gain = 0.0
    best = None

    for j in range(n_features):
        nb = int(n_bins[j])
        if nb < 2:
            continue
        miss_n = int(hist_n[j, nb])
        miss_g = float(hist_g[j, nb])
        counts = hist_n[j, :nb]
        sums = hist_g[j, :nb]

        if is_categorical[j]:
            nonempty = np.flatnonzero(counts > 0)
            if len(nonempty) < 2:
                continue
            means = sums[nonempty] / counts[nonempty]
            order = np.lexsort((nonempty, means))
            ordered_bins = nonempty[order]
            cum_n = np.cumsum(counts[ordered_bins])[:-1]
            cum_g = np.cumsum(sums[ordered_bins])[:-1]
        else:
            ordered_bins = None
            cum_n = np.cumsum(counts)[:-1]
            cum_g = np.cumsum(sums)[:-1]

        n_pos = len(cum_n)
        if n_pos == 0:
            continue
        # Interleave the two missing routes so candidate order is
        # (position asc, missing-left before missing-right), matching the
        # sequential scan in the compiled kernel.
        nl = np.empty(2 * n_pos, dtype=np.int64)
        gl = np.empty(2 * n_pos, dtype=np.float64)
        nl[0::2] = cum_n + miss_n
        nl[1::2] = cum_n
        gl[0::2] = cum_g + miss_g
        gl[1::2] = cum_g
        nr = n_node - nl
        gr = g_total - gl
        valid = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        if not valid.any():
            continue
        gains = np.full(2 * n_pos, -np.inf)
        gains[valid] = (
            gl[valid] * gl[valid] / nl[valid]
            + gr[valid] * gr[valid] / nr[valid]
            - parent_term
        )
        k = int(np.argmax(gains))
        g = float(gains[k])
        if g > best_gain:
            best_gain = g
            pos = k >> 1
            add_missing = (k & 1) == 0
            if ordered_bins is None:
                best = (j, pos, add_missing, g, None)
            else:
                best = (j, -1, add_missing, g, ordered_bins[: pos + 1].copy())
    if best is None or best_gain <= 0.0:
        return None
    return best
