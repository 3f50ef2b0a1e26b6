# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled regression-tree grower.

Bit-for-bit interchangeable with litmap.learn._pytree.grow_tree: identical
candidate order (rows ascending for sums, positions ascending with
missing-left evaluated before missing-right, features ascending, strict >
everywhere), identical arithmetic expression shapes, stable partitions.
Any semantic change here must land in _pytree.py as well.
"""

from libc.string cimport memset

import numpy as np

cimport cython

DEF BIN_STRIDE = 256


def grow_tree(
    const unsigned char[:, ::1] binned,
    const int[::1] n_bins,
    const unsigned char[::1] is_categorical,
    const double[::1] grad,
    const double[::1] hess,
    rows,
    int max_depth,
    int min_samples_leaf,
    double leaf_clip,
):
    cdef Py_ssize_t n_features = binned.shape[1]
    cdef int max_nodes = (2 << max_depth) - 1

    feature_arr = np.full(max_nodes, -1, dtype=np.int32)
    split_bin_arr = np.full(max_nodes, -1, dtype=np.int32)
    cat_bitset_arr = np.zeros((max_nodes, BIN_STRIDE // 8), dtype=np.uint8)
    missing_left_arr = np.zeros(max_nodes, dtype=np.uint8)
    left_arr = np.full(max_nodes, -1, dtype=np.int32)
    right_arr = np.full(max_nodes, -1, dtype=np.int32)
    value_arr = np.zeros(max_nodes, dtype=np.float64)
    gain_arr = np.zeros(max_nodes, dtype=np.float64)
    n_samples_arr = np.zeros(max_nodes, dtype=np.int32)

    rows_buf_arr = np.array(rows, dtype=np.int64)
    cdef Py_ssize_t n_rows = rows_buf_arr.shape[0]
    row_leaf_arr = np.empty(n_rows, dtype=np.int32)

    node_start_arr = np.zeros(max_nodes, dtype=np.int64)
    node_end_arr = np.zeros(max_nodes, dtype=np.int64)
    node_depth_arr = np.zeros(max_nodes, dtype=np.int32)

    hist_g_arr = np.zeros(n_features * BIN_STRIDE, dtype=np.float64)
    hist_n_arr = np.zeros(n_features * BIN_STRIDE, dtype=np.int64)
    scratch_left_arr = np.empty(n_rows, dtype=np.int64)
    scratch_right_arr = np.empty(n_rows, dtype=np.int64)
    cat_means_arr = np.empty(BIN_STRIDE, dtype=np.float64)
    cat_bins_arr = np.empty(BIN_STRIDE, dtype=np.int32)
    best_left_bins_arr = np.empty(BIN_STRIDE, dtype=np.int32)
    member_arr = np.zeros(BIN_STRIDE, dtype=np.uint8)

    cdef int[::1] feature = feature_arr
    cdef int[::1] split_bin = split_bin_arr
    cdef unsigned char[:, ::1] cat_bitset = cat_bitset_arr
    cdef unsigned char[::1] missing_left = missing_left_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr
    cdef double[::1] gain = gain_arr
    cdef int[::1] n_samples = n_samples_arr
    cdef long long[::1] rows_buf = rows_buf_arr
    cdef int[::1] row_leaf = row_leaf_arr
    cdef long long[::1] node_start = node_start_arr
    cdef long long[::1] node_end = node_end_arr
    cdef int[::1] node_depth = node_depth_arr
    cdef double[::1] hist_g = hist_g_arr
    cdef long long[::1] hist_n = hist_n_arr
    cdef long long[::1] scratch_left = scratch_left_arr
    cdef long long[::1] scratch_right = scratch_right_arr
    cdef double[::1] cat_means = cat_means_arr
    cdef int[::1] cat_bins = cat_bins_arr
    cdef int[::1] best_left_bins = best_left_bins_arr
    cdef unsigned char[::1] member = member_arr

    cdef int n_nodes = 1
    cdef int node_id = 0
    cdef long long start, end, i, r, n_left_count
    cdef Py_ssize_t j, b, k, kk, base
    cdef int depth, nb, n_node_int
    cdef long long n_node, miss_n, nl_base, nl, nr, cnt
    cdef double g_total, h_total, g, miss_g, gl_base, gl, gr
    cdef double parent_term, cand_gain, best_gain, m_k, v
    cdef int best_feature, best_pos, best_ml, best_is_cat, best_n_left
    cdef int n_nonempty, pos, bit
    cdef unsigned char bb, cond, miss_bin

    node_start[0] = 0
    node_end[0] = n_rows
    node_depth[0] = 0

    with nogil:
        while node_id < n_nodes:
            start = node_start[node_id]
            end = node_end[node_id]
            depth = node_depth[node_id]
            n_node = end - start
            n_samples[node_id] = <int> n_node

            g_total = 0.0
            for i in range(start, end):
                g_total += grad[rows_buf[i]]

            best_feature = -1
            best_gain = 0.0
            best_pos = -1
            best_ml = 0
            best_is_cat = 0
            best_n_left = 0

            if depth < max_depth and n_node >= 2 * min_samples_leaf:
                memset(&hist_g[0], 0, n_features * BIN_STRIDE * sizeof(double))
                memset(&hist_n[0], 0, n_features * BIN_STRIDE * sizeof(long long))
                for i in range(start, end):
                    r = rows_buf[i]
                    g = grad[r]
                    for j in range(n_features):
                        base = j * BIN_STRIDE + binned[r, j]
                        hist_g[base] += g
                        hist_n[base] += 1

                parent_term = g_total * g_total / <double> n_node

                for j in range(n_features):
                    nb = n_bins[j]
                    if nb < 2:
                        continue
                    base = j * BIN_STRIDE
                    miss_n = hist_n[base + nb]
                    miss_g = hist_g[base + nb]

                    if is_categorical[j]:
                        n_nonempty = 0
                        for b in range(nb):
                            if hist_n[base + b] > 0:
                                cat_means[n_nonempty] = hist_g[base + b] / <double> hist_n[base + b]
                                cat_bins[n_nonempty] = <int> b
                                n_nonempty += 1
                        if n_nonempty < 2:
                            continue
                        # insertion sort by (mean asc, bin id asc); matches lexsort
                        for k in range(1, n_nonempty):
                            m_k = cat_means[k]
                            bit = cat_bins[k]
                            kk = k
                            while kk > 0 and (
                                cat_means[kk - 1] > m_k
                                or (cat_means[kk - 1] == m_k and cat_bins[kk - 1] > bit)
                            ):
                                cat_means[kk] = cat_means[kk - 1]
                                cat_bins[kk] = cat_bins[kk - 1]
                                kk -= 1
                            cat_means[kk] = m_k
                            cat_bins[kk] = bit

                        nl_base = 0
                        gl_base = 0.0
                        for k in range(n_nonempty - 1):
                            nl_base += hist_n[base + cat_bins[k]]
                            gl_base += hist_g[base + cat_bins[k]]
                            # missing-left candidate first
                            nl = nl_base + miss_n
                            gl = gl_base + miss_g
                            nr = n_node - nl
                            gr = g_total - gl
                            if nl >= min_samples_leaf and nr >= min_samples_leaf:
                                cand_gain = gl * gl / <double> nl + gr * gr / <double> nr - parent_term
                                if cand_gain > best_gain:
                                    best_gain = cand_gain
                                    best_feature = <int> j
                                    best_pos = <int> k
                                    best_ml = 1
                                    best_is_cat = 1
                                    best_n_left = <int> (k + 1)
                                    for kk in range(k + 1):
                                        best_left_bins[kk] = cat_bins[kk]
                            nl = nl_base
                            gl = gl_base
                            nr = n_node - nl
                            gr = g_total - gl
                            if nl >= min_samples_leaf and nr >= min_samples_leaf:
                                cand_gain = gl * gl / <double> nl + gr * gr / <double> nr - parent_term
                                if cand_gain > best_gain:
                                    best_gain = cand_gain
                                    best_feature = <int> j
                                    best_pos = <int> k
                                    best_ml = 0
                                    best_is_cat = 1
                                    best_n_left = <int> (k + 1)
                                    for kk in range(k + 1):
                                        best_left_bins[kk] = cat_bins[kk]
                    else:
                        nl_base = 0
                        gl_base = 0.0
                        for b in range(nb - 1):
                            nl_base += hist_n[base + b]
                            gl_base += hist_g[base + b]
                            nl = nl_base + miss_n
                            gl = gl_base + miss_g
                            nr = n_node - nl
                            gr = g_total - gl
                            if nl >= min_samples_leaf and nr >= min_samples_leaf:
                                cand_gain = gl * gl / <double> nl + gr * gr / <double> nr - parent_term
                                if cand_gain > best_gain:
                                    best_gain = cand_gain
                                    best_feature = <int> j
                                    best_pos = <int> b
                                    best_ml = 1
                                    best_is_cat = 0
                            nl = nl_base
                            gl = gl_base
                            nr = n_node - nl
                            gr = g_total - gl
                            if nl >= min_samples_leaf and nr >= min_samples_leaf:
                                cand_gain = gl * gl / <double> nl + gr * gr / <double> nr - parent_term
                                if cand_gain > best_gain:
                                    best_gain = cand_gain
                                    best_feature = <int> j
                                    best_pos = <int> b
                                    best_ml = 0
                                    best_is_cat = 0

            if best_feature < 0 or best_gain <= 0.0:
                h_total = 0.0
                for i in range(start, end):
                    h_total += hess[rows_buf[i]]
                if h_total <= 0.0:
                    if g_total == 0.0:
                        v = 0.0
                    elif g_total > 0.0:
                        v = leaf_clip
                    else:
                        v = -leaf_clip
                else:
                    v = g_total / h_total
                    if v > leaf_clip:
                        v = leaf_clip
                    elif v < -leaf_clip:
                        v = -leaf_clip
                value[node_id] = v
                for i in range(start, end):
                    row_leaf[i] = node_id
                node_id += 1
                continue

            j = best_feature
            feature[node_id] = best_feature
            missing_left[node_id] = <unsigned char> best_ml
            gain[node_id] = best_gain
            nb = n_bins[j]
            miss_bin = <unsigned char> nb
            if best_is_cat:
                memset(&member[0], 0, BIN_STRIDE)
                for kk in range(best_n_left):
                    b = best_left_bins[kk]
                    member[b] = 1
                    cat_bitset[node_id, b >> 3] |= <unsigned char> (1 << (b & 7))
            else:
                split_bin[node_id] = best_pos

            n_left_count = 0
            cnt = 0
            for i in range(start, end):
                r = rows_buf[i]
                bb = binned[r, j]
                if best_is_cat:
                    cond = member[bb]
                else:
                    cond = 1 if bb <= <unsigned char> best_pos else 0
                if best_ml and bb == miss_bin:
                    cond = 1
                if cond:
                    scratch_left[n_left_count] = r
                    n_left_count += 1
                else:
                    scratch_right[cnt] = r
                    cnt += 1
            for i in range(n_left_count):
                rows_buf[start + i] = scratch_left[i]
            for i in range(cnt):
                rows_buf[start + n_left_count + i] = scratch_right[i]

            left[node_id] = n_nodes
            right[node_id] = n_nodes + 1
            node_start[n_nodes] = start
            node_end[n_nodes] = start + n_left_count
            node_depth[n_nodes] = depth + 1
            node_start[n_nodes + 1] = start + n_left_count
            node_end[n_nodes + 1] = end
            node_depth[n_nodes + 1] = depth + 1
            n_nodes += 2
            node_id += 1

    return {
        "n_nodes": n_nodes,
        "feature": feature_arr[:n_nodes],
        "split_bin": split_bin_arr[:n_nodes],
        "cat_bitset": cat_bitset_arr[:n_nodes],
        "missing_left": missing_left_arr[:n_nodes].astype(bool),
        "left": left_arr[:n_nodes],
        "right": right_arr[:n_nodes],
        "value": value_arr[:n_nodes],
        "gain": gain_arr[:n_nodes],
        "n_samples": n_samples_arr[:n_nodes],
        "rows": rows_buf_arr,
        "row_leaf": row_leaf_arr,
    }
