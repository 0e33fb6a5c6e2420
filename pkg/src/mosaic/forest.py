"""Regression forest kernels (CART, variance-reduction splits).

Trees are stored as flat per-tree node arrays. Node ``k`` of tree ``t`` is a
leaf when ``feature[t, k] < 0``; otherwise samples with
``x[feature] <= threshold`` go to ``left``.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _leaf_mean(y, idx, start, end):
    y0 = y[idx[start]]
    lo = y0
    hi = y0
    acc = 0.0
    for p in range(start, end):
        v = y[idx[p]]
        acc += v - y0
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    m = y0 + acc / (end - start)
    # rounding must not leave the hull of the leaf targets
    if m < lo:
        m = lo
    if m > hi:
        m = hi
    return m, lo, hi


@njit(cache=True)
def _rank_columns(X):
    """Dense per-column ranks of ``X`` plus the sorted distinct values of each column."""
    n, d = X.shape
    ranks = np.empty((n, d), dtype=np.int32)
    uniques = np.empty(n * d)
    offsets = np.empty(d, dtype=np.int64)
    n_unique = np.empty(d, dtype=np.int64)
    pos = 0
    for f in range(d):
        order = np.argsort(X[:, f], kind="mergesort")
        r = -1
        prev = 0.0
        for p in range(n):
            v = X[order[p], f]
            if p == 0 or v != prev:
                r += 1
                uniques[pos + r] = v
                prev = v
            ranks[order[p], f] = r
        offsets[f] = pos
        n_unique[f] = r + 1
        pos += r + 1
    return ranks, uniques, offsets, n_unique


@njit(cache=True)
def _midpoint(a, b):
    thr = a + (b - a) / 2.0
    if thr >= b:
        thr = a
    return thr


@njit(cache=True)
def _best_split(ranks, uniques, offset, n_unique, y, idx, start, end, f, min_leaf, total,
                cnt, sums, keys, ys):
    """Best variance-reduction split of node samples on feature ``f``.

    Returns (constant, found, score, threshold) where score is
    sum_left^2/n_left + sum_right^2/n_right.
    """
    size = end - start
    best = -1.0
    best_thr = 0.0
    found = False
    # cheap exit for columns constant in the node (inactive slots, decided steps)
    r0 = ranks[idx[start], f]
    same = True
    for p in range(start + 1, end):
        if ranks[idx[p], f] != r0:
            same = False
            break
    if same:
        return True, False, best, best_thr
    if n_unique <= 4 * size or size > 64:
        for r in range(n_unique):
            cnt[r] = 0
            sums[r] = 0.0
        for p in range(start, end):
            r = ranks[idx[p], f]
            cnt[r] += 1
            sums[r] += y[idx[p]]
        n_left = 0
        s_left = 0.0
        prev = -1
        distinct = 0
        for r in range(n_unique):
            if cnt[r] == 0:
                continue
            distinct += 1
            if prev >= 0 and n_left >= min_leaf and size - n_left >= min_leaf:
                s_right = total - s_left
                score = s_left * s_left / n_left + s_right * s_right / (size - n_left)
                if score > best:
                    best = score
                    best_thr = _midpoint(uniques[offset + prev], uniques[offset + r])
                    found = True
            n_left += cnt[r]
            s_left += sums[r]
            prev = r
        return distinct <= 1, found, best, best_thr
    # small node: insertion sort of (rank, target) pairs, no allocation
    for p in range(size):
        k = ranks[idx[start + p], f]
        v = y[idx[start + p]]
        q = p - 1
        while q >= 0 and keys[q] > k:
            keys[q + 1] = keys[q]
            ys[q + 1] = ys[q]
            q -= 1
        keys[q + 1] = k
        ys[q + 1] = v
    if keys[0] == keys[size - 1]:
        return True, False, best, best_thr
    s_left = 0.0
    for p in range(1, size):
        s_left += ys[p - 1]
        if p < min_leaf or size - p < min_leaf:
            continue
        a = keys[p - 1]
        b = keys[p]
        if a == b:
            continue
        s_right = total - s_left
        score = s_left * s_left / p + s_right * s_right / (size - p)
        if score > best:
            best = score
            best_thr = _midpoint(uniques[offset + a], uniques[offset + b])
            found = True
    return False, found, best, best_thr


@njit(cache=True)
def fit_forest(X, y, n_trees, min_leaf, max_features, seed, bootstrap):
    n, d = X.shape
    ranks, uniques, offsets, n_unique = _rank_columns(X)
    max_nodes = 2 * n + 1
    feature = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    threshold = np.zeros((n_trees, max_nodes))
    left = np.zeros((n_trees, max_nodes), dtype=np.int32)
    right = np.zeros((n_trees, max_nodes), dtype=np.int32)
    value = np.zeros((n_trees, max_nodes))
    count = np.zeros((n_trees, max_nodes), dtype=np.int32)
    cnt = np.empty(n, dtype=np.int64)
    sums = np.empty(n)
    keys = np.empty(n, dtype=np.int32)
    ys = np.empty(n)
    perm = np.arange(d)
    stack = np.empty((max_nodes, 3), dtype=np.int64)
    for t in range(n_trees):
        np.random.seed(seed + t)
        if bootstrap:
            idx = np.random.randint(0, n, n)
        else:
            idx = np.arange(n)
        n_nodes = 1
        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = n
        top = 1
        while top > 0:
            top -= 1
            node = stack[top, 0]
            start = stack[top, 1]
            end = stack[top, 2]
            size = end - start
            mean, lo, hi = _leaf_mean(y, idx, start, end)
            value[t, node] = mean
            count[t, node] = size
            if size < 2 * min_leaf or not lo < hi:
                continue
            total = 0.0
            for p in range(start, end):
                total += y[idx[p]]
            parent_score = total * total / size
            # partial Fisher-Yates: features are drawn without replacement on demand
            tried = 0
            best_f = -1
            best_score = 0.0
            best_thr = 0.0
            for q in range(d):
                if tried >= max_features:
                    break
                pick = q + np.random.randint(0, d - q)
                tmp = perm[q]
                perm[q] = perm[pick]
                perm[pick] = tmp
                f = perm[q]
                constant, found, score, thr = _best_split(
                    ranks, uniques, offsets[f], n_unique[f], y, idx, start, end, f, min_leaf, total,
                    cnt, sums, keys, ys)
                if constant:
                    continue
                tried += 1
                if found and (best_f < 0 or score > best_score):
                    best_f = f
                    best_score = score
                    best_thr = thr
            if best_f < 0 or not best_score - parent_score > 1e-12:
                continue
            i = start
            j = end - 1
            while i <= j:
                if X[idx[i], best_f] <= best_thr:
                    i += 1
                else:
                    tmp2 = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp2
                    j -= 1
            feature[t, node] = best_f
            threshold[t, node] = best_thr
            left[t, node] = n_nodes
            right[t, node] = n_nodes + 1
            stack[top, 0] = n_nodes
            stack[top, 1] = start
            stack[top, 2] = i
            top += 1
            stack[top, 0] = n_nodes + 1
            stack[top, 1] = i
            stack[top, 2] = end
            top += 1
            n_nodes += 2
    return feature, threshold, left, right, value, count


@njit(cache=True)
def tree_predictions(X, feature, threshold, left, right, value):
    m = X.shape[0]
    n_trees = feature.shape[0]
    out = np.empty((m, n_trees))
    for r in range(m):
        for t in range(n_trees):
            k = 0
            while feature[t, k] >= 0:
                if X[r, feature[t, k]] <= threshold[t, k]:
                    k = left[t, k]
                else:
                    k = right[t, k]
            out[r, t] = value[t, k]
    return out


@njit(cache=True)
def aggregate(per_tree):
    """Mean and population variance across trees, mean clipped to the per-tree hull."""
    m, n_trees = per_tree.shape
    means = np.empty(m)
    variances = np.empty(m)
    for r in range(m):
        p0 = per_tree[r, 0]
        lo = p0
        hi = p0
        acc = 0.0
        for t in range(n_trees):
            v = per_tree[r, t]
            acc += v - p0
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        mu = p0 + acc / n_trees
        if mu < lo:
            mu = lo
        if mu > hi:
            mu = hi
        ss = 0.0
        for t in range(n_trees):
            diff = per_tree[r, t] - mu
            ss += diff * diff
        means[r] = mu
        variances[r] = ss / n_trees
    return means, variances
