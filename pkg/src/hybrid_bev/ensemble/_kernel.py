"""Compiled CART growth and routing.

Rows are kept presorted per feature (``order[f]`` lists row indices in
ascending order of feature ``f``); each node owns a contiguous segment of
every ``order[f]``, and a split stably partitions all segments, so no node
below the root is ever re-sorted.
"""

import numpy as np
from numba import njit

_NO_SPLIT = -1.0


@njit(cache=True, nogil=True)
def _candidate_features(X, order, start, end, n_features, n_try):
    """Random features (ascending index) that are not constant in the node.

    Features are visited in a random permutation; constant ones are skipped
    and do not count toward ``n_try``.
    """
    perm = np.random.permutation(n_features)
    chosen = np.empty(n_try, dtype=np.int64)
    k = 0
    for f in perm:
        if k >= n_try:
            break
        if X[order[f, start], f] < X[order[f, end - 1], f]:
            chosen[k] = f
            k += 1
    return np.sort(chosen[:k])


@njit(cache=True, nogil=True)
def _best_split(X, y, order, start, end, n_try, min_leaf):
    """Best SSE-reducing split of a node.

    Returns ``(gain, feature, n_left, threshold)``; ``gain`` is negative when
    the node cannot be split.  Ties go to the lower feature index, then the
    lower threshold.
    """
    m = end - start
    if m < 2 * min_leaf or m < 2:
        return _NO_SPLIT, -1, -1, 0.0
    base = order[0]
    ymin = y[base[start]]
    ymax = ymin
    total = 0.0
    for i in range(start, end):
        v = y[base[i]]
        total += v
        if v < ymin:
            ymin = v
        if v > ymax:
            ymax = v
    if ymin == ymax:
        return _NO_SPLIT, -1, -1, 0.0
    mean = total / m
    centred_total = 0.0
    for i in range(start, end):
        centred_total += y[base[i]] - mean
    parent = centred_total * centred_total / m

    features = _candidate_features(X, order, start, end, X.shape[1], n_try)
    best_gain = _NO_SPLIT
    best_f = -1
    best_left = -1
    best_thr = 0.0
    for f in features:
        seg = order[f]
        s_left = 0.0
        for i in range(start, end - 1):
            s_left += y[seg[i]] - mean
            n_left = i - start + 1
            if n_left < min_leaf:
                continue
            n_right = m - n_left
            if n_right < min_leaf:
                break
            xa = X[seg[i], f]
            xb = X[seg[i + 1], f]
            if xa == xb:
                continue
            s_right = centred_total - s_left
            gain = s_left * s_left / n_left + s_right * s_right / n_right - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_left = n_left
                thr = 0.5 * (xa + xb)
                if thr >= xb:
                    thr = xa
                best_thr = thr
    if best_gain <= 0.0:
        return _NO_SPLIT, -1, -1, 0.0
    return best_gain, best_f, best_left, best_thr


@njit(cache=True, nogil=True)
def grow_tree(X, y, order, n_try, max_splits, min_leaf, seed):
    """Grow one regression tree.

    ``order`` is modified in place.  ``max_splits < 0`` grows the tree to
    full extent (breadth first); otherwise leaves are split best-first
    until ``max_splits`` splits are made.
    """
    np.random.seed(seed)
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    seg_start = np.zeros(cap, dtype=np.int64)
    seg_end = np.zeros(cap, dtype=np.int64)
    cand_gain = np.full(cap, _NO_SPLIT)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_left = np.zeros(cap, dtype=np.int64)
    cand_thr = np.zeros(cap)

    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)

    def _open(node, start, end, key, search):
        seg_start[node] = start
        seg_end[node] = end
        count[node] = end - start
        s = 0.0
        for i in range(start, end):
            s += y[order[key, i]]
        mean = s / (end - start)
        # one correction pass keeps the mean of a constant block exact
        c = 0.0
        for i in range(start, end):
            c += y[order[key, i]] - mean
        value[node] = mean + c / (end - start)
        if not search:
            return
        g, f, nl, thr = _best_split(X, y, order, start, end, n_try, min_leaf)
        cand_gain[node] = g
        cand_f[node] = f
        cand_left[node] = nl
        cand_thr[node] = thr

    _open(0, 0, n, 0, max_splits != 0)
    n_nodes = 1
    splits = 0
    cursor = 0
    while max_splits < 0 or splits < max_splits:
        if max_splits < 0:
            node = -1
            while cursor < n_nodes:
                if cand_gain[cursor] > 0.0:
                    node = cursor
                    cursor += 1
                    break
                cursor += 1
        else:
            node = -1
            best = 0.0
            for k in range(n_nodes):
                if left[k] == -1 and cand_gain[k] > best:
                    best = cand_gain[k]
                    node = k
        if node == -1:
            break
        f = cand_f[node]
        start = seg_start[node]
        end = seg_end[node]
        mid = start + cand_left[node]
        # once the budget is spent the children stay leaves: skip the re-partition
        search = max_splits < 0 or splits + 1 < max_splits
        for i in range(start, mid):
            goes_left[order[f, i]] = True
        for i in range(mid, end):
            goes_left[order[f, i]] = False
        for g in range(p):
            if g == f or not search:
                continue
            a = start
            b = 0
            for i in range(start, end):
                r = order[g, i]
                if goes_left[r]:
                    order[g, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(b):
                order[g, a + i] = buf[i]
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = cand_thr[node]
        left[node] = lchild
        right[node] = rchild
        cand_gain[node] = _NO_SPLIT
        _open(lchild, start, mid, f, search)
        _open(rchild, mid, end, f, search)
        splits += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def route(feature, threshold, left, right, value, X):
    """Leaf value reached by every row of ``X`` (``x <= threshold`` goes left)."""
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while left[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def presort(X):
    """Per-feature row order, shape ``(n_features, n_rows)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


@njit(cache=True, nogil=True)
def resample_order(order, rows, n_source):
    """Presorted order of ``X[rows]`` derived from the presorted order of ``X``.

    ``rows`` may repeat indices (a bootstrap sample); runs in O(p * n).
    """
    p = order.shape[0]
    m = rows.size
    counts = np.zeros(n_source + 1, dtype=np.int64)
    for r in rows:
        counts[r + 1] += 1
    offsets = np.cumsum(counts)
    slots = np.empty(m, dtype=np.int64)
    fill = offsets[:-1].copy()
    for i in range(m):
        r = rows[i]
        slots[fill[r]] = i
        fill[r] += 1
    out = np.empty((p, m), dtype=np.int64)
    for f in range(p):
        k = 0
        for r in order[f]:
            for j in range(offsets[r], offsets[r + 1]):
                out[f, k] = slots[j]
                k += 1
    return out
