"""Compiled inner loops for tree traversal."""

import numpy as np
from numba import njit


@njit(cache=True)
def forest_proba(X, feature, threshold, left, right, value, roots, out):
    n = X.shape[0]
    n_trees = roots.shape[0]
    n_cls = value.shape[1]
    for i in range(n):
        for c in range(n_cls):
            out[i, c] = 0.0
        for t in range(n_trees):
            node = roots[t]
            while left[node] != -1:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(n_cls):
                out[i, c] += value[node, c]
        for c in range(n_cls):
            out[i, c] /= n_trees


@njit(cache=True)
def _goes_left(v, feat, thr, catmask, is_cat):
    if is_cat[feat]:
        return (catmask >> np.int64(v)) & 1 == 1
    return v <= thr


@njit(cache=True)
def _member_weight(x, assigned, m, data, is_cat, bandwidth):
    """Kernel similarity of training row ``m`` to ``x`` on the assigned features."""
    d2 = 0.0
    for f in range(x.shape[0]):
        if assigned[f]:
            if is_cat[f]:
                if data[m, f] != x[f]:
                    return 0.0
            else:
                z = (data[m, f] - x[f]) / bandwidth[f]
                d2 += z * z
    return np.exp(-0.5 * d2)


@njit(cache=True)
def _consistent_mass(root, end, x, assigned, feature, threshold, catmask, left, right,
                     leaf_start, leaf_len, members, data, is_cat, bandwidth, mass):
    """Kernel mass of each subtree's leaves reachable given the assigned values.

    Nodes of a tree are stored in preorder, so children follow their parent
    and a reverse sweep sees both children before the parent.
    """
    for node in range(end - 1, root - 1, -1):
        if left[node] == -1:
            acc = 0.0
            for k in range(leaf_start[node], leaf_start[node] + leaf_len[node]):
                acc += _member_weight(x, assigned, members[k], data, is_cat, bandwidth)
            mass[node] = acc
        else:
            f = feature[node]
            if assigned[f]:
                if _goes_left(x[f], f, threshold[node], catmask[node], is_cat):
                    mass[node] = mass[left[node]]
                else:
                    mass[node] = mass[right[node]]
            else:
                mass[node] = mass[left[node]] + mass[right[node]]


@njit(cache=True)
def _pick_member(start, cnt, x, assigned, members, data, is_cat, bandwidth, weighted):
    if weighted:
        tot = 0.0
        for k in range(start, start + cnt):
            tot += _member_weight(x, assigned, members[k], data, is_cat, bandwidth)
        if tot > 0.0:
            u = np.random.random() * tot
            for k in range(start, start + cnt):
                u -= _member_weight(x, assigned, members[k], data, is_cat, bandwidth)
                if u < 0.0:
                    return members[k]
            return members[start + cnt - 1]
    return members[start + np.random.randint(cnt)]


@njit(cache=True)
def ensemble_fill(
    X,          # (n, p) output codes; fixed coordinates already set
    fixed,      # (n, p) bool, True where the value must be kept
    tree_seq,   # (n, hops+1) index of tree used at each hop
    roots,      # (n_trees,)
    tree_end,   # (n_trees,) one past the last node of each tree
    feature, threshold, catmask, left, right, n_left, n_right,
    leaf_start, leaf_len, members, data, is_cat, bandwidth, seed,
):
    np.random.seed(seed)
    n, p = X.shape
    hops = tree_seq.shape[1]
    assigned = np.empty(p, dtype=np.bool_)
    on_path = np.empty(p, dtype=np.bool_)
    mass = np.zeros(feature.shape[0], dtype=np.float64)
    for i in range(n):
        any_assigned = False
        for j in range(p):
            assigned[j] = fixed[i, j]
            any_assigned = any_assigned or assigned[j]
        leaf = -1
        for h in range(hops):
            t = tree_seq[i, h]
            node = roots[t]
            weighted = False
            if any_assigned:
                # branch by kernel mass of leaf members near the assigned values
                _consistent_mass(node, tree_end[t], X[i], assigned, feature, threshold, catmask, left, right,
                                 leaf_start, leaf_len, members, data, is_cat, bandwidth, mass)
                weighted = mass[node] > 0.0
            for j in range(p):
                on_path[j] = False
            while left[node] != -1:
                f = feature[node]
                on_path[f] = True
                if assigned[f]:
                    if _goes_left(X[i, f], f, threshold[node], catmask[node], is_cat):
                        node = left[node]
                    else:
                        node = right[node]
                else:
                    if weighted:
                        wl = mass[left[node]]
                        tot = wl + mass[right[node]]
                    else:
                        wl = n_left[node]
                        tot = n_left[node] + n_right[node]
                    if np.random.random() * tot < wl:
                        node = left[node]
                    else:
                        node = right[node]
            leaf = node
            last = h == hops - 1
            start = leaf_start[leaf]
            cnt = leaf_len[leaf]
            # features tested on the path come jointly from one leaf member
            donor = _pick_member(start, cnt, X[i], assigned, members, data, is_cat, bandwidth, weighted)
            for j in range(p):
                if not assigned[j] and on_path[j]:
                    X[i, j] = data[donor, j]
                    assigned[j] = True
                    any_assigned = True
            if last:
                for j in range(p):
                    if not assigned[j]:
                        r = members[start + np.random.randint(cnt)]
                        X[i, j] = data[r, j]
                        assigned[j] = True
