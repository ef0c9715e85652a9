"""Random-tree ensemble generator with whole-distribution and fill-in modes.

Each tree is grown on a bootstrap sample by picking a random feature and a
random cut at every node.  To generate a row we walk a randomly chosen tree
from the root, choosing branches in proportion to how much training data went
each way, and at the leaf draw each still unassigned feature tested on the
path from the leaf's empirical values.  The walk can hop to another random
tree (constrained by what is already assigned) before the remaining features
are drawn from the last leaf.  Fill-in keeps the given coordinates fixed and
routes through them deterministically; branches on hidden features are then
weighted by the kernel mass of leaf members close to the fixed values, and
the donor row is drawn by the same weights, so the fill is conditional on
the fixed coordinates rather than only on those tested above the split.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..data import Dataset
from .base import AROUND, FILL_IN, WHOLE, Generator, as_rng, derive_seed


class _TreeBuilder:
    def __init__(self, data, is_cat, n_levels, min_leaf, rng):
        self.data = data
        self.is_cat = is_cat
        self.n_levels = n_levels
        self.min_leaf = min_leaf
        self.rng = rng
        self.feature, self.threshold, self.catmask = [], [], []
        self.left, self.right, self.n_left, self.n_right = [], [], [], []
        self.leaf_start, self.leaf_len, self.members = [], [], []

    def _new_node(self):
        for lst, v in ((self.feature, -1), (self.threshold, 0.0), (self.catmask, 0), (self.left, -1),
                       (self.right, -1), (self.n_left, 0), (self.n_right, 0), (self.leaf_start, 0),
                       (self.leaf_len, 0)):
            lst.append(v)
        return len(self.feature) - 1

    def _try_split(self, idx):
        p = self.data.shape[1]
        for f in self.rng.permutation(p):
            vals = self.data[idx, f]
            if self.is_cat[f]:
                present = np.unique(vals).astype(int)
                if len(present) < 2:
                    continue
                for _ in range(8):
                    pick = self.rng.random(len(present)) < 0.5
                    if pick.all() or not pick.any():
                        continue
                    go_left = np.isin(vals.astype(int), present[pick])
                    nl = int(go_left.sum())
                    if nl >= self.min_leaf and len(idx) - nl >= self.min_leaf:
                        mask = int(np.sum(np.left_shift(1, present[pick].astype(np.int64))))
                        return f, 0.0, mask, go_left
            else:
                uniq, counts = np.unique(vals, return_counts=True)
                if len(uniq) < 2:
                    continue
                cum = np.cumsum(counts)[:-1]
                ok = np.flatnonzero((cum >= self.min_leaf) & (len(idx) - cum >= self.min_leaf))
                if len(ok) == 0:
                    continue
                k = ok[self.rng.integers(len(ok))]
                thr = float(self.rng.uniform(uniq[k], uniq[k + 1]))
                if not uniq[k] <= thr < uniq[k + 1]:
                    thr = float(uniq[k])
                return f, thr, 0, vals <= thr
        return None

    def grow(self, idx):
        node = self._new_node()
        split = self._try_split(idx) if len(idx) >= 2 * self.min_leaf else None
        if split is None:
            self.leaf_start[node] = len(self.members)
            self.leaf_len[node] = len(idx)
            self.members.extend(int(i) for i in idx)
            return node
        f, thr, mask, go_left = split
        self.feature[node] = int(f)
        self.threshold[node] = thr
        self.catmask[node] = mask
        self.n_left[node] = int(go_left.sum())
        self.n_right[node] = int((~go_left).sum())
        self.left[node] = self.grow(idx[go_left])
        self.right[node] = self.grow(idx[~go_left])
        return node


_ARRAYS = ("feature", "threshold", "catmask", "left", "right", "n_left", "n_right", "leaf_start", "leaf_len")


class TreeEnsembleGenerator(Generator):
    """Random-tree density model supporting whole, around and fill-in generation.

    ``mode="whole"`` is the plain TreeEnsemble generator; ``mode="around"``
    (registered as ``treeEnsFillIn``) generates near the explained instance by
    re-drawing a random subset of its features conditional on the rest.
    """

    capabilities = frozenset({WHOLE, AROUND, FILL_IN})

    def __init__(self, tree_count: int = 50, min_leaf: int = 5, hops: int = 1,
                 seed: int = 0, mode: str = WHOLE):
        super().__init__(mode)
        if tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        self.tree_count = tree_count
        self.min_leaf = min_leaf
        self.hops = hops
        self.seed = seed

    @property
    def name(self):
        return "treeEnsFillIn" if self.mode == AROUND else "treeEns"

    def with_mode(self, mode: str) -> "TreeEnsembleGenerator":
        other = object.__new__(TreeEnsembleGenerator)
        other.__dict__.update(self.__dict__)
        other.mode = mode
        return other

    def _fit(self, ds: Dataset):
        rng = as_rng(self.seed)
        self.data = np.ascontiguousarray(ds.X, dtype=float)
        self.is_cat = ds.schema.categorical_mask.copy()
        n = len(self.data)
        builder = _TreeBuilder(self.data, self.is_cat, ds.schema.n_levels, self.min_leaf, rng)
        roots = []
        for _ in range(self.tree_count):
            boot = rng.integers(0, n, size=n)
            roots.append(builder.grow(boot))
        self._set_arrays({k: getattr(builder, k) for k in _ARRAYS}, builder.members, roots)

    def _set_arrays(self, arrays, members, roots):
        for k in _ARRAYS:
            dtype = float if k == "threshold" else np.int64
            setattr(self, "_" + k, np.asarray(arrays[k], dtype=dtype))
        self._members = np.asarray(members, dtype=np.int64)
        self._bw = None
        self._roots = np.asarray(roots, dtype=np.int64)
        self._tree_end = np.append(self._roots[1:], len(self._feature)).astype(np.int64)

    def _bandwidth(self) -> np.ndarray:
        """Silverman bandwidth per numeric column (unused for categoricals)."""
        if getattr(self, "_bw", None) is None:
            sd = self.data.std(axis=0)
            bw = 1.06 * np.where(sd > 0, sd, 1.0) * len(self.data) ** -0.2
            self._bw = np.where(self.is_cat, 1.0, bw)
        return self._bw

    @property
    def node_count(self) -> int:
        return len(self._feature)

    def fill_in_batch(self, x, hidden_masks, seed=None):
        self._check(FILL_IN)
        masks = np.asarray(hidden_masks, dtype=bool)
        x = np.asarray(x, dtype=float)
        return self._run(np.broadcast_to(x, masks.shape).copy(), ~masks, as_rng(seed))

    def generate(self, count, seed=None):
        self._check(WHOLE)
        p = len(self.schema.inputs)
        count = max(int(count), 0)
        return self._run(np.zeros((count, p)), np.zeros((count, p), dtype=bool), as_rng(seed))

    def generate_around(self, x, count, seed=None):
        self._check(AROUND)
        rng = as_rng(seed)
        return self.fill_in_batch(x, random_masks(rng, count, len(self.schema.inputs)), rng)

    def _run(self, X, fixed, rng):
        if len(X) == 0:
            return X
        tree_seq = rng.integers(0, self.tree_count, size=(len(X), self.hops + 1)).astype(np.int64)
        X = np.ascontiguousarray(X)
        _kernels.ensemble_fill(
            X, np.ascontiguousarray(fixed), tree_seq, self._roots, self._tree_end,
            self._feature, self._threshold, self._catmask, self._left, self._right,
            self._n_left, self._n_right, self._leaf_start, self._leaf_len, self._members,
            self.data, self.is_cat, self._bandwidth(), derive_seed(rng),
        )
        return X

    # ------------------------------------------------------------ serialization

    def _node_json(self, node):
        if self._left[node] == -1:
            s, n = self._leaf_start[node], self._leaf_len[node]
            return {"members": self._members[s:s + n].tolist()}
        out = {"feature": int(self._feature[node])}
        if self.is_cat[self._feature[node]]:
            mask = int(self._catmask[node])
            out["levels_left"] = [b for b in range(63) if mask >> b & 1]
        else:
            out["threshold"] = float(self._threshold[node])
        out["n_left"] = int(self._n_left[node])
        out["n_right"] = int(self._n_right[node])
        out["left"] = self._node_json(self._left[node])
        out["right"] = self._node_json(self._right[node])
        return out

    def to_json(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "tree_count": self.tree_count,
            "min_leaf": self.min_leaf,
            "hops": self.hops,
            "seed": self.seed,
            "data": self.data.tolist(),
            "trees": [self._node_json(int(r)) for r in self._roots],
        }

    def load_trees(self, data, trees):
        self.data = np.ascontiguousarray(data, dtype=float)
        self.is_cat = self.schema.categorical_mask.copy()
        arrays = {k: [] for k in _ARRAYS}
        members, roots = [], []

        def add(rec):
            node = len(arrays["feature"])
            for k, v in (("feature", -1), ("threshold", 0.0), ("catmask", 0), ("left", -1), ("right", -1),
                         ("n_left", 0), ("n_right", 0), ("leaf_start", 0), ("leaf_len", 0)):
                arrays[k].append(v)
            if "members" in rec:
                arrays["leaf_start"][node] = len(members)
                arrays["leaf_len"][node] = len(rec["members"])
                members.extend(rec["members"])
                return node
            arrays["feature"][node] = rec["feature"]
            if "levels_left" in rec:
                arrays["catmask"][node] = sum(1 << b for b in rec["levels_left"])
            else:
                arrays["threshold"][node] = rec["threshold"]
            arrays["n_left"][node] = rec["n_left"]
            arrays["n_right"][node] = rec["n_right"]
            arrays["left"][node] = add(rec["left"])
            arrays["right"][node] = add(rec["right"])
            return node

        for t in trees:
            roots.append(add(t))
        self._set_arrays(arrays, members, roots)


def random_masks(rng: np.random.Generator, count: int, p: int) -> np.ndarray:
    """Bernoulli(1/2) hide-masks with at least one hidden feature per row."""
    masks = rng.random((count, p)) < 0.5
    empty = ~masks.any(axis=1)
    masks[np.flatnonzero(empty), rng.integers(0, p, size=int(empty.sum()))] = True
    return masks
