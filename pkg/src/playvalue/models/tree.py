"""Exact greedy squared-error regression trees.

Every node keeps, for each feature, its rows sorted by that feature's
value (feature-major ``(p, m)`` index arrays). Splitting a node partitions
those lists stably, so the sort is paid once per tree and each tree level
costs O(n p). Every threshold between consecutive distinct values is
examined. Ties resolve to the lowest feature index, then the lowest
threshold, which keeps fits deterministic.
"""

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def is_leaf(self):
        return self.feature == LEAF

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while len(rows):
            feat = self.feature[node[rows]]
            internal = feat != LEAF
            rows, feat = rows[internal], feat[internal]
            if not len(rows):
                break
            cur = node[rows]
            go_left = X[rows, feat] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "gain", "n_samples")}

    @classmethod
    def from_dict(cls, d):
        ints = ("feature", "left", "right", "n_samples")
        return cls(**{k: np.array(v, dtype=np.int64 if k in ints else float) for k, v in d.items()})


class SortedData:
    """Design matrix with its per-column sort order.

    ``order[f]`` lists row indices sorted by feature ``f``; ``tied[f]``
    tells whether that feature has repeated values anywhere.
    """

    def __init__(self, X):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.XT = np.ascontiguousarray(self.X.T)
        self.order = np.ascontiguousarray(np.argsort(self.X, axis=0, kind="stable").T, dtype=np.int32)
        sorted_values = np.take_along_axis(self.XT, self.order, axis=1)
        self.tied = (sorted_values[:, 1:] == sorted_values[:, :-1]).any(axis=1)

    @property
    def shape(self):
        return self.X.shape

    def subsample(self, rows):
        """Sorted index lists for a multiset of rows (e.g. a bootstrap draw)."""
        rows = np.asarray(rows, dtype=np.int32)
        local = np.argsort(self.X[rows], axis=0, kind="stable").T
        return np.ascontiguousarray(rows[local])


def best_split(S, g, XT, tied, min_leaf=1, features=None, chunk=8):
    """Best split of one node.

    Parameters
    ----------
    S : (p, m) int array
        Row indices of the node, sorted within each feature.
    g : (n,) array
        Targets indexed by row.
    XT : (p, n) array
        Feature-major design matrix, used to reject splits between equal
        values of the features flagged in ``tied``.
    tied : (p,) bool array
    features : array of int, optional
        Restrict the search to these feature rows of ``S``.
    chunk : int
        Features scored per pass; keeps temporaries cache-sized.

    Returns
    -------
    ``(gain, feature, position)`` or None; the split sends positions
    ``0..position`` of the chosen feature left.

    Notes
    -----
    The squared-error reduction of a split with ``k`` rows and target sum
    ``L`` on the left is ``m (L - T k / m)^2 / (k (m - k))`` for node total
    ``T``.
    """
    rows = np.arange(S.shape[0]) if features is None else np.asarray(features)
    m = S.shape[1]
    if m < 2 or m < 2 * min_leaf or len(rows) == 0:
        return None
    k = np.arange(1, m, dtype=float)
    weight = m / (k * (m - k))
    if min_leaf > 1:
        weight[: min_leaf - 1] = 0.0
        weight[m - min_leaf:] = 0.0
    frac = k / m
    total = float(g[S[rows[0]]].sum())
    best = (0.0, -1, -1)
    for start in range(0, len(rows), chunk):
        idx = rows[start:start + chunk]
        D = np.cumsum(g[S[idx, :-1]], axis=1)
        D -= total * frac
        D *= D
        D *= weight
        t = np.flatnonzero(tied[idx])
        if len(t):
            vals = np.take_along_axis(XT[idx[t]], S[idx[t]], axis=1)
            D[t] *= vals[:, 1:] > vals[:, :-1]
        flat = int(np.argmax(D))
        f, pos = divmod(flat, m - 1)
        if D[f, pos] > best[0]:
            best = (float(D[f, pos]), int(idx[f]), pos)
    if best[1] < 0:
        return None
    return best


def _partition(S, left_mask, n_left, chunk=16):
    """Stable split of every sorted row list by ``left_mask`` over row ids."""
    p, m = S.shape
    SL = np.empty((p, n_left), dtype=S.dtype)
    SR = np.empty((p, m - n_left), dtype=S.dtype)
    for a in range(0, p, chunk):
        b = min(a + chunk, p)
        s = S[a:b]
        mask = left_mask[s]
        SL[a:b] = s[mask].reshape(b - a, n_left)
        np.logical_not(mask, out=mask)
        SR[a:b] = s[mask].reshape(b - a, -1)
    return SL, SR


def build_tree(data, g, rows=None, max_depth=3, min_leaf=1, max_features=None, rng=None, min_gain=1e-12):
    """Grow one regression tree on targets ``g``.

    ``rows`` (possibly with repeats) selects the training rows; the default
    is every row of ``data``. With ``max_features`` each node searches a
    random subset of that many features drawn from ``rng``.
    """
    n, p = data.shape
    g = np.asarray(g, dtype=float)
    if rows is None:
        S, tied = data.order, data.tied
    else:
        # repeated rows tie on every feature
        S, tied = data.subsample(rows), np.ones(p, dtype=bool)
    feature, threshold, left, right, value, gains, counts = [], [], [], [], [], [], []
    scratch = np.zeros(n, dtype=bool)

    def new_node(node_rows):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(g[node_rows].mean()) if len(node_rows) else 0.0)
        gains.append(0.0)
        counts.append(len(node_rows))
        return len(feature) - 1

    stack = [(new_node(S[0]), S, 0)]
    while stack:
        node, S, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        features = None
        if max_features is not None and max_features < p:
            features = np.sort(rng.choice(p, size=max_features, replace=False))
        found = best_split(S, g, data.XT, tied, min_leaf, features)
        if found is None or found[0] <= min_gain:
            continue
        gain, f, pos = found
        feature[node], gains[node] = f, gain
        lo, hi = data.XT[f, S[f, pos]], data.XT[f, S[f, pos + 1]]
        mid = 0.5 * (lo + hi)
        threshold[node] = mid if mid < hi else lo  # adjacent floats
        left_rows, right_rows = S[f, : pos + 1], S[f, pos + 1:]
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        child_depth = depth + 1
        if max_depth is not None and child_depth >= max_depth:
            continue
        if rows is None:
            scratch[left_rows] = True
            SL, SR = _partition(S, scratch, pos + 1)
            scratch[left_rows] = False
        else:
            # bootstrap draws repeat rows; split by value instead of row id
            go_left = data.XT[f] <= threshold[node]
            SL, SR = _partition(S, go_left, pos + 1)
        stack.append((right[node], SR, child_depth))
        stack.append((left[node], SL, child_depth))
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        gain=np.array(gains, dtype=float),
        n_samples=np.array(counts, dtype=np.int64),
    )
