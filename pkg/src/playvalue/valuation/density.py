"""Conditional density of the end-of-play yard line from a regression forest.

Each tree is grown on a bootstrap draw with the end yard line as the
regression target. For a query, every training row that shares a leaf with
the query in a tree gets weight ``1 / (trees * leaf size)``; the density is
the weighted mixture of Gaussian kernels centred on those rows' yard lines,
integrated over unit bins around the integers 0..110 and renormalized.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..field import MAX_YARDLINE
from ..models.tree import SortedData, Tree, build_tree

GRID = np.arange(int(MAX_YARDLINE) + 1)
BANDWIDTH_FLOOR = 0.5


@dataclass(frozen=True)
class YardlineDensity:
    """Probability mass over integer end yard lines 0..110."""

    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != GRID.shape or np.any(m < 0) or abs(math.fsum(m) - 1.0) > 1e-9:
            raise ValueError("yard-line density must be a nonnegative mass vector over 0..110 summing to 1")

    @property
    def mean(self):
        return math.fsum(GRID * self.mass)

    @property
    def mode(self):
        return int(np.argmax(self.mass))

    @property
    def entropy(self):
        m = self.mass[self.mass > 0]
        return float(-np.sum(m * np.log(m)))

    def quantile(self, q):
        return int(np.searchsorted(np.cumsum(self.mass), q - 1e-12))

    def sample(self, size, rng):
        return rng.choice(GRID, size=size, p=self.mass / self.mass.sum())

    def summary(self):
        return {"mean": self.mean, "mode": self.mode, "entropy": self.entropy}


def density_modes(density, min_mass=0.01, min_separation=3):
    """Local maxima of a yard-line density, largest first.

    A grid point is a mode if it is at least as large as every point within
    ``min_separation`` yards and its mass exceeds ``min_mass``.
    """
    m = np.asarray(getattr(density, "mass", density), dtype=float)
    modes = []
    for y in range(len(m)):
        lo, hi = max(0, y - min_separation), min(len(m), y + min_separation + 1)
        if m[y] >= min_mass and m[y] >= m[lo:hi].max() and not any(abs(y - z) <= min_separation for z in modes):
            modes.append(y)
    return sorted(modes, key=lambda y: (-m[y], y))


def silverman_bandwidth(values, weights):
    """Weighted Silverman rule, ``0.9 min(sd, IQR/1.34) n_eff^(-1/5)``."""
    w = weights / weights.sum()
    mean = np.sum(w * values)
    sd = math.sqrt(max(np.sum(w * (values - mean) ** 2), 0.0))
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(w[order])
    q1 = values[order][np.searchsorted(cw, 0.25)]
    q3 = values[order][min(np.searchsorted(cw, 0.75), len(values) - 1)]
    spread = min(sd, (q3 - q1) / 1.34) if q3 > q1 else sd
    n_eff = 1.0 / np.sum(w * w)
    return 0.9 * spread * n_eff ** (-0.2)


def kernel_mass(values, weights, bandwidth):
    """Gaussian-kernel mixture integrated over unit bins on the yard grid.

    The first and last bins absorb the tails, so no mass leaves the grid.
    """
    edges = np.concatenate([[-np.inf], GRID[:-1] + 0.5, [np.inf]])
    cdf = ndtr((edges[None, :] - values[:, None]) / bandwidth)
    per_row = np.diff(cdf, axis=1)
    mass = weights @ per_row
    mass = np.maximum(mass, 0.0)
    return mass / math.fsum(mass)


class DensityForest:
    """Random-forest conditional density estimator for end yard lines.

    Parameters
    ----------
    n_trees : int
    min_leaf : int
        Minimum training rows per leaf; guarantees no empty leaves.
    max_depth : int or None
    max_features : int, float or None
        Features searched per split: a count, a fraction of all features,
        or all of them.
    bandwidth : float or None
        Fixed kernel bandwidth; by default Silverman's rule on the co-leaf
        samples with a floor of ``BANDWIDTH_FLOOR`` yards.
    seed : int
    """

    def __init__(self, n_trees=50, min_leaf=20, max_depth=None, max_features=1 / 3, bandwidth=None,
                 bandwidth_floor=BANDWIDTH_FLOOR, bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.max_features = max_features
        self.bandwidth = bandwidth
        self.bandwidth_floor = bandwidth_floor
        self.bootstrap = bootstrap
        self.seed = seed
        self.columns = None

    def _n_features(self, p):
        mf = self.max_features
        if mf is None:
            return p
        if isinstance(mf, float) and mf <= 1.0:
            return max(1, int(round(mf * p)))
        return max(1, min(int(mf), p))

    def fit(self, X, yardline, columns=None):
        X = np.asarray(X, dtype=float)
        yardline = np.asarray(yardline, dtype=float)
        n, p = X.shape
        if n == 0:
            raise ValueError("density forest needs training rows")
        self.columns = tuple(columns) if columns is not None else None
        rng = np.random.default_rng(self.seed)
        data = SortedData(X)
        k = self._n_features(p)
        self.trees = []
        leaves = []
        for _ in range(self.n_trees):
            rows = rng.integers(0, n, size=n) if self.bootstrap else None
            tree = build_tree(data, yardline, rows=rows, max_depth=self.max_depth, min_leaf=self.min_leaf,
                              max_features=k, rng=rng)
            self.trees.append(tree)
            leaves.append(tree.apply(X))
        self.train_y = yardline
        self.train_leaves = np.array(leaves)  # (trees, n)
        self._build_index()
        return self

    def _build_index(self):
        # per tree: training rows grouped by leaf, with each node's slice bounds
        self._index = []
        for t, tree in enumerate(self.trees):
            order = np.argsort(self.train_leaves[t], kind="stable")
            ids = self.train_leaves[t][order]
            nodes = np.arange(tree.n_nodes)
            self._index.append((order, np.searchsorted(ids, nodes, "left"), np.searchsorted(ids, nodes, "right")))

    def weights(self, x):
        """Training-row weights for one query row; they sum to 1.

        Every training row lands in some leaf of every tree, and each leaf
        holds at least one training row, so each tree contributes mass 1.
        """
        x = np.asarray(x, dtype=float).reshape(1, -1)
        w = np.zeros(len(self.train_y))
        for t, tree in enumerate(self.trees):
            leaf = int(tree.apply(x)[0])
            order, starts, stops = self._index[t]
            members = order[starts[leaf]:stops[leaf]]
            w[members] += 1.0 / len(members)
        return w / self.n_trees

    def estimate(self, x):
        """``YardlineDensity`` for one feature row."""
        w = self.weights(x)
        keep = w > 0
        vals, w = self.train_y[keep], w[keep]
        h = self.bandwidth
        if h is None:
            h = max(silverman_bandwidth(vals, w), self.bandwidth_floor)
        return YardlineDensity(kernel_mass(vals, w, h))

    def estimate_many(self, X):
        return [self.estimate(x) for x in np.asarray(X, dtype=float)]

    def state(self):
        return {
            "n_trees": self.n_trees, "min_leaf": self.min_leaf, "max_depth": self.max_depth,
            "max_features": self.max_features, "bandwidth": self.bandwidth,
            "bandwidth_floor": self.bandwidth_floor, "bootstrap": self.bootstrap, "seed": self.seed,
            "columns": list(self.columns) if self.columns else None,
            "trees": [t.to_dict() for t in self.trees],
            "train_y": self.train_y.tolist(),
            "train_leaves": self.train_leaves.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        m = cls(state["n_trees"], state["min_leaf"], state["max_depth"], state["max_features"],
                state["bandwidth"], state["bandwidth_floor"], state["bootstrap"], state["seed"])
        m.columns = tuple(state["columns"]) if state["columns"] else None
        m.trees = [Tree.from_dict(t) for t in state["trees"]]
        m.train_y = np.array(state["train_y"], dtype=float)
        m.train_leaves = np.array(state["train_leaves"], dtype=np.int64)
        m._build_index()
        return m


def fit_yardline_density(X, end_yardlines, seed=0, columns=None, **forest_config):
    """Fit a ``DensityForest`` on feature rows and their end yard lines."""
    return DensityForest(seed=seed, **forest_config).fit(X, end_yardlines, columns)
