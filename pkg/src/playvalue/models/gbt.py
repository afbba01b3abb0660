"""Gradient-boosted regression trees for squared-error loss."""

import numpy as np

from .base import GBT, EmptyTrainingSet
from .tree import SortedData, Tree, build_tree


class GradientBoostedTrees:
    """Additive ensemble of shallow trees fit to residuals.

    Starts from the training mean, so ``n_trees=1, max_depth=0`` reduces to
    the intercept model. Split gains (reduction in squared error) accumulate
    per feature as the importance measure.
    """

    family = GBT

    def __init__(self, params=None):
        params = params or {}
        self.n_trees = params.get("n_trees", 100)
        self.max_depth = params.get("max_depth", 3)
        self.learning_rate = params.get("learning_rate", 0.3)
        self.min_leaf = params.get("min_leaf", 1)
        self.trees = []
        self.base = 0.0

    def fit(self, X, y, groups=None, rng=None):
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise EmptyTrainingSet("boosting needs at least one target")
        data = SortedData(X)
        self.n_features = data.X.shape[1]
        self.base = float(y.mean())
        pred = np.full(len(y), self.base)
        self.trees = []
        for _ in range(self.n_trees):
            tree = build_tree(data, y - pred, max_depth=self.max_depth, min_leaf=self.min_leaf)
            tree.value *= self.learning_rate
            pred += tree.value[tree.apply(data.X)]
            self.trees.append(tree)
        self.history = {"train_rmse": float(np.sqrt(np.mean((y - pred) ** 2)))}
        return self

    def tree_predictions(self, X):
        X = np.asarray(X, dtype=float)
        return np.array([t.predict(X) for t in self.trees])

    def predict(self, X, groups=None):
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.base)
        for t in self.trees:
            out += t.predict(X)
        return out

    def importance(self):
        """Total split gain per feature column."""
        gain = np.zeros(self.n_features)
        for t in self.trees:
            internal = t.feature >= 0
            np.add.at(gain, t.feature[internal], t.gain[internal])
        return gain

    def state(self):
        return {"base": self.base, "n_features": self.n_features, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, params, state):
        m = cls(params)
        m.base = state["base"]
        m.n_features = state["n_features"]
        m.trees = [Tree.from_dict(t) for t in state["trees"]]
        return m
