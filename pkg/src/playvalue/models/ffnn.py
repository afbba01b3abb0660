"""Feedforward ReLU network trained with Adam and an L1 weight penalty."""

import numpy as np

from .base import FFNN, EmptyTrainingSet, split_validation, train_loop


def init_ffnn(n_inputs, hidden, layers, rng):
    """Glorot-uniform weights, zero biases."""
    params = {}
    sizes = [n_inputs] + [hidden] * layers + [1]
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{k}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"b{k}"] = np.zeros(fan_out)
    return params


def _n_layers(params):
    return sum(1 for k in params if k.startswith("W"))


def ffnn_forward(params, X):
    """Output vector and the per-layer activations needed for backprop."""
    acts = [np.asarray(X, dtype=float)]
    n = _n_layers(params)
    for k in range(n):
        z = acts[-1] @ params[f"W{k}"] + params[f"b{k}"]
        acts.append(np.maximum(z, 0.0) if k < n - 1 else z)
    return acts[-1][:, 0], acts


def ffnn_loss_grad(params, X, y, l1_penalty=0.0):
    """Mean squared error plus ``l1_penalty * sum |W|`` and its gradient."""
    y = np.asarray(y, dtype=float)
    out, acts = ffnn_forward(params, X)
    resid = out - y
    n_layers = _n_layers(params)
    loss = float(np.mean(resid**2))
    if l1_penalty:
        loss += l1_penalty * sum(float(np.abs(params[f"W{k}"]).sum()) for k in range(n_layers))
    grads = {}
    delta = (2.0 / len(y)) * resid[:, None]
    for k in range(n_layers - 1, -1, -1):
        grads[f"W{k}"] = acts[k].T @ delta
        grads[f"b{k}"] = delta.sum(axis=0)
        if l1_penalty:
            grads[f"W{k}"] += l1_penalty * np.sign(params[f"W{k}"])
        if k > 0:
            delta = (delta @ params[f"W{k}"].T) * (acts[k] > 0)
    return loss, grads


class FeedForwardNetwork:
    family = FFNN

    def __init__(self, params=None):
        self.config = dict(params or {})
        self.params = None

    def fit(self, X, y, groups=None, rng=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise EmptyTrainingSet("network needs at least one target")
        rng = np.random.default_rng(0) if rng is None else rng
        cfg = self.config
        self.y_mean, self.y_scale = _target_scaling(y)
        y = (y - self.y_mean) / self.y_scale
        groups = np.arange(len(y)) if groups is None else groups
        tr, val = split_validation(groups, cfg["validation_fraction"], rng)
        Xt, yt = X[tr], y[tr]
        self.params = init_ffnn(X.shape[1], cfg["hidden"], cfg["layers"], rng)
        l1 = cfg["l1_penalty"]

        def batch(params, items):
            return ffnn_loss_grad(params, Xt[items], yt[items], l1)

        def val_loss(params):
            return float(np.mean((ffnn_forward(params, X[val])[0] - y[val]) ** 2))

        self.history = train_loop(self.params, batch, val_loss if val.any() else None, len(yt), cfg, rng)
        return self

    def predict(self, X, groups=None):
        return self.y_mean + self.y_scale * ffnn_forward(self.params, X)[0]

    def state(self):
        return {
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "weights": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_state(cls, params, state):
        m = cls(params)
        m.y_mean, m.y_scale = state["y_mean"], state["y_scale"]
        m.params = {k: np.array(v, dtype=float) for k, v in state["weights"].items()}
        return m


def _target_scaling(y):
    """Training-target mean and sd; the network fits standardized targets."""
    sd = float(np.std(y))
    return float(np.mean(y)), (sd if sd > 0 else 1.0)
