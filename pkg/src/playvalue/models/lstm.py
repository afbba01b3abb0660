"""Stacked LSTM with a per-frame linear readout, trained by BPTT.

Gate order within each 4H pre-activation block is input, forget, output,
candidate. Recurrent dropout multiplies the hidden state entering the
recurrent product by a mask drawn once per sequence per pass; it is off at
prediction time. Padded frames carry zero loss weight, and because the
network is causal they never influence real frames.
"""

import numpy as np

from .base import LSTM, EmptyTrainingSet, split_validation, train_loop
from .ffnn import _target_scaling


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_lstm(n_inputs, hidden, layers, rng, forget_bias=1.0):
    """Glorot-uniform input weights, orthogonal recurrent weights."""
    params = {}
    H = hidden
    for k in range(layers):
        fan_in = n_inputs if k == 0 else H
        limit = np.sqrt(6.0 / (fan_in + 4 * H))
        params[f"W{k}"] = rng.uniform(-limit, limit, size=(fan_in, 4 * H))
        U = np.empty((H, 4 * H))
        for g in range(4):
            q, r = np.linalg.qr(rng.standard_normal((H, H)))
            U[:, g * H:(g + 1) * H] = q * np.sign(np.diag(r))
        params[f"U{k}"] = U
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        params[f"b{k}"] = b
    limit = np.sqrt(6.0 / (H + 1))
    params["w_out"] = rng.uniform(-limit, limit, size=H)
    params["b_out"] = np.zeros(1)
    return params


def _n_layers(params):
    return sum(1 for k in params if k.startswith("U"))


def _layer_forward(x, W, U, b, hmask):
    B, T, _ = x.shape
    H = U.shape[0]
    xw = x @ W + b
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    tc = np.empty((B, T, H))
    for t in range(T):
        hp = hs[:, t] if hmask is None else hs[:, t] * hmask
        z = xw[:, t] + hp @ U
        a = gates[:, t]
        a[:, :3 * H] = _sigmoid(z[:, :3 * H])
        a[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = a[:, H:2 * H] * cs[:, t] + a[:, :H] * a[:, 3 * H:]
        cs[:, t + 1] = c
        tc[:, t] = np.tanh(c)
        hs[:, t + 1] = a[:, 2 * H:3 * H] * tc[:, t]
    return hs, cs, gates, tc


def _layer_backward(dH, x, W, U, hmask, cache):
    hs, cs, gates, tc = cache
    B, T, H = dH.shape
    i, f, o, g = (gates[..., k * H:(k + 1) * H] for k in range(4))
    # local derivatives of each pre-activation, computed for all frames at once
    local = np.concatenate([g * i * (1.0 - i), cs[:, :-1] * f * (1.0 - f),
                            tc * o * (1.0 - o), i * (1.0 - g * g)], axis=2)
    dc_dh = o * (1.0 - tc * tc)
    dZ = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * dc_dh[:, t]
        dz = dZ[:, t]
        np.multiply(np.concatenate((dc, dc, dh, dc), axis=1), local[:, t], out=dz)
        dc_next = dc * f[:, t]
        dh_next = dz @ U.T
        if hmask is not None:
            dh_next *= hmask
    hp = hs[:, :-1] if hmask is None else hs[:, :-1] * hmask[:, None, :]
    flat_dz = dZ.reshape(B * T, 4 * H)
    dU = hp.reshape(B * T, H).T @ flat_dz
    dW = x.reshape(B * T, -1).T @ flat_dz
    db = dZ.sum(axis=(0, 1))
    dx = dZ @ W.T
    return dx, dW, dU, db


def lstm_forward(params, X, hmasks=None):
    """Per-frame outputs (B, T) and caches for backprop."""
    x = np.asarray(X, dtype=float)
    caches = []
    for k in range(_n_layers(params)):
        m = None if hmasks is None else hmasks[k]
        cache = _layer_forward(x, params[f"W{k}"], params[f"U{k}"], params[f"b{k}"], m)
        caches.append((x, cache))
        x = cache[0][:, 1:]
    out = x @ params["w_out"] + params["b_out"][0]
    return out, caches


def lstm_loss_grad(params, X, mask, y, hmasks=None):
    """Masked per-frame mean squared error and its BPTT gradient."""
    mask = np.asarray(mask, dtype=float)
    out, caches = lstm_forward(params, X, hmasks)
    n = mask.sum()
    resid = (out - y) * mask
    loss = float(np.sum(resid * resid) / n)
    d_out = 2.0 * resid / n
    h_top = caches[-1][1][0][:, 1:]
    grads = {
        "w_out": h_top.reshape(-1, h_top.shape[2]).T @ d_out.ravel(),
        "b_out": np.array([d_out.sum()]),
    }
    dH = d_out[:, :, None] * params["w_out"]
    for k in range(_n_layers(params) - 1, -1, -1):
        x, cache = caches[k]
        m = None if hmasks is None else hmasks[k]
        dH, grads[f"W{k}"], grads[f"U{k}"], grads[f"b{k}"] = _layer_backward(
            dH, x, params[f"W{k}"], params[f"U{k}"], m, cache
        )
    return loss, grads


def _blocks(groups):
    groups = np.asarray(groups)
    if len(groups) == 0:
        return []
    breaks = np.flatnonzero(np.diff(groups) != 0) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(groups)]])
    return list(zip(starts.tolist(), stops.tolist()))


def _pad(arrays, targets=None):
    T = max(len(a) for a in arrays)
    X = np.zeros((len(arrays), T, arrays[0].shape[1]))
    mask = np.zeros((len(arrays), T))
    Y = np.zeros((len(arrays), T))
    for k, a in enumerate(arrays):
        X[k, :len(a)] = a
        mask[k, :len(a)] = 1.0
        if targets is not None:
            Y[k, :len(a)] = targets[k]
    return X, mask, Y


class LstmModel:
    """Two stacked LSTM layers producing one prediction per frame."""

    family = LSTM
    chunk = 64

    def __init__(self, params=None):
        self.config = dict(params or {})
        self.params = None

    def fit(self, X, y, groups=None, rng=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise EmptyTrainingSet("LSTM needs at least one target")
        if groups is None:
            groups = np.zeros(len(y), dtype=int)
        rng = np.random.default_rng(0) if rng is None else rng
        cfg = self.config
        self.y_mean, self.y_scale = _target_scaling(y)
        y = (y - self.y_mean) / self.y_scale
        L_max = cfg.get("L_max")
        seqs, targets = [], []
        for a, b in _blocks(groups):
            if L_max is not None and b - a > L_max:
                a = b - L_max
            seqs.append(X[a:b])
            targets.append(y[a:b])
        ids = np.arange(len(seqs))
        tr, val = split_validation(ids, cfg["validation_fraction"], rng)
        train_ids, val_ids = ids[tr], ids[val]
        H, layers, p_drop = cfg["hidden"], cfg["layers"], cfg["recurrent_dropout"]
        self.params = init_lstm(X.shape[1], H, layers, rng, cfg["forget_bias"])

        def batch(params, items):
            chosen = train_ids[items]
            Xb, mb, yb = _pad([seqs[i] for i in chosen], [targets[i] for i in chosen])
            hmasks = None
            if p_drop > 0:
                keep = 1.0 - p_drop
                hmasks = [(rng.random((len(chosen), H)) < keep) / keep for _ in range(layers)]
            return lstm_loss_grad(params, Xb, mb, yb, hmasks)

        def val_loss(params):
            sq, n = 0.0, 0.0
            for start in range(0, len(val_ids), self.chunk):
                chosen = val_ids[start:start + self.chunk]
                Xb, mb, yb = _pad([seqs[i] for i in chosen], [targets[i] for i in chosen])
                out, _ = lstm_forward(params, Xb)
                sq += float(np.sum(((out - yb) * mb) ** 2))
                n += mb.sum()
            return sq / n

        self.history = train_loop(
            self.params, batch, val_loss if len(val_ids) else None, len(train_ids), cfg, rng,
            clip_norm=cfg["clip_norm"],
        )
        return self

    def predict(self, X, groups=None):
        X = np.asarray(X, dtype=float)
        if groups is None:
            groups = np.zeros(len(X), dtype=int)
        blocks = _blocks(groups)
        out = np.empty(len(X))
        for start in range(0, len(blocks), self.chunk):
            part = blocks[start:start + self.chunk]
            Xb, _, _ = _pad([X[a:b] for a, b in part])
            pred, _ = lstm_forward(self.params, Xb)
            for k, (a, b) in enumerate(part):
                out[a:b] = pred[k, :b - a]
        return self.y_mean + self.y_scale * out

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
