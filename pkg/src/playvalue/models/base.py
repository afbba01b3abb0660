"""Model configuration, errors and the shared mini-batch training loop."""

import copy
from dataclasses import dataclass, field

import numpy as np

from .adam import Adam, clip_by_global_norm

INTERCEPT = "intercept"
LASSO = "lasso"
GBT = "gbt"
FFNN = "ffnn"
LSTM = "lstm"
FAMILIES = (INTERCEPT, LASSO, GBT, FFNN, LSTM)
SEQUENCE_FAMILIES = (LSTM,)

_ADAM = {"learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8}
_EARLY_STOP = {"epochs": 50, "validation_fraction": 0.1, "patience": 5}

DEFAULTS = {
    INTERCEPT: {},
    LASSO: {
        "n_lambda": 50,
        "lambda_min_ratio": 1e-2,
        "lambda_grid": None,
        "k_folds": 5,
        "max_sweeps": 3000,
        "tol": 1e-9,
        "absolute": True,
    },
    GBT: {"n_trees": 100, "max_depth": 3, "learning_rate": 0.3, "min_leaf": 1},
    FFNN: {"layers": 2, "hidden": 50, "l1_penalty": 1e-5, "batch_size": 128, **_ADAM, **_EARLY_STOP},
    LSTM: {
        "layers": 2,
        "hidden": 50,
        "recurrent_dropout": 0.2,
        "batch_size": 8,
        "clip_norm": 5.0,
        "forget_bias": 1.0,
        "L_max": None,
        **_ADAM,
        **_EARLY_STOP,
    },
}

# relative tolerance before an epoch-over-epoch loss increase is reported
LOSS_INCREASE_TOL = 1e-6


class ModelError(Exception):
    pass


class ConfigError(ModelError, ValueError):
    pass


class EmptyTrainingSet(ModelError):
    pass


class NonFiniteLoss(ModelError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.loss = epoch, batch, loss


class SchemaMismatch(ModelError):
    pass


class Unsupported(ModelError):
    pass


@dataclass
class ModelConfig:
    """Family tag, hyperparameters and seed for one model fit."""

    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        unknown = set(self.params) - set(DEFAULTS[self.family])
        if unknown:
            raise ConfigError(f"unknown {self.family} hyperparameters: {sorted(unknown)}")
        self.params = {**DEFAULTS[self.family], **self.params}
        self.seed = int(self.seed)
        p = self.params
        for key in ("n_trees", "layers", "hidden", "epochs", "batch_size", "k_folds", "n_lambda"):
            if key in p and (not isinstance(p[key], (int, np.integer)) or p[key] < 1):
                raise ConfigError(f"{key} must be a positive integer, got {p[key]!r}")
        if "max_depth" in p and p["max_depth"] < 0:
            raise ConfigError("max_depth must be >= 0")
        if "recurrent_dropout" in p and not 0.0 <= p["recurrent_dropout"] < 1.0:
            raise ConfigError("recurrent_dropout must lie in [0, 1)")
        if "validation_fraction" in p and not 0.0 <= p["validation_fraction"] < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        for key in ("learning_rate", "l1_penalty", "clip_norm"):
            if p.get(key) is not None and p[key] < 0:
                raise ConfigError(f"{key} must be nonnegative")

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(family=d["family"], params=dict(d.get("params", {})), seed=d.get("seed", 0))


def split_validation(groups, fraction, rng):
    """Hold out whole groups; returns boolean masks ``(train, val)``."""
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    n_val = int(round(fraction * len(uniq)))
    if fraction <= 0 or n_val == 0 or n_val >= len(uniq):
        return np.ones(len(groups), dtype=bool), np.zeros(len(groups), dtype=bool)
    val_groups = rng.choice(uniq, size=n_val, replace=False)
    val = np.isin(groups, val_groups)
    return ~val, val


def train_loop(params, batch_loss_grad, val_loss, n_items, cfg, rng, clip_norm=None):
    """Mini-batch Adam with early stopping on a validation loss.

    Parameters
    ----------
    params : dict of ndarray
        Updated in place; the best-validation parameters are restored.
    batch_loss_grad : callable(params, item_indices) -> (loss, grads)
    val_loss : callable(params) -> float, or None for no early stopping
    n_items : int
        Number of training items (rows or sequences) to batch over.

    Returns
    -------
    dict
        Training history: per-epoch losses, loss increases and clip events.
    """
    opt = Adam(params, cfg["learning_rate"], cfg["beta1"], cfg["beta2"], cfg["epsilon"])
    history = {"train_loss": [], "val_loss": [], "loss_increases": [], "clip_events": 0, "best_epoch": None}
    best_loss, best_params, stale = np.inf, None, 0
    bs = cfg["batch_size"]
    for epoch in range(cfg["epochs"]):
        order = rng.permutation(n_items)
        total = 0.0
        for b, start in enumerate(range(0, n_items, bs)):
            items = order[start:start + bs]
            loss, grads = batch_loss_grad(params, items)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(epoch, b, loss)
            if clip_norm is not None:
                _, clipped = clip_by_global_norm(grads, clip_norm)
                history["clip_events"] += int(clipped)
            opt.step(params, grads)
            total += loss * len(items)
        epoch_loss = total / max(n_items, 1)
        losses = history["train_loss"]
        if losses and epoch_loss > losses[-1] * (1.0 + LOSS_INCREASE_TOL) + LOSS_INCREASE_TOL:
            history["loss_increases"].append(epoch)
        losses.append(float(epoch_loss))
        if val_loss is None:
            continue
        vl = float(val_loss(params))
        if not np.isfinite(vl):
            raise NonFiniteLoss(epoch, -1, vl)
        history["val_loss"].append(vl)
        if vl < best_loss:
            best_loss, best_params, stale = vl, copy.deepcopy(params), 0
            history["best_epoch"] = epoch
        else:
            stale += 1
            if stale >= cfg["patience"]:
                break
    if best_params is not None:
        for k in params:
            params[k][...] = best_params[k]
    return history
