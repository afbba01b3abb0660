"""Uniform fit/predict/save/load over every model family."""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..featurize import (
    StandardizationStats,
    absolute_value_transform,
    apply_standardizer,
    fit_standardizer,
    schema_hash,
)
from .base import FAMILIES, GBT, LASSO, ConfigError, ModelConfig, SchemaMismatch, Unsupported
from .ffnn import FeedForwardNetwork
from .gbt import GradientBoostedTrees
from .intercept import InterceptModel
from .lasso import LassoModel
from .lstm import LstmModel

MODEL_FORMAT = "playvalue-model"
MODEL_FORMAT_VERSION = 1

ESTIMATORS = {
    "intercept": InterceptModel,
    "lasso": LassoModel,
    "gbt": GradientBoostedTrees,
    "ffnn": FeedForwardNetwork,
    "lstm": LstmModel,
}


@dataclass(eq=False)
class TrainedModel:
    """A fitted estimator together with its input pipeline.

    The pipeline is: optional absolute-value transform of signed columns
    (LASSO), then standardization with training-set statistics, then the
    family's estimator. Labels are never consulted by ``predict``.
    """

    config: ModelConfig
    input_columns: tuple
    standardizer: StandardizationStats
    estimator: object
    metadata: dict = field(default_factory=dict)

    @property
    def family(self):
        return self.config.family

    @property
    def schema_hash(self):
        return schema_hash(self.input_columns)

    @property
    def absolute(self):
        return bool(self.config.params.get("absolute", False))

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if self.absolute:
            X = absolute_value_transform(X, self.input_columns)
        return apply_standardizer(X, self.standardizer)

    def predict_matrix(self, X, groups=None):
        """Predictions from a raw feature matrix in ``input_columns`` order."""
        out = self.estimator.predict(self.transform(X), groups)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{self.family} model produced non-finite predictions")
        return out

    def predict(self, table):
        """Expected yards gained for every row of a ``FeatureTable``."""
        if table.schema_hash != self.schema_hash:
            raise SchemaMismatch(
                f"feature schema {table.schema_hash} does not match model schema {self.schema_hash}"
            )
        return self.predict_matrix(table.X, table.seq)

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "schema_hash": self.schema_hash,
            "input_columns": list(self.input_columns),
            "standardizer": self.standardizer.to_dict(),
            "metadata": self.metadata,
            "state": self.estimator.state(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ConfigError("not a model file")
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model file version {d.get('version')!r}")
        config = ModelConfig.from_dict(d["config"])
        columns = tuple(d["input_columns"])
        if schema_hash(columns) != d["schema_hash"]:
            raise SchemaMismatch("model file schema hash does not match its column list")
        estimator = ESTIMATORS[config.family].from_state(config.params, d["state"])
        return cls(config, columns, StandardizationStats.from_dict(d["standardizer"]), estimator, d["metadata"])

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def fit_model(table, config, rows=None):
    """Fit ``config.family`` on a ``FeatureTable`` (optionally a row subset)."""
    if not isinstance(config, ModelConfig):
        config = ModelConfig.from_dict(config)
    if rows is not None:
        table = table.subset(rows)
    return fit_matrix(table.X, table.y, table.seq, table.columns, config)


def fit_matrix(X, y, groups, columns, config):
    """Fit from a raw matrix; ``groups`` identify contiguous sequences."""
    X = np.asarray(X, dtype=float)
    columns = tuple(columns)
    absolute = bool(config.params.get("absolute", False))
    Xt = absolute_value_transform(X, columns) if absolute else X
    stats = fit_standardizer(Xt, columns)
    Z = apply_standardizer(Xt, stats)
    rng = np.random.default_rng(config.seed)
    estimator = ESTIMATORS[config.family](config.params)
    estimator.fit(Z, y, groups, rng)
    metadata = {"n_rows": int(len(y)), "history": _clean(getattr(estimator, "history", {}))}
    increases = metadata["history"].get("loss_increases") if isinstance(metadata["history"], dict) else None
    if increases:
        metadata["warnings"] = [f"training loss increased at epochs {increases}"]
    return TrainedModel(config, columns, stats, estimator, metadata)


def predict(model, table):
    return model.predict(table)


def save_model(model, path):
    """Write a model file atomically (temporary file then rename)."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".model-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(model.dumps())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path):
    with open(path) as fh:
        return TrainedModel.from_dict(json.load(fh))


def feature_importance(model, top_k=None):
    """Ranked importance for boosted trees (split gain) or LASSO (|coef|).

    Returns a list of dicts with ``feature``, ``importance``, ``share`` and,
    for LASSO, ``sign``.
    """
    cols = model.standardizer.columns
    if model.family == GBT:
        values = model.estimator.importance()
        signs = [None] * len(values)
    elif model.family == LASSO:
        coef = model.estimator.coef
        values = np.abs(coef)
        signs = np.sign(coef).astype(int).tolist()
    else:
        raise Unsupported(f"feature importance is not defined for the {model.family} family")
    total = values.sum()
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    report = []
    for j in order[:top_k] if top_k else order:
        row = {
            "feature": cols[j],
            "importance": float(values[j]),
            "share": float(values[j] / total) if total > 0 else 0.0,
        }
        if signs[j] is not None:
            row["sign"] = signs[j]
        report.append(row)
    return report


__all__ = [
    "FAMILIES",
    "MODEL_FORMAT_VERSION",
    "TrainedModel",
    "feature_importance",
    "fit_matrix",
    "fit_model",
    "load_model",
    "predict",
    "save_model",
]
