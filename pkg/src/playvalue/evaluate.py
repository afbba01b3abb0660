"""Leave-one-week-out cross-validation and error diagnostics.

Every fold refits the standardizer and the model on the training weeks
only and predicts every frame of the held-out week. Reports are built from
the per-frame prediction log, so any report can be recomputed from its log.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .models import ModelConfig, feature_importance, fit_model  # noqa: F401  (re-exported)

MIN_CARRIES = 20
ONE_SECOND_OFFSET = 10

LOG_COLUMNS = ("game_id", "play_id", "frame_id", "carrier_id", "week", "fold", "seq", "offset", "y", "pred")


class LeakageDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class LowoSplit:
    week: int
    train_seq: tuple
    holdout_seq: tuple


def lowo_splits(table, weeks=None):
    """One split per holdout week.

    ``weeks`` restricts which weeks are held out; all other weeks in the
    table always train.
    """
    all_weeks = sorted(set(int(w) for w in table.week))
    if len(all_weeks) < 2:
        raise ValueError("leave-one-week-out needs at least two distinct weeks")
    holdouts = all_weeks if weeks is None else sorted(int(w) for w in weeks)
    splits = []
    for w in holdouts:
        if w not in all_weeks:
            raise ValueError(f"week {w} not present in the data")
        in_week = table.week == w
        splits.append(
            LowoSplit(
                week=w,
                train_seq=tuple(sorted(set(table.seq[~in_week].tolist()))),
                holdout_seq=tuple(sorted(set(table.seq[in_week].tolist()))),
            )
        )
    return splits


def check_split(table, split):
    """Raise ``LeakageDetected`` if any holdout sequence or week also trains."""
    overlap = set(split.train_seq) & set(split.holdout_seq)
    if overlap:
        raise LeakageDetected(f"week {split.week}: sequences {sorted(overlap)[:5]} in both train and holdout")
    train_rows = np.isin(table.seq, split.train_seq)
    if np.any(table.week[train_rows] == split.week):
        raise LeakageDetected(f"week {split.week} frames present in its own training set")
    keys = lambda rows: set(zip(table.game_id[rows], table.play_id[rows], table.carrier_id[rows]))  # noqa: E731
    shared = keys(train_rows) & keys(np.isin(table.seq, split.holdout_seq))
    if shared:
        raise LeakageDetected(f"week {split.week}: plays {sorted(shared)[:5]} in both train and holdout")


# --------------------------------------------------------------------------
# prediction log and per-offset errors
# --------------------------------------------------------------------------


@dataclass(eq=False)
class PredictionLog:
    """Per-frame predictions; one row per held-out frame."""

    game_id: np.ndarray
    play_id: np.ndarray
    frame_id: np.ndarray
    carrier_id: np.ndarray
    week: np.ndarray
    fold: np.ndarray
    seq: np.ndarray
    offset: np.ndarray
    y: np.ndarray
    pred: np.ndarray

    def __len__(self):
        return len(self.y)

    @property
    def error(self):
        """Prediction minus actual."""
        return self.pred - self.y

    @classmethod
    def concat(cls, logs):
        return cls(**{c: np.concatenate([getattr(l, c) for l in logs]) for c in LOG_COLUMNS})

    def sorted(self):
        order = np.lexsort((self.offset, self.seq, self.fold))
        return PredictionLog(**{c: getattr(self, c)[order] for c in LOG_COLUMNS})

    def to_csv(self, stream=None):
        out = stream or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for i in range(len(self)):
            w.writerow([
                self.game_id[i], self.play_id[i], int(self.frame_id[i]), self.carrier_id[i],
                int(self.week[i]), int(self.fold[i]), int(self.seq[i]), int(self.offset[i]),
                repr(float(self.y[i])), repr(float(self.pred[i])),
            ])
        return out.getvalue() if stream is None else None

    @classmethod
    def from_csv(cls, stream):
        rows = list(csv.DictReader(stream))
        text = ("game_id", "play_id", "carrier_id")
        ints = ("frame_id", "week", "fold", "seq", "offset")
        cols = {}
        for c in LOG_COLUMNS:
            vals = [r[c] for r in rows]
            if c in text:
                cols[c] = np.array(vals, dtype=object)
            elif c in ints:
                cols[c] = np.array([int(v) for v in vals], dtype=int)
            else:
                cols[c] = np.array([float(v) for v in vals])
        return cls(**cols)


@dataclass(eq=False)
class OffsetErrors:
    """Error summaries at each number of frames from the carry start."""

    offset: np.ndarray
    n: np.ndarray
    rmse: np.ndarray
    mean_error: np.ndarray
    se: np.ndarray

    @property
    def lower(self):
        return self.mean_error - 2.0 * self.se

    @property
    def upper(self):
        return self.mean_error + 2.0 * self.se

    def rows(self):
        for k in range(len(self.offset)):
            band = np.isfinite(self.se[k])
            yield {
                "offset": int(self.offset[k]),
                "n": int(self.n[k]),
                "rmse": float(self.rmse[k]),
                "mean_error": float(self.mean_error[k]),
                "lower": float(self.lower[k]) if band else None,
                "upper": float(self.upper[k]) if band else None,
            }


def error_by_frame_offset(offset, error):
    """RMSE and mean error with two-standard-error bands per frame offset.

    Offsets run from 0 to the largest observed offset; offsets without
    observations get ``n = 0`` and NaN summaries, and offsets with a single
    observation get no band (NaN standard error).
    """
    offset = np.asarray(offset, dtype=int)
    error = np.asarray(error, dtype=float)
    L = int(offset.max()) + 1 if len(offset) else 0
    n = np.bincount(offset, minlength=L).astype(int)
    s1 = np.bincount(offset, weights=error, minlength=L)
    s2 = np.bincount(offset, weights=error * error, minlength=L)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / n
        rmse = np.sqrt(s2 / n)
        sd = np.zeros(L)
        for k in np.flatnonzero(n >= 2):
            sd[k] = np.std(error[offset == k], ddof=1)
        se = np.where(n >= 2, sd / np.sqrt(n), np.nan)
    return OffsetErrors(np.arange(L), n, rmse, mean, se)


def overall_rmse(error):
    error = np.asarray(error, dtype=float)
    return float(np.sqrt(np.mean(error * error)))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass(eq=False)
class EvaluationReport:
    family: str
    config: dict
    overall_rmse: float
    by_offset: OffsetErrors
    folds: list
    predictions: PredictionLog
    metadata: dict = field(default_factory=dict)

    def summary(self):
        return {
            "family": self.family,
            "config": self.config,
            "overall_rmse": self.overall_rmse,
            "n_frames": int(len(self.predictions)),
            "folds": self.folds,
            "by_offset": list(self.by_offset.rows()),
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=1)

    def offset_csv(self):
        return offsets_csv([self])


def offsets_csv(reports):
    """Tidy CSV: one row per offset per model family."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["model", "offset", "n", "rmse", "mean_error", "lower", "upper"])
    for rep in reports:
        for row in rep.by_offset.rows():
            w.writerow([
                rep.family, row["offset"], row["n"], repr(row["rmse"]), repr(row["mean_error"]),
                "" if row["lower"] is None else repr(row["lower"]),
                "" if row["upper"] is None else repr(row["upper"]),
            ])
    return out.getvalue()


def report_from_log(log, family, config=None, metadata=None):
    """Rebuild every report statistic from a prediction log alone."""
    log = log.sorted()
    err = log.error
    folds = []
    for f in np.unique(log.fold):
        rows = log.fold == f
        folds.append({
            "fold": int(f),
            "week": int(log.week[rows][0]),
            "n_frames": int(rows.sum()),
            "n_sequences": int(len(np.unique(log.seq[rows]))),
            "rmse": overall_rmse(err[rows]),
        })
    return EvaluationReport(
        family=family,
        config=config or {},
        overall_rmse=overall_rmse(err),
        by_offset=error_by_frame_offset(log.offset, err),
        folds=folds,
        predictions=log,
        metadata=metadata or {},
    )


def _run_fold(table, config, split, fold_index):
    check_split(table, split)
    train_rows = np.flatnonzero(np.isin(table.seq, split.train_seq))
    test_rows = np.flatnonzero(np.isin(table.seq, split.holdout_seq))
    model = fit_model(table, config, rows=train_rows)
    test = table.subset(test_rows)
    pred = model.predict(test)
    log = PredictionLog(
        game_id=test.game_id, play_id=test.play_id, frame_id=test.frame_id, carrier_id=test.carrier_id,
        week=test.week, fold=np.full(len(test), fold_index), seq=test.seq, offset=test.offset,
        y=test.y, pred=pred,
    )
    return fold_index, log, model.metadata


def lowo_cv(table, config, weeks=None, threads=1):
    """Leave-one-week-out cross-validation of one model configuration.

    Parameters
    ----------
    table : FeatureTable
    config : ModelConfig or dict
    weeks : iterable of int, optional
        Holdout weeks; defaults to every week in the table.
    threads : int
        Folds to fit concurrently (separate processes). Results do not
        depend on this value.

    Returns
    -------
    EvaluationReport
    """
    if not isinstance(config, ModelConfig):
        config = ModelConfig.from_dict(config)
    splits = lowo_splits(table, weeks)
    if threads and threads > 1 and len(splits) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=min(threads, len(splits)))(
            delayed(_run_fold)(table, config, s, k) for k, s in enumerate(splits)
        )
    else:
        results = [_run_fold(table, config, s, k) for k, s in enumerate(splits)]
    results.sort(key=lambda r: r[0])
    log = PredictionLog.concat([r[1] for r in results])
    metadata = {
        "schema_hash": table.schema_hash,
        "seed": config.seed,
        "fold_weeks": [s.week for s in splits],
        "fold_models": [r[2] for r in results],
    }
    return report_from_log(log, config.family, config.to_dict(), metadata)


def rmse_ratio(report, baseline):
    return report.overall_rmse / baseline.overall_rmse


# --------------------------------------------------------------------------
# player aggregates
# --------------------------------------------------------------------------


def player_aggregates(log, min_carries=MIN_CARRIES, one_second=ONE_SECOND_OFFSET):
    """Per-carrier yards and yards above expectation.

    ``above_expectation_start`` averages actual minus predicted yards at the
    carry start over all carries; ``above_expectation_1s`` does the same at
    ``one_second`` frames in, over carries that last that long.
    """
    table = {}
    for i in range(len(log)):
        off = int(log.offset[i])
        if off != 0 and off != one_second:
            continue
        key = (log.carrier_id[i], int(log.seq[i]))
        rec = table.setdefault(key, {})
        rec[off] = (float(log.y[i]), float(log.pred[i]))
    players = {}
    for (pid, _), rec in sorted(table.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        if 0 not in rec:
            continue
        p = players.setdefault(pid, {"start": [], "gain": [], "late": []})
        y0, p0 = rec[0]
        p["gain"].append(y0)
        p["start"].append(y0 - p0)
        if one_second in rec:
            y1, p1 = rec[one_second]
            p["late"].append(y1 - p1)
    rows = []
    for pid, p in players.items():
        n = len(p["gain"])
        if n < min_carries:
            continue
        rows.append({
            "player_id": pid,
            "carries": n,
            "yards_per_carry": float(np.mean(p["gain"])),
            "above_expectation_start": float(np.mean(p["start"])),
            "above_expectation_1s": float(np.mean(p["late"])) if p["late"] else None,
            "carries_1s": len(p["late"]),
        })
    rows.sort(key=lambda r: (-r["above_expectation_start"], str(r["player_id"])))
    return rows


def aggregates_csv(rows):
    out = io.StringIO()
    cols = ["player_id", "carries", "yards_per_carry", "above_expectation_start", "above_expectation_1s", "carries_1s"]
    w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return out.getvalue()
