"""Per-frame feature rows, standardization and padded sequences."""

import hashlib
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .field import FRAME_SECONDS
from .geometry import (
    ALL_PLAYERS,
    BC_AND_DEFENSE,
    adjust_arrays,
    relative_arrays,
    voronoi_features,
)

N_OFFENSE_SLOTS = 10
N_DEFENSE_SLOTS = 11
CARRIER_FIELDS = ("x_adj", "y_adj", "dir_target_endzone", "s", "dis")
OFFENSE_FIELDS = CARRIER_FIELDS + ("x_change", "y_change", "dist_to_ball")
DEFENSE_FIELDS = OFFENSE_FIELDS + ("dir_wrt_bc_diff",)
VORONOI_COLUMNS = (
    "voronoi_bc_close_adj",
    "voronoi_bc_far_adj",
    "voronoi_bc_area",
    "voronoi_bc_area_in_front",
    "voronoi_bc_bubble",
    "voronoi_bc_only_close_adj",
    "voronoi_bc_only_far_adj",
    "voronoi_bc_only_area",
    "voronoi_bc_only_area_in_front",
)
# signed columns replaced by magnitudes for the linear model
SIGNED_FIELDS = ("y_adj", "y_change", "dir_target_endzone")


def _columns():
    cols = [f"bc_{f}" for f in CARRIER_FIELDS]
    for k in range(1, N_OFFENSE_SLOTS + 1):
        cols += [f"offense{k}_{f}" for f in OFFENSE_FIELDS]
    for k in range(1, N_DEFENSE_SLOTS + 1):
        cols += [f"defense{k}_{f}" for f in DEFENSE_FIELDS]
    cols += list(VORONOI_COLUMNS)
    return tuple(cols)


FEATURE_COLUMNS = _columns()
N_FEATURES = len(FEATURE_COLUMNS)


def schema_hash(columns):
    return hashlib.sha256(",".join(columns).encode()).hexdigest()[:16]


FEATURE_SCHEMA_HASH = schema_hash(FEATURE_COLUMNS)


class IncompleteFrame(ValueError):
    pass


class SequenceTooLong(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class FeatureRow:
    values: np.ndarray
    columns: tuple = FEATURE_COLUMNS

    def as_dict(self):
        return dict(zip(self.columns, map(float, self.values)))

    def __getitem__(self, name):
        return float(self.values[self.columns.index(name)])


def _slot_order(dist, ids):
    return sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))


def feature_vector(frame, carrier_id, drive_direction):
    """Raw feature values for one frame, ordered as ``FEATURE_COLUMNS``."""
    if carrier_id not in frame.player_ids:
        raise IncompleteFrame(f"carrier {carrier_id!r} not in frame {frame.frame_id}")
    sides = frame.team_sides
    if sides.count("offense") != N_OFFENSE_SLOTS + 1 or sides.count("defense") != N_DEFENSE_SLOTS:
        raise IncompleteFrame(f"frame {frame.frame_id} does not hold 11 v 11 players")
    ci = frame.index(carrier_id)
    x_adj, y_adj, dir_adj = adjust_arrays(frame.x, frame.y, frame.dir, drive_direction)
    x_change, y_change, dist, pursuit, _ = relative_arrays(x_adj, y_adj, dir_adj, x_adj[ci], y_adj[ci])
    carrier_side = sides[ci]
    out = [x_adj[ci], y_adj[ci], dir_adj[ci], frame.s[ci], frame.dis[ci]]
    for group, n_fields in ((carrier_side, len(OFFENSE_FIELDS)), (None, len(DEFENSE_FIELDS))):
        if group is None:
            members = [i for i in range(len(sides)) if sides[i] != carrier_side]
        else:
            members = [i for i in range(len(sides)) if sides[i] == group and i != ci]
        order = _slot_order(dist[members], [frame.player_ids[i] for i in members])
        for k in order:
            i = members[k]
            slot = [x_adj[i], y_adj[i], dir_adj[i], frame.s[i], frame.dis[i], x_change[i], y_change[i], dist[i]]
            if n_fields == len(DEFENSE_FIELDS):
                slot.append(pursuit[i])
            out += slot
    v_all = voronoi_features(frame, carrier_id, drive_direction, ALL_PLAYERS)
    v_bc = voronoi_features(frame, carrier_id, drive_direction, BC_AND_DEFENSE)
    out += [v_all.close_adj, v_all.far_adj, v_all.area, v_all.area_in_front, float(v_all.bubble)]
    out += [v_bc.close_adj, v_bc.far_adj, v_bc.area, v_bc.area_in_front]
    return np.array(out, dtype=float)


def build_feature_row(frame, carrier_id, drive_direction):
    """Assemble the full feature row of one frame.

    Teammate and defender slots are ordered by Euclidean distance to the
    carrier, ties broken by player id.
    """
    return FeatureRow(feature_vector(frame, carrier_id, drive_direction))


@dataclass(eq=False)
class FeatureTable:
    """Flat per-frame design matrix with row metadata.

    Rows of one sequence are contiguous and in frame order. ``seq`` indexes
    the source sequence, ``offset`` counts frames from the carry start.
    """

    X: np.ndarray
    columns: tuple
    seq: np.ndarray
    offset: np.ndarray
    week: np.ndarray
    game_id: np.ndarray
    play_id: np.ndarray
    frame_id: np.ndarray
    carrier_id: np.ndarray
    y: np.ndarray
    end_yardline: np.ndarray
    bc_x_adj: np.ndarray
    time_index: np.ndarray = None
    events: np.ndarray = None

    def __post_init__(self):
        n = len(self.X)
        if self.time_index is None:
            self.time_index = self.offset * FRAME_SECONDS
        if self.events is None:
            self.events = np.array([""] * n, dtype=object)

    def __len__(self):
        return len(self.X)

    @property
    def schema_hash(self):
        return schema_hash(self.columns)

    @property
    def n_sequences(self):
        return len(np.unique(self.seq))

    def column(self, name):
        return self.X[:, self.columns.index(name)]

    def subset(self, rows):
        rows = np.asarray(rows)
        return FeatureTable(
            X=self.X[rows],
            columns=self.columns,
            **{
                name: getattr(self, name)[rows]
                for name in (
                    "seq", "offset", "week", "game_id", "play_id", "frame_id", "carrier_id",
                    "y", "end_yardline", "bc_x_adj", "time_index", "events",
                )
            },
        )

    def sequence_slices(self):
        """``(seq_id, start, stop)`` triples for contiguous sequence blocks."""
        if len(self.seq) == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.seq) != 0) + 1
        starts = np.concatenate([[0], breaks])
        stops = np.concatenate([breaks, [len(self.seq)]])
        return [(int(self.seq[a]), int(a), int(b)) for a, b in zip(starts, stops)]

    def with_columns(self, X, columns):
        new = self.subset(np.arange(len(self)))
        new.X = X
        new.columns = tuple(columns)
        return new


def build_feature_table(sequences, threads=1):
    """Feature rows for every frame of every sequence.

    Returns a ``FeatureTable`` whose ``seq`` column indexes ``sequences``.
    """
    def one(si, sequence):
        rows = [feature_vector(f, sequence.carrier_id, sequence.drive_direction) for f in sequence.frames]
        return si, np.array(rows).reshape(len(rows), N_FEATURES)

    if threads and threads > 1:
        from joblib import Parallel, delayed

        blocks = Parallel(n_jobs=threads)(delayed(one)(i, s) for i, s in enumerate(sequences))
    else:
        blocks = [one(i, s) for i, s in enumerate(sequences)]
    meta = {k: [] for k in ("seq", "offset", "week", "game_id", "play_id", "frame_id", "carrier_id", "y",
                            "end_yardline", "bc_x_adj", "time_index", "events")}
    for si, sequence in enumerate(sequences):
        n = sequence.length
        frames = sequence.frames
        meta["seq"] += [si] * n
        meta["offset"] += list(range(n))
        meta["week"] += [sequence.week] * n
        meta["game_id"] += [sequence.play.game_id] * n
        meta["play_id"] += [sequence.play.play_id] * n
        meta["frame_id"] += [f.frame_id for f in frames]
        meta["carrier_id"] += [sequence.carrier_id] * n
        meta["y"] += list(sequence.yards_remaining)
        meta["end_yardline"] += [sequence.end_yardline] * n
        meta["bc_x_adj"] += list(sequence.carrier_x_adj)
        meta["time_index"] += [f.time_index for f in frames]
        meta["events"] += [f.event or "" for f in frames]
    X = np.concatenate([b for _, b in blocks]) if blocks else np.zeros((0, N_FEATURES))
    return FeatureTable(
        X=X,
        columns=FEATURE_COLUMNS,
        seq=np.array(meta["seq"], dtype=int),
        offset=np.array(meta["offset"], dtype=int),
        week=np.array(meta["week"], dtype=int),
        game_id=np.array(meta["game_id"], dtype=object),
        play_id=np.array(meta["play_id"], dtype=object),
        frame_id=np.array(meta["frame_id"], dtype=int),
        carrier_id=np.array(meta["carrier_id"], dtype=object),
        y=np.array(meta["y"], dtype=float),
        end_yardline=np.array(meta["end_yardline"], dtype=float),
        bc_x_adj=np.array(meta["bc_x_adj"], dtype=float),
        time_index=np.array(meta["time_index"], dtype=float),
        events=np.array(meta["events"], dtype=object),
    )


def absolute_value_transform(X, columns):
    """Replace signed side/heading columns with their magnitudes."""
    X = np.array(X, dtype=float, copy=True)
    for j, name in enumerate(columns):
        if any(name.endswith("_" + f) for f in SIGNED_FIELDS):
            X[:, j] = np.abs(X[:, j])
    return X


# --------------------------------------------------------------------------
# standardization
# --------------------------------------------------------------------------


class ZeroVariance(UserWarning):
    pass


@dataclass(eq=False)
class StandardizationStats:
    """Training-set means and population standard deviations.

    ``columns`` lists the retained columns; zero-variance columns are
    recorded in ``dropped`` and removed by ``apply_standardizer``.
    """

    input_columns: tuple
    columns: tuple
    mean: np.ndarray
    sd: np.ndarray
    dropped: tuple = field(default_factory=tuple)

    @property
    def keep(self):
        return np.array([self.input_columns.index(c) for c in self.columns], dtype=int)

    @property
    def schema_hash(self):
        return schema_hash(self.columns)

    def to_dict(self):
        return {
            "input_columns": list(self.input_columns),
            "columns": list(self.columns),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_columns=tuple(d["input_columns"]),
            columns=tuple(d["columns"]),
            mean=np.array(d["mean"], dtype=float),
            sd=np.array(d["sd"], dtype=float),
            dropped=tuple(d["dropped"]),
        )


def fit_standardizer(X, columns, tol=1e-12):
    """Column means and population standard deviations of training rows."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("standardization needs at least two training rows")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > tol * np.maximum(1.0, np.abs(mean))
    columns = tuple(columns)
    return StandardizationStats(
        input_columns=columns,
        columns=tuple(c for c, k in zip(columns, keep) if k),
        mean=mean[keep],
        sd=sd[keep],
        dropped=tuple(c for c, k in zip(columns, keep) if not k),
    )


def apply_standardizer(X, stats):
    X = np.asarray(X, dtype=float)
    return (X[:, stats.keep] - stats.mean) / stats.sd


def invert_standardizer(Z, stats):
    return np.asarray(Z, dtype=float) * stats.sd + stats.mean


# --------------------------------------------------------------------------
# sequences
# --------------------------------------------------------------------------


@dataclass(eq=False)
class FeatureSequences:
    """Zero-padded sequence batch: ``X`` is (n, L_max, P), ``mask`` (n, L_max)."""

    X: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    seq: np.ndarray
    truncated: np.ndarray

    @property
    def lengths(self):
        return self.mask.sum(axis=1).astype(int)


def pad_sequences(Z, y, seq, L_max=None):
    """Group contiguous rows by ``seq`` into a padded batch.

    Sequences longer than ``L_max`` keep their most recent ``L_max`` frames
    and are flagged in ``truncated``.
    """
    Z = np.asarray(Z, dtype=float)
    seq = np.asarray(seq)
    if len(seq):
        breaks = np.flatnonzero(np.diff(seq) != 0) + 1
        starts = np.concatenate([[0], breaks])
        stops = np.concatenate([breaks, [len(seq)]])
    else:
        starts = stops = np.zeros(0, dtype=int)
    lengths = stops - starts
    if L_max is None:
        L_max = int(lengths.max()) if len(lengths) else 0
    n, P = len(starts), Z.shape[1]
    X = np.zeros((n, L_max, P))
    mask = np.zeros((n, L_max))
    Y = np.zeros((n, L_max))
    truncated = np.zeros(n, dtype=bool)
    for k, (a, b) in enumerate(zip(starts, stops)):
        if b - a > L_max:
            a = b - L_max
            truncated[k] = True
        m = b - a
        X[k, :m] = Z[a:b]
        mask[k, :m] = 1.0
        if y is not None:
            Y[k, :m] = y[a:b]
    return FeatureSequences(X, mask, Y, seq[starts] if len(seq) else seq, truncated)


def build_sequences(table, stats, L_max=None, absolute=False):
    """Standardize a feature table and pad it into per-sequence matrices."""
    X = absolute_value_transform(table.X, table.columns) if absolute else table.X
    Z = apply_standardizer(X, stats)
    batch = pad_sequences(Z, table.y, table.seq, L_max)
    if batch.truncated.any():
        warnings.warn(f"{int(batch.truncated.sum())} sequences truncated to L_max", SequenceTooLong)
    return batch


_CSV_META = (
    "game_id", "play_id", "frame_id", "week", "seq", "offset", "carrier_id",
    "y", "end_yardline", "bc_x_adj", "time_index", "events",
)
_CSV_TEXT = ("game_id", "play_id", "carrier_id", "events")


def feature_csv(table, stream=None):
    """Export a feature table as CSV with the schema hash in a header comment."""
    buf = stream or io.StringIO()
    buf.write(f"# schema_hash={table.schema_hash}\n")
    buf.write(",".join(_CSV_META + tuple(table.columns)) + "\n")
    for i in range(len(table)):
        head = [
            str(getattr(table, m)[i]) if m in _CSV_TEXT else repr(getattr(table, m)[i].item())
            for m in _CSV_META
        ]
        buf.write(",".join(head + [repr(float(v)) for v in table.X[i]]) + "\n")
    return buf.getvalue() if stream is None else None


def read_feature_csv(stream):
    """Inverse of ``feature_csv``; returns a ``FeatureTable``."""
    text = stream.read() if hasattr(stream, "read") else stream
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema_hash="):
        raise ValueError("feature CSV lacks the schema hash header")
    expected = lines[0].split("=", 1)[1].strip()
    header = lines[1].split(",")
    n_meta = len(_CSV_META)
    if tuple(header[:n_meta]) != _CSV_META:
        raise ValueError("unexpected feature CSV metadata columns")
    columns = tuple(header[n_meta:])
    if schema_hash(columns) != expected:
        raise ValueError("feature CSV schema hash does not match its columns")
    rows = [line.split(",") for line in lines[2:] if line]
    cols = list(zip(*rows)) if rows else [[] for _ in header]

    def arr(i, dtype):
        return np.array([dtype(v) for v in cols[i]], dtype=object if dtype is str else dtype)

    X = np.array([[float(v) for v in r[n_meta:]] for r in rows]).reshape(len(rows), len(columns))
    return FeatureTable(
        X=X,
        columns=columns,
        game_id=arr(0, str),
        play_id=arr(1, str),
        frame_id=arr(2, int),
        week=arr(3, int),
        seq=arr(4, int),
        offset=arr(5, int),
        carrier_id=arr(6, str),
        y=arr(7, float),
        end_yardline=arr(8, float),
        bc_x_adj=arr(9, float),
        time_index=arr(10, float),
        events=arr(11, str),
    )
