"""Tracking CSV parsing, play validation and ball-carrier sequence extraction."""

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .field import (
    DRIVE_DIRECTIONS,
    FIELD_LENGTH,
    FIELD_WIDTH,
    FRAME_SECONDS,
    MAX_YARDLINE,
    TOWARD_HIGH_X,
    TOWARD_LOW_X,
    x_to_adjusted,
)

OFFENSE = "offense"
DEFENSE = "defense"
BALL = "ball"
TEAM_SIDES = (OFFENSE, DEFENSE, BALL)
PLAYERS_PER_SIDE = 11

# Listing order doubles as the priority used when rows of one frame disagree.
KNOWN_EVENTS = (
    "snap",
    "handoff",
    "lateral",
    "direct_snap",
    "pass_forward",
    "first_contact",
    "tackle",
    "out_of_bounds",
    "fumble",
    "touchdown",
)
START_EVENTS = ("handoff", "lateral", "direct_snap")
END_EVENTS = ("tackle", "out_of_bounds", "fumble", "touchdown")
PLAY_TYPES = ("run", "dropback", "other")
_NULL_EVENTS = {"", "na", "nan", "none", "null"}
_OTHER_PREFIX = "other:"

REQUIRED_COLUMNS = (
    "game_id",
    "play_id",
    "week",
    "frame_id",
    "player_id",
    "team_side",
    "x",
    "y",
    "s",
    "dis",
    "dir",
    "event",
)
OPTIONAL_COLUMNS = (
    "display_name",
    "possession_team",
    "drive_direction",
    "play_type",
    "ball_carrier_id",
)
_STATE_COLUMNS = ("x", "y", "s", "dis", "dir")


class IngestError(Exception):
    pass


class MissingColumn(IngestError):
    def __init__(self, name):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class MalformedRow(IngestError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class CoordinateOutOfRange(MalformedRow):
    pass


def normalize_event(text):
    """Map a raw event annotation onto the event vocabulary.

    Returns ``None`` for empty annotations, the canonical name for known
    events and ``"other:<text>"`` for anything else.
    """
    if text is None:
        return None
    cleaned = str(text).strip()
    if cleaned.lower() in _NULL_EVENTS:
        return None
    if cleaned.startswith(_OTHER_PREFIX):
        return cleaned
    key = cleaned.lower()
    if key in KNOWN_EVENTS:
        return key
    return _OTHER_PREFIX + cleaned


def _event_rank(event):
    if event in KNOWN_EVENTS:
        return (0, KNOWN_EVENTS.index(event), "")
    return (1, 0, event)


def resolve_events(events):
    """Pick one event out of the annotations seen on a single frame."""
    present = sorted({e for e in events if e is not None}, key=_event_rank)
    return present[0] if present else None


@dataclass(frozen=True)
class PlayerState:
    player_id: str
    team_side: str
    x: float
    y: float
    s: float
    dis: float
    dir: float


@dataclass(frozen=True, eq=False)
class Frame:
    """One 10 Hz snapshot: 11 offense and 11 defense players plus the ball.

    Player rows are stored column-wise in ``states`` (columns x, y, s, dis,
    dir) in canonical order: offense before defense, each sorted by id.
    """

    frame_id: int
    time_index: float
    event: Optional[str]
    player_ids: tuple
    team_sides: tuple
    states: np.ndarray
    ball: Optional[PlayerState] = None

    def __post_init__(self):
        self.states.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.time_index == other.time_index
            and self.event == other.event
            and self.player_ids == other.player_ids
            and self.team_sides == other.team_sides
            and self.ball == other.ball
            and np.array_equal(self.states, other.states)
        )

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def s(self):
        return self.states[:, 2]

    @property
    def dis(self):
        return self.states[:, 3]

    @property
    def dir(self):
        return self.states[:, 4]

    def index(self, player_id):
        return self.player_ids.index(player_id)

    def player(self, player_id):
        i = self.index(player_id)
        return PlayerState(player_id, self.team_sides[i], *map(float, self.states[i]))

    def players(self):
        return [self.player(pid) for pid in self.player_ids]

    def side_mask(self, side):
        return np.array([t == side for t in self.team_sides])


@dataclass(frozen=True, eq=False)
class Play:
    game_id: str
    play_id: str
    week: int
    possession_team: Optional[str]
    drive_direction: Optional[str]
    play_type: str
    frames: tuple
    ball_carrier_id: Optional[str] = None
    display_names: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, Play):
            return NotImplemented
        return (
            self.game_id == other.game_id
            and self.play_id == other.play_id
            and self.week == other.week
            and self.possession_team == other.possession_team
            and self.drive_direction == other.drive_direction
            and self.play_type == other.play_type
            and self.ball_carrier_id == other.ball_carrier_id
            and self.display_names == other.display_names
            and self.frames == other.frames
        )

    @property
    def key(self):
        return (self.game_id, self.play_id)

    def frame_index(self, frame_id):
        for i, frame in enumerate(self.frames):
            if frame.frame_id == frame_id:
                return i
        raise KeyError(frame_id)


@dataclass
class ExclusionReport:
    """Counts of everything ingest skipped, with reasons."""

    malformed_rows: list = field(default_factory=list)
    dropped_plays: list = field(default_factory=list)
    dropped_sequences: list = field(default_factory=list)

    def drop_play(self, key, reason):
        self.dropped_plays.append({"game_id": key[0], "play_id": key[1], "reason": reason})

    def drop_sequence(self, key, reason):
        self.dropped_sequences.append({"game_id": key[0], "play_id": key[1], "reason": reason})

    @property
    def n_excluded(self):
        return len(self.dropped_plays) + len(self.dropped_sequences)

    def counts(self):
        counts = Counter(d["reason"] for d in self.dropped_plays)
        counts.update(d["reason"] for d in self.dropped_sequences)
        counts["malformed_rows"] = len(self.malformed_rows)
        return dict(sorted(counts.items()))

    def to_dict(self):
        return {
            "counts": self.counts(),
            "malformed_rows": [{"line": n, "reason": r} for n, r in self.malformed_rows],
            "dropped_plays": self.dropped_plays,
            "dropped_sequences": self.dropped_sequences,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class ParseResult:
    plays: list
    report: ExclusionReport

    def __iter__(self):
        return iter((self.plays, self.report))


def _text_stream(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8", newline="")


def _parse_float(text, name):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite {name}")
    return value


def _check_ranges(x, y, s, dis, line_no):
    if not (0.0 <= x <= FIELD_LENGTH) or not (0.0 <= y <= FIELD_WIDTH):
        raise CoordinateOutOfRange(line_no, f"coordinate ({x}, {y}) outside the field")
    if s < 0 or dis < 0:
        raise CoordinateOutOfRange(line_no, "negative speed or distance")


def parse_tracking_csv(stream, schema=None):
    """Parse a tracking CSV into validated plays.

    Parameters
    ----------
    stream : bytes, str or file object
        UTF-8 CSV with a header row.
    schema : dict, optional
        Maps canonical column names (see ``REQUIRED_COLUMNS`` and
        ``OPTIONAL_COLUMNS``) to the header names used in the file.

    Returns
    -------
    ParseResult
        The plays, ordered by ``(game_id, play_id)``, and an
        ``ExclusionReport`` describing skipped rows and dropped plays.

    Raises
    ------
    MissingColumn
        If the header lacks a required column.
    """
    schema = dict(schema or {})
    reader = csv.reader(_text_stream(stream))
    report = ExclusionReport()
    try:
        header = next(reader)
    except StopIteration:
        return ParseResult([], report)
    header = [h.strip() for h in header]
    position = {}
    for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS:
        source = schema.get(name, name)
        if source in header:
            position[name] = header.index(source)
        elif name in REQUIRED_COLUMNS:
            raise MissingColumn(source)

    rows = defaultdict(lambda: defaultdict(list))
    play_attrs = {}
    broken_keys = set()
    for line_no, raw in enumerate(reader, start=2):
        if not raw or all(not cell.strip() for cell in raw):
            continue
        key = None
        try:
            if len(raw) != len(header):
                raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(raw)}")
            get = {name: raw[i].strip() for name, i in position.items()}
            key = (get["game_id"], get["play_id"])
            frame_id = int(get["frame_id"])
            week = int(get["week"])
            side = get["team_side"].lower()
            if side == "football":
                side = BALL
            if side not in TEAM_SIDES:
                raise MalformedRow(line_no, f"unknown team side {get['team_side']!r}")
            try:
                x, y, s, dis, direction = (_parse_float(get[c], c) for c in _STATE_COLUMNS)
            except ValueError as exc:
                raise MalformedRow(line_no, str(exc)) from None
            _check_ranges(x, y, s, dis, line_no)
            if not get["player_id"]:
                raise MalformedRow(line_no, "empty player id")
        except (MalformedRow, ValueError) as exc:
            reason = exc.reason if isinstance(exc, MalformedRow) else str(exc)
            report.malformed_rows.append((line_no, reason))
            if key is not None:
                broken_keys.add(key)
            continue
        direction = math.fmod(direction, 360.0)
        if direction < 0:
            direction += 360.0
        attrs = play_attrs.setdefault(key, {"week": week})
        for name in OPTIONAL_COLUMNS:
            value = get.get(name, "")
            if name == "display_name":
                if value:
                    attrs.setdefault("names", {}).setdefault(get["player_id"], value)
            elif value and name not in attrs:
                attrs[name] = value
        rows[key][frame_id].append(
            (get["player_id"], side, (x, y, s, dis, direction), normalize_event(get["event"]))
        )

    plays = []
    for key in sorted(rows):
        play, reason = _assemble_play(key, rows[key], play_attrs[key])
        if play is None:
            report.drop_play(key, reason)
        else:
            plays.append(play)
    for key in sorted(broken_keys - set(rows)):
        report.drop_play(key, "malformed_rows")
    return ParseResult(plays, report)


def _assemble_play(key, frame_rows, attrs):
    built = []
    for frame_id in sorted(frame_rows):
        entries = frame_rows[frame_id]
        ball = None
        players = {}
        for player_id, side, state, _ in entries:
            if side == BALL:
                ball = PlayerState(player_id, BALL, *state)
                continue
            if player_id in players:
                return None, "duplicate_player"
            players[player_id] = (side, state)
        n_off = sum(1 for side, _ in players.values() if side == OFFENSE)
        n_def = sum(1 for side, _ in players.values() if side == DEFENSE)
        if n_off != PLAYERS_PER_SIDE or n_def != PLAYERS_PER_SIDE:
            return None, "incomplete_frame"
        order = sorted(players, key=lambda pid: (players[pid][0] != OFFENSE, pid))
        event = resolve_events(e for *_, e in entries)
        built.append(
            (
                frame_id,
                event,
                tuple(order),
                tuple(players[pid][0] for pid in order),
                np.array([players[pid][1] for pid in order], dtype=float),
                ball,
            )
        )
    snap_ids = [b[0] for b in built if b[1] == "snap"]
    if not snap_ids:
        return None, "missing_snap"
    snap_id = snap_ids[0]
    frames = tuple(
        Frame(fid, round((fid - snap_id) * FRAME_SECONDS, 10), ev, ids, sides, states, ball)
        for fid, ev, ids, sides, states, ball in built
    )
    direction = attrs.get("drive_direction")
    if direction is not None and direction not in DRIVE_DIRECTIONS:
        return None, "bad_drive_direction"
    play_type = attrs.get("play_type")
    if play_type is None:
        play_type = _infer_play_type(frames)
    elif play_type not in PLAY_TYPES:
        play_type = "other"
    names = tuple(sorted(attrs.get("names", {}).items()))
    return (
        Play(
            game_id=key[0],
            play_id=key[1],
            week=attrs["week"],
            possession_team=attrs.get("possession_team"),
            drive_direction=direction,
            play_type=play_type,
            frames=frames,
            ball_carrier_id=attrs.get("ball_carrier_id"),
            display_names=names,
        ),
        None,
    )


def _infer_play_type(frames):
    events = {f.event for f in frames}
    if "pass_forward" in events:
        return "dropback"
    if events & set(START_EVENTS):
        return "run"
    return "other"


def read_tracking_csv(path, schema=None):
    with open(path, "rb") as fh:
        return parse_tracking_csv(fh, schema=schema)


def _fmt(value):
    return repr(float(value))


def _event_text(event):
    if event is None:
        return "NA"
    if event.startswith(_OTHER_PREFIX):
        return event[len(_OTHER_PREFIX):]
    return event


def write_tracking_csv(plays, stream):
    """Write plays in the canonical CSV schema; floats round-trip exactly."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
    for play in plays:
        names = dict(play.display_names)
        common = [
            play.possession_team or "",
            play.drive_direction or "",
            play.play_type,
            play.ball_carrier_id or "",
        ]
        for frame in play.frames:
            head = [play.game_id, play.play_id, play.week, frame.frame_id]
            event = _event_text(frame.event)
            entries = []
            if frame.ball is not None:
                b = frame.ball
                entries.append((b.player_id, BALL, (b.x, b.y, b.s, b.dis, b.dir)))
            for pid, side, state in zip(frame.player_ids, frame.team_sides, frame.states):
                entries.append((pid, side, state))
            for pid, side, state in entries:
                writer.writerow(
                    head + [pid, side] + [_fmt(v) for v in state] + [event, names.get(pid, "")] + common
                )


def tracking_csv_text(plays):
    buf = io.StringIO()
    write_tracking_csv(plays, buf)
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class BallCarrierSequence:
    """Frames from the carry start to the carry end with per-frame labels.

    ``yards_remaining`` holds the signed yards the carrier gains from each
    frame to the end of the play; ``end_yardline`` is the end-of-play
    distance from the target endzone, clamped to ``[0, 110]``.
    """

    play: Play
    carrier_id: str
    drive_direction: str
    start_index: int
    end_index: int
    start_event: str
    end_event: str
    carrier_x_adj: np.ndarray
    yards_remaining: np.ndarray
    end_yardline: float

    @property
    def key(self):
        return self.play.key

    @property
    def week(self):
        return self.play.week

    @property
    def length(self):
        return self.end_index - self.start_index + 1

    @property
    def frames(self):
        return self.play.frames[self.start_index : self.end_index + 1]

    @property
    def frame_ids(self):
        return tuple(f.frame_id for f in self.frames)

    @property
    def start_frame(self):
        return self.play.frames[self.start_index].frame_id

    @property
    def end_frame(self):
        return self.play.frames[self.end_index].frame_id

    @property
    def end_yardline_per_frame(self):
        return self.carrier_x_adj - self.yards_remaining


def _infer_carrier(frame):
    if frame.ball is None:
        return None
    offense = frame.side_mask(OFFENSE)
    d2 = (frame.x - frame.ball.x) ** 2 + (frame.y - frame.ball.y) ** 2
    d2 = np.where(offense, d2, np.inf)
    best = np.flatnonzero(d2 == d2.min())
    return min(frame.player_ids[i] for i in best)


def sequence_labels(carrier_x_adj):
    """Per-frame yards remaining and the end-of-play yard line."""
    carrier_x_adj = np.asarray(carrier_x_adj, dtype=float)
    end = float(min(max(carrier_x_adj[-1], 0.0), MAX_YARDLINE))
    return carrier_x_adj - end, end


def extract_ball_carrier_sequences(plays, report=None):
    """Identify the ball-carrier sequence of every run play.

    A carry starts at the first handoff, lateral or direct snap and ends at
    the first tackle, out-of-bounds, fumble or touchdown at or after the
    start. Plays that cannot produce a carry are skipped and listed in the
    report.

    Returns
    -------
    sequences : list of BallCarrierSequence
    report : ExclusionReport
    """
    report = report if report is not None else ExclusionReport()
    sequences = []
    for play in plays:
        if play.play_type != "run":
            report.drop_sequence(play.key, "not_run_play")
            continue
        events = [f.event for f in play.frames]
        start = next((i for i, e in enumerate(events) if e in START_EVENTS), None)
        if start is None:
            report.drop_sequence(play.key, "missing_start_event")
            continue
        end = next((i for i in range(start, len(events)) if events[i] in END_EVENTS), None)
        if end is None:
            report.drop_sequence(play.key, "missing_end_event")
            continue
        carrier = play.ball_carrier_id or _infer_carrier(play.frames[start])
        if carrier is None or carrier not in play.frames[start].player_ids:
            report.drop_sequence(play.key, "unknown_carrier")
            continue
        xs = np.array([f.x[f.index(carrier)] for f in play.frames[start : end + 1]])
        direction = play.drive_direction
        if direction is None:
            if xs[-1] == xs[0]:
                report.drop_sequence(play.key, "unknown_drive_direction")
                continue
            direction = TOWARD_LOW_X if xs[-1] < xs[0] else TOWARD_HIGH_X
        x_adj = x_to_adjusted(xs, direction)
        remaining, end_yardline = sequence_labels(x_adj)
        for arr in (x_adj, remaining):
            arr.setflags(write=False)
        sequences.append(
            BallCarrierSequence(
                play=play,
                carrier_id=carrier,
                drive_direction=direction,
                start_index=start,
                end_index=end,
                start_event=events[start],
                end_event=events[end],
                carrier_x_adj=x_adj,
                yards_remaining=remaining,
                end_yardline=end_yardline,
            )
        )
    return sequences, report
