"""Frame-by-frame valuation of one ball-carrier sequence.

For each frame the trained ball-carrier model gives expected yards gained,
which turns into an expected end yard line. When a density model is
supplied, every value function is integrated over the estimated end
yard-line density; otherwise it is evaluated at the expected end yard line
(a plug-in estimate, biased for nonlinear value functions).
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .framework import expected_end_yardline
from .value_functions import GameState, expected_play_value

TIMELINE_FORMAT = "playvalue-timeline"


@dataclass
class TimelineRecord:
    frame_id: int
    time_index: float
    event: str
    carrier_yardline: float
    expected_gain: float
    expected_end_yardline: float
    clamped: bool
    density: dict = None
    values: dict = field(default_factory=dict)


@dataclass
class ValuationTimeline:
    """One record per frame of a ball-carrier sequence."""

    game_id: str
    play_id: str
    carrier_id: str
    state: GameState
    records: list
    value_method: str = "plug-in"

    def __len__(self):
        return len(self.records)

    def series(self, name):
        """Per-frame values of one record field or value function."""
        if self.records and name in self.records[0].values:
            return np.array([r.values[name] for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    def to_dict(self):
        return {
            "format": TIMELINE_FORMAT,
            "game_id": self.game_id,
            "play_id": self.play_id,
            "carrier_id": self.carrier_id,
            "state": {
                "yardline": self.state.yardline, "down": self.state.down, "distance": self.state.distance,
                "score_diff": self.state.score_diff, "seconds_remaining": self.state.seconds_remaining,
            },
            "value_method": self.value_method,
            "records": [
                {
                    "frame_id": r.frame_id, "time_index": r.time_index, "event": r.event,
                    "carrier_yardline": r.carrier_yardline, "expected_gain": r.expected_gain,
                    "expected_end_yardline": r.expected_end_yardline, "clamped": r.clamped,
                    "density": r.density, "values": r.values,
                }
                for r in self.records
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d):
        records = [TimelineRecord(**r) for r in d["records"]]
        return cls(d["game_id"], d["play_id"], d["carrier_id"], GameState(**d["state"]), records,
                   d.get("value_method", "plug-in"))

    def csv_rows(self):
        names = sorted(self.records[0].values) if self.records else []
        header = ["game_id", "play_id", "carrier_id", "frame_id", "time_index", "event", "carrier_yardline",
                  "expected_gain", "expected_end_yardline", "clamped", "density_mean", "density_mode",
                  "density_entropy"] + [f"value_{n}" for n in names]
        rows = []
        for r in self.records:
            dens = r.density or {}
            rows.append([self.game_id, self.play_id, self.carrier_id, r.frame_id, repr(r.time_index), r.event,
                         repr(r.carrier_yardline), repr(r.expected_gain), repr(r.expected_end_yardline),
                         int(r.clamped)] + [repr(dens[k]) if k in dens else "" for k in ("mean", "mode", "entropy")]
                        + [repr(r.values[n]) for n in names])
        return header, rows


def timelines_csv(timelines):
    """Tidy CSV text with one row per frame across all timelines."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header_written = False
    for tl in timelines:
        header, rows = tl.csv_rows()
        if not header_written:
            writer.writerow(header)
            header_written = True
        writer.writerows(rows)
    return out.getvalue()


def default_state(table):
    """First down and ten from the carrier's yard line at the carry start."""
    start = float(np.clip(table.bc_x_adj[0], 1.0, 99.0))
    return GameState(yardline=start, down=1, distance=min(10.0, start))


def valuation_timeline(table, model, value_functions=(), density_model=None, state=None):
    """Valuation timeline of one sequence.

    Parameters
    ----------
    table : FeatureTable
        Rows of a single ball-carrier sequence, in frame order.
    model : TrainedModel
        Ball-carrier model predicting yards gained from each frame.
    value_functions : sequence of callables ``g(end_yardline, state)``
        Each needs a ``name`` attribute, used as its key in the records.
    density_model : DensityForest, optional
        Turns each frame into an end yard-line density; its summaries are
        recorded and value functions are integrated against it.
    state : GameState, optional
        Situation before the play; defaults to ``default_state(table)``.
        The clock is advanced by the observed elapsed carry time.

    Returns
    -------
    ValuationTimeline
    """
    if len(np.unique(table.seq)) != 1:
        raise ValueError("valuation_timeline expects the rows of exactly one sequence")
    state = state or default_state(table)
    gain = model.predict(table)
    end, clamped = expected_end_yardline(gain, table.bc_x_adj)
    densities = None
    if density_model is not None:
        if density_model.columns is not None and tuple(density_model.columns) != tuple(table.columns):
            raise ValueError("density model was fit on different feature columns")
        densities = density_model.estimate_many(table.X)
    elapsed = table.time_index - table.time_index[0]
    records = []
    for i in range(len(table)):
        now = state.advance_clock(float(elapsed[i]))
        values = {}
        for g in value_functions:
            if densities is not None:
                values[g.name] = expected_play_value(densities[i], g, now)
            else:
                values[g.name] = float(g(float(end[i]), now))
        records.append(TimelineRecord(
            frame_id=int(table.frame_id[i]),
            time_index=float(table.time_index[i]),
            event=str(table.events[i] or ""),
            carrier_yardline=float(table.bc_x_adj[i]),
            expected_gain=float(gain[i]),
            expected_end_yardline=float(end[i]),
            clamped=bool(clamped[i]),
            density=densities[i].summary() if densities is not None else None,
            values=values,
        ))
    return ValuationTimeline(str(table.game_id[0]), str(table.play_id[0]), str(table.carrier_id[0]), state,
                             records, "density" if densities is not None else "plug-in")


def valuation_timelines(table, model, value_functions=(), density_model=None, states=None, threads=1):
    """Timelines for every sequence of ``table``, in sequence order.

    ``states`` optionally maps ``(game_id, play_id)`` to a ``GameState``.
    Results do not depend on ``threads``.
    """
    states = states or {}
    jobs = []
    for _, a, b in table.sequence_slices():
        part = table.subset(np.arange(a, b))
        jobs.append((part, states.get((str(part.game_id[0]), str(part.play_id[0])))))
    run = delayed(valuation_timeline)
    return Parallel(n_jobs=threads, prefer="threads")(
        run(part, model, value_functions, density_model, st) for part, st in jobs
    )
