"""Between-play value functions and their expectation under a yard-line density.

A value function ``g(end_yardline, state)`` maps where a play ends, plus the
game situation before the play, to a value such as expected points or win
probability. The end yard line determines the next situation through
``next_state``; value functions only ever see that between-play state,
never tracking data.
"""

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy.stats import norm

from ..field import MAX_YARDLINE

GOAL_LINE = 100
TOUCHDOWN_POINTS = 7.0
SAFETY_POINTS = 2.0
FREE_KICK_YARDLINE = 65  # receiving team's yard line after a safety kick
WP_SIGMA = 13.45  # sd of the final margin over a full game (points)
GAME_SECONDS = 3600.0

TOUCHDOWN = "touchdown"
SAFETY = "safety"
FIRST_DOWN = "first_down"
NEXT_DOWN = "next_down"
TURNOVER_ON_DOWNS = "turnover_on_downs"


@dataclass(frozen=True)
class GameState:
    """Situation of the possession team before the play.

    ``yardline`` is the line of scrimmage in yards from the target endzone.
    """

    yardline: float
    down: int = 1
    distance: float = 10.0
    score_diff: float = 0.0
    seconds_remaining: float = 1800.0

    def __post_init__(self):
        if self.down not in (1, 2, 3, 4):
            raise ValueError(f"down must be 1-4, got {self.down!r}")
        if self.distance <= 0:
            raise ValueError("distance must be positive")

    def advance_clock(self, seconds):
        return replace(self, seconds_remaining=max(self.seconds_remaining - seconds, 0.0))


@dataclass(frozen=True)
class Outcome:
    """Result of a play ending at ``end_yardline``.

    ``points`` are scored by the original offense. ``next`` is the following
    situation seen by the team then in possession (None after a score), and
    ``possession_change`` tells whether that team is the opponent.
    """

    kind: str
    end_yardline: float
    points: float = 0.0
    next: GameState = None
    possession_change: bool = False


def next_state(end_yardline, state):
    """Situation implied by the end yard line.

    - at or past the target goal line: touchdown
    - in or behind the own goal line (>= 100): safety
    - gain reaching the line to gain: first down (goal to go inside the 10)
    - otherwise the next down, or a turnover on downs after fourth down
    """
    y = float(end_yardline)
    clock = state.seconds_remaining
    if y <= 0:
        return Outcome(TOUCHDOWN, y, points=TOUCHDOWN_POINTS)
    if y >= GOAL_LINE:
        return Outcome(SAFETY, y, points=-SAFETY_POINTS,
                       next=GameState(FREE_KICK_YARDLINE, 1, 10.0, -state.score_diff - SAFETY_POINTS, clock),
                       possession_change=True)
    gain = state.yardline - y
    if gain >= state.distance:
        return Outcome(FIRST_DOWN, y, next=GameState(y, 1, min(10.0, y), state.score_diff, clock))
    if state.down < 4:
        return Outcome(NEXT_DOWN, y, next=GameState(y, state.down + 1, state.distance - gain, state.score_diff, clock))
    opp = GOAL_LINE - y
    return Outcome(TURNOVER_ON_DOWNS, y, next=GameState(opp, 1, min(10.0, opp), -state.score_diff, clock),
                   possession_change=True)


# --------------------------------------------------------------------------
# lookup tables
# --------------------------------------------------------------------------


class LookupTable:
    """Values on a (yardline, down, distance bin) grid.

    JSON layout::

        {"kind": "...", "yardline": [0, ..., 110], "down": [1, 2, 3, 4],
         "distance_bins": [[lo, hi], ...], "values": [[[...]]]}

    ``values[i][d][b]`` belongs to ``yardline[i]``, ``down[d]`` and the
    inclusive distance range ``distance_bins[b]``. Yard lines are rounded to
    the nearest grid entry; distances beyond the last bin use the last bin.
    """

    def __init__(self, yardline, down, distance_bins, values, kind="value", description=""):
        self.yardline = np.asarray(yardline, dtype=float)
        self.down = [int(d) for d in down]
        self.bins = [(float(lo), float(hi)) for lo, hi in distance_bins]
        self.values = np.asarray(values, dtype=float)
        self.kind = kind
        self.description = description
        expected = (len(self.yardline), len(self.down), len(self.bins))
        if self.values.shape != expected:
            raise ValueError(f"value grid has shape {self.values.shape}, expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value grid contains non-finite entries")

    @classmethod
    def from_dict(cls, d):
        return cls(d["yardline"], d["down"], d["distance_bins"], d["values"], d.get("kind", "value"),
                   d.get("description", ""))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "kind": self.kind,
            "description": self.description,
            "yardline": self.yardline.tolist(),
            "down": self.down,
            "distance_bins": [list(b) for b in self.bins],
            "values": self.values.tolist(),
        }

    def _bin(self, distance):
        d = math.ceil(float(distance) - 1e-9)
        for b, (_, hi) in enumerate(self.bins):
            if d <= hi:
                return b
        return len(self.bins) - 1

    def lookup(self, yardline, down, distance):
        i = int(np.argmin(np.abs(self.yardline - float(yardline))))
        return float(self.values[i, self.down.index(int(down)), self._bin(distance)])


def bundled_ep_table():
    """The simplified expected-points table shipped with the package."""
    text = resources.files("playvalue.valuation").joinpath("data/ep_table.json").read_text()
    return LookupTable.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# value functions
# --------------------------------------------------------------------------


class ExpectedPoints:
    """Expected points of the possession team after the play.

    Touchdowns are worth ``TOUCHDOWN_POINTS``; a turnover on downs is worth
    minus the opponent's expected points. A safety is valued at no more
    than the worst in-field outcome so the function never increases with
    the end yard line.
    """

    name = "ep"

    def __init__(self, table=None):
        self.table = table or bundled_ep_table()

    def ep(self, state):
        return self.table.lookup(state.yardline, state.down, state.distance)

    def value(self, outcome, state):
        if outcome.kind == TOUCHDOWN:
            return TOUCHDOWN_POINTS
        if outcome.kind == SAFETY:
            worst = self.value(next_state(GOAL_LINE - 1, state), state)
            return min(-SAFETY_POINTS - self.ep(outcome.next), worst)
        if outcome.possession_change:
            return -self.ep(outcome.next)
        return self.ep(outcome.next)

    def __call__(self, end_yardline, state):
        return self.value(next_state(end_yardline, state), state)


class WinProbability:
    """Win probability of the possession team from a normal margin model.

    The final margin is modeled as the current score difference plus the
    expected points of the next situation, with standard deviation
    ``sigma * sqrt(time remaining / game length)``.
    """

    name = "wp"

    def __init__(self, ep=None, sigma=WP_SIGMA):
        self.ep = ep or ExpectedPoints()
        self.sigma = sigma

    def __call__(self, end_yardline, state):
        margin = state.score_diff + self.ep(end_yardline, state)
        frac = max(state.seconds_remaining, 1.0) / GAME_SECONDS
        return float(norm.cdf(margin / (self.sigma * math.sqrt(frac))))


class TableValue:
    """Value read from an external lookup table at the next situation.

    Touchdowns and safeties take fixed values. After a possession change
    the table value belongs to the opponent, so it is negated for points
    tables and complemented (``1 - v``) for ``win_probability`` tables.
    """

    def __init__(self, table, touchdown_value=None, safety_value=None):
        self.table = table
        self.name = table.kind
        wp = table.kind == "win_probability"
        self.touchdown_value = touchdown_value if touchdown_value is not None else (1.0 if wp else TOUCHDOWN_POINTS)
        self.safety_value = safety_value if safety_value is not None else (0.0 if wp else -SAFETY_POINTS)
        self._flip = (lambda v: 1.0 - v) if wp else (lambda v: -v)

    def __call__(self, end_yardline, state):
        out = next_state(end_yardline, state)
        if out.kind == TOUCHDOWN:
            return self.touchdown_value
        if out.kind == SAFETY:
            return self.safety_value
        v = self.table.lookup(out.next.yardline, out.next.down, out.next.distance)
        return self._flip(v) if out.possession_change else v


def load_value_function(path, **kwargs):
    """Value function backed by an external JSON lookup table."""
    return TableValue(LookupTable.load(path), **kwargs)


# --------------------------------------------------------------------------
# expectation under a density
# --------------------------------------------------------------------------


def value_grid(g, state, grid=None):
    """``g(y, state)`` at every yard line of the density grid."""
    grid = np.arange(int(MAX_YARDLINE) + 1) if grid is None else grid
    return np.array([float(g(int(y), state)) for y in grid])


def expected_play_value(density, g, state):
    """Expected value of ``g`` over the end-of-play yard line.

    ``density`` is a ``YardlineDensity`` (or a mass vector over 0..110).
    """
    mass = np.asarray(getattr(density, "mass", density), dtype=float)
    values = value_grid(g, state, np.arange(len(mass)))
    return math.fsum(mass * values)
