"""Combining sub-model outputs into an expected end-of-play yard line.

Yard lines are measured in yards from the possession team's target endzone:
0 is a touchdown, 100 the team's own goal line, values above 100 lie in the
team's own endzone. Expected yards gained ``Yhat`` turn into an expected end
yard line as ``current - Yhat``.

A dropback resolves through a tree of discrete outcomes: the quarterback
throws the ball away, runs (or is sacked), or passes to one of five
receivers; a pass is caught by one of sixteen players or falls incomplete.
Each leaf carries a probability and an end yard line, and the expectation
is the probability-weighted sum over leaves.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..field import MAX_YARDLINE, TOWARD_HIGH_X, TOWARD_LOW_X
from ..geometry import adjust_arrays

SOFTMAX_EPS = 1e-9
N_RECEIVERS = 5
N_DEFENDERS = 11
N_CATCHERS = N_RECEIVERS + N_DEFENDERS
DECISIONS = ("throw_away", "run_or_sack", "pass")
GOAL_LINE = 100.0
_DIST_TOL = 1e-12


class ContractViolation(ValueError):
    """A sub-model produced an invalid probability distribution."""


def expected_end_yardline(expected_gain, current_yardline):
    """Expected end yard line from expected yards gained.

    Returns ``(yardline, clamped)``: the yard line is clamped to
    ``[0, MAX_YARDLINE]`` and ``clamped`` flags where that changed it.
    Works elementwise on arrays.
    """
    raw = np.asarray(current_yardline, dtype=float) - np.asarray(expected_gain, dtype=float)
    out = np.clip(raw, 0.0, MAX_YARDLINE)
    clamped = out != raw
    if np.ndim(out) == 0:
        return float(out), bool(clamped)
    return out, clamped


def softmax_normalize(values, n=None):
    """Probability vector from nonnegative scores.

    Computes the softmax of ``log(v + eps)``, i.e. ``(v + eps) / sum(v + eps)``,
    so an all-zero score vector maps to the uniform distribution.
    """
    v = np.asarray(values, dtype=float).ravel()
    if n is not None and len(v) != n:
        raise ContractViolation(f"expected {n} scores, got {len(v)}")
    if len(v) == 0:
        raise ContractViolation("softmax of an empty score vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ContractViolation("scores must be finite and nonnegative")
    logits = np.log(v + SOFTMAX_EPS)
    logits -= logits.max()
    w = np.exp(logits)
    return w / math.fsum(w)


def _check_distribution(p, name, tol=_DIST_TOL):
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p < -tol):
        raise ContractViolation(f"{name} has negative or non-finite entries: {p}")
    if abs(math.fsum(p) - 1.0) > max(tol, 1e-12):
        raise ContractViolation(f"{name} sums to {math.fsum(p)!r}, not 1")
    return p


@dataclass(frozen=True)
class QbDecisionDistribution:
    throw_away: float
    run_or_sack: float
    pass_: float

    def __post_init__(self):
        _check_distribution(self.as_array(), "QB decision distribution")

    def as_array(self):
        return np.array([self.throw_away, self.run_or_sack, self.pass_], dtype=float)

    @classmethod
    def from_array(cls, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (3,):
            raise ContractViolation("QB decision distribution needs three probabilities")
        return cls(float(p[0]), float(p[1]), float(p[2]))


@dataclass(frozen=True)
class TargetDistribution:
    probs: tuple

    def __post_init__(self):
        if len(self.probs) != N_RECEIVERS:
            raise ContractViolation(f"target distribution needs {N_RECEIVERS} entries")
        _check_distribution(self.probs, "target distribution")

    @classmethod
    def from_scores(cls, scores):
        return cls(tuple(softmax_normalize(scores, N_RECEIVERS).tolist()))


@dataclass(frozen=True)
class CatchModelOutputs:
    """Global catch probability ``c`` and its split over the 16 catchers.

    Catchers are ordered as the five receivers, then the eleven defenders.
    """

    c: float
    individual: tuple

    def __post_init__(self):
        c = self.c
        ind = np.asarray(self.individual, dtype=float)
        if not (0.0 <= c <= 1.0) or not math.isfinite(c):
            raise ContractViolation(f"global catch probability {c!r} outside [0, 1]")
        if ind.shape != (N_CATCHERS,):
            raise ContractViolation(f"individual catch distribution needs {N_CATCHERS} entries")
        if np.any(ind < 0) or np.any(ind > c + _DIST_TOL):
            raise ContractViolation("individual catch probabilities must lie in [0, c]")
        if abs(math.fsum(ind) - c) > _DIST_TOL:
            raise ContractViolation(f"individual catch probabilities sum to {math.fsum(ind)!r}, not c={c!r}")

    @classmethod
    def from_scores(cls, c, scores):
        return cls(float(c), tuple((softmax_normalize(scores, N_CATCHERS) * float(c)).tolist()))


# --------------------------------------------------------------------------
# combinators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    path: tuple
    probability: float
    value: float
    possession_change: bool = False


@dataclass
class DropbackValuation:
    expected: float
    leaves: list = field(default_factory=list)

    @property
    def total_probability(self):
        return math.fsum(l.probability for l in self.leaves)

    def node_table(self):
        return [
            {"path": "/".join(str(p) for p in l.path), "probability": l.probability, "value": l.value,
             "possession_change": l.possession_change}
            for l in self.leaves
        ]


@dataclass(frozen=True)
class DropbackContext:
    """What sub-models see at one frame of a dropback.

    ``receivers`` lists the five eligible receivers and ``defenders`` the
    eleven defenders; catcher ``k`` indexes ``receivers + defenders``.
    """

    frame: object
    drive_direction: str
    qb_id: str
    receivers: tuple
    defenders: tuple

    @property
    def catchers(self):
        return tuple(self.receivers) + tuple(self.defenders)

    def position(self, player_id):
        i = self.frame.index(player_id)
        return np.array([self.frame.x[i], self.frame.y[i]])


def combine_dropback(context, qb_model, target_model, global_catch_model, individual_catch_model,
                     ball_carrier_model, original_yardline):
    """Expected end yard line of a dropback and its full leaf table.

    Parameters
    ----------
    context : DropbackContext
    qb_model : callable(context) -> QbDecisionDistribution or 3 probabilities
    target_model : callable(context) -> 5 nonnegative scores
        Softmax-normalized into the target distribution.
    global_catch_model : callable(context, j) -> probability a pass to receiver j is caught
    individual_catch_model : callable(context, j) -> 16 nonnegative scores
        Softmax-normalized and scaled to the global catch probability.
    ball_carrier_model : callable(context, player_id) -> expected end yard line
        Measured from the player's own team's target endzone. Values for
        defenders (interceptions) are converted to the offense's frame as
        ``100 - value``.
    original_yardline : float
        Where throw-aways and incompletions leave the ball.

    Returns
    -------
    DropbackValuation
    """
    qb = qb_model(context)
    if not isinstance(qb, QbDecisionDistribution):
        qb = QbDecisionDistribution.from_array(qb)
    targets = TargetDistribution.from_scores(target_model(context))
    orig = float(original_yardline)
    leaves = [
        Leaf(("throw_away",), qb.throw_away, orig),
        Leaf(("run_or_sack", context.qb_id), qb.run_or_sack, float(ball_carrier_model(context, context.qb_id))),
    ]
    catchers = context.catchers
    carrier_values = {}
    for j, receiver in enumerate(context.receivers):
        p_target = qb.pass_ * targets.probs[j]
        catch = CatchModelOutputs.from_scores(global_catch_model(context, j), individual_catch_model(context, j))
        leaves.append(Leaf(("pass", receiver, "incomplete"), p_target * (1.0 - catch.c), orig))
        for k, catcher in enumerate(catchers):
            defender = k >= N_RECEIVERS
            if catcher not in carrier_values:
                v = float(ball_carrier_model(context, catcher))
                carrier_values[catcher] = GOAL_LINE - v if defender else v
            leaves.append(
                Leaf(("pass", receiver, "caught", catcher), p_target * catch.individual[k],
                     carrier_values[catcher], defender)
            )
    total = math.fsum(l.probability for l in leaves)
    if abs(total - 1.0) > 1e-9:
        raise ContractViolation(f"leaf probabilities sum to {total!r}")
    expected = math.fsum(l.probability * l.value for l in leaves)
    return DropbackValuation(expected, leaves)


def combine_run(model, table):
    """Expected end yard line for every frame of a run.

    ``model`` is a trained ball-carrier model; returns ``(yardline, clamped)``.
    """
    return expected_end_yardline(model.predict(table), table.bc_x_adj)


# --------------------------------------------------------------------------
# placeholder sub-models
# --------------------------------------------------------------------------
# These implement only the probability contracts so the dropback combinator
# can run end to end; none of them is fit to data.


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class ConstantQbDecision:
    """Placeholder: the same decision distribution at every frame."""

    throw_away: float = 0.05
    run_or_sack: float = 0.12
    pass_: float = 0.83

    def __call__(self, context):
        return QbDecisionDistribution(self.throw_away, self.run_or_sack, self.pass_)


@dataclass(frozen=True)
class DistanceTargetModel:
    """Placeholder: receivers closer to the QB score higher."""

    intercept: float = 1.0
    slope: float = 0.08

    def __call__(self, context):
        qb = context.position(context.qb_id)
        d = np.array([np.linalg.norm(context.position(r) - qb) for r in context.receivers])
        return _logistic(self.intercept - self.slope * d)


@dataclass(frozen=True)
class SeparationCatchModel:
    """Placeholder global and individual catch models.

    The global catch probability rises with the targeted receiver's
    separation from the nearest defender; individual scores fall with each
    catcher's distance to the targeted receiver.
    """

    intercept: float = -0.2
    slope: float = 0.5
    catcher_slope: float = 1.2

    def global_catch(self, context, j):
        r = context.position(context.receivers[j])
        sep = min(np.linalg.norm(context.position(d) - r) for d in context.defenders)
        return float(_logistic(self.intercept + self.slope * sep))

    def individual_catch(self, context, j):
        r = context.position(context.receivers[j])
        d = np.array([np.linalg.norm(context.position(k) - r) for k in context.catchers])
        return np.exp(-self.catcher_slope * d)


@dataclass(frozen=True)
class PositionCarrierModel:
    """Placeholder ball-carrier model: a fixed gain from the current spot."""

    gain: float = 4.0

    def __call__(self, context, player_id):
        i = context.frame.index(player_id)
        defender = player_id in context.defenders
        direction = context.drive_direction
        if defender:
            direction = TOWARD_HIGH_X if direction == TOWARD_LOW_X else TOWARD_LOW_X
        x_adj, _, _ = adjust_arrays(context.frame.x[i], context.frame.y[i], context.frame.dir[i], direction)
        return float(np.clip(x_adj - self.gain, 0.0, MAX_YARDLINE))
