"""Independent oracles and small builders shared by the test modules."""

import math

import numpy as np

from playvalue.field import FIELD_LENGTH, FIELD_WIDTH, TOWARD_LOW_X
from playvalue.ingest import BALL, DEFENSE, OFFENSE, Frame, Play, PlayerState
from playvalue.valuation import DropbackContext

RASTER_STEP = 0.05
SOFTMAX_EPS = 1e-9  # the score floor in the target and catcher softmax


def make_frame(xy, sides=None, ids=None, dirs=None, speeds=None, frame_id=1, event=None, ball_at=None):
    """Frame from raw positions; offense first unless ``sides`` says otherwise."""
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    sides = sides or [OFFENSE] * (n // 2) + [DEFENSE] * (n - n // 2)
    ids = ids or [f"{'O' if s == OFFENSE else 'D'}{i:02d}" for i, s in enumerate(sides)]
    dirs = np.zeros(n) if dirs is None else np.asarray(dirs, dtype=float)
    speeds = np.zeros(n) if speeds is None else np.asarray(speeds, dtype=float)
    order = sorted(range(n), key=lambda i: (sides[i] != OFFENSE, ids[i]))
    states = np.column_stack([xy[:, 0], xy[:, 1], speeds, speeds * 0.1, dirs])[order]
    ball = None
    if ball_at is not None:
        bx, by = xy[ball_at]
        ball = PlayerState("football", BALL, float(bx), float(by), 0.0, 0.0, 0.0)
    return Frame(
        frame_id=frame_id,
        time_index=round((frame_id - 1) * 0.1, 10),
        event=event,
        player_ids=tuple(ids[i] for i in order),
        team_sides=tuple(sides[i] for i in order),
        states=states,
        ball=ball,
    )


def random_frame(rng, min_separation=0.0):
    """22 players placed uniformly on the field, optionally kept apart."""
    pts = []
    while len(pts) < 22:
        p = rng.uniform([0.0, 0.0], [FIELD_LENGTH, FIELD_WIDTH])
        if all(math.hypot(*(p - q)) >= min_separation for q in pts):
            pts.append(p)
    dirs = rng.uniform(0.0, 360.0, size=22)
    speeds = rng.uniform(0.0, 8.0, size=22)
    return make_frame(np.array(pts), dirs=dirs, speeds=speeds)


def scanline_cell_raster(points, index, step=RASTER_STEP, front=None):
    """Nearest-neighbour rasterization of one generator's region.

    Counts the centres ``((i + 0.5) step, (k + 0.5) step)`` of a grid over
    the field whose nearest generator is ``points[index]``. Along each grid
    row the region is an interval cut out by the bisector inequalities,
    so the count per row is exact and no pixel needs to be visited.

    ``front`` optionally restricts to pixels with ``x < front[0]``
    (``front[1] == "low"``) or ``x > front[0]`` (``"high"``).

    Returns the covered area, ``count * step**2``.
    """
    points = np.asarray(points, dtype=float)
    p = points[index]
    q = np.delete(points, index, axis=0)
    n_x = int(round(FIELD_LENGTH / step))
    n_y = int(math.floor(FIELD_WIDTH / step + 1e-9))
    ys = (np.arange(n_y) + 0.5) * step
    a = 2.0 * (q[:, 0] - p[0])  # a x <= c along each row
    c = (q ** 2).sum(axis=1) - (p ** 2).sum() - 2.0 * np.outer(ys, q[:, 1] - p[1])
    lo = np.zeros(n_y)
    hi = np.full(n_y, FIELD_LENGTH)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = c / a
    pos, neg, flat = a > 0, a < 0, a == 0
    if pos.any():
        hi = np.minimum(hi, bound[:, pos].min(axis=1))
    if neg.any():
        lo = np.maximum(lo, bound[:, neg].max(axis=1))
    empty = (c[:, flat] < 0).any(axis=1) if flat.any() else np.zeros(n_y, dtype=bool)
    if front is not None:
        x0, side = front
        if side == "low":
            hi = np.minimum(hi, x0)
        else:
            lo = np.maximum(lo, x0)
    first = np.ceil(lo / step - 0.5)
    last = np.floor(hi / step - 0.5)
    first = np.clip(first, 0, n_x - 1)
    last = np.clip(last, -1, n_x - 1)
    count = np.where(empty | (hi < lo), 0, np.maximum(last - first + 1, 0))
    return float(count.sum()) * step * step


def brute_force_raster(points, step=RASTER_STEP):
    """Pixel counts per generator by direct nearest-neighbour labelling."""
    points = np.asarray(points, dtype=float)
    n_x = int(round(FIELD_LENGTH / step))
    n_y = int(math.floor(FIELD_WIDTH / step + 1e-9))
    xs = (np.arange(n_x) + 0.5) * step
    counts = np.zeros(len(points), dtype=np.int64)
    for k in range(n_y):
        y = (k + 0.5) * step
        d2 = (xs[:, None] - points[None, :, 0]) ** 2 + (y - points[None, :, 1]) ** 2
        counts += np.bincount(np.argmin(d2, axis=1), minlength=len(points))
    return counts


def front_side(drive_direction):
    return "low" if drive_direction == TOWARD_LOW_X else "high"


def finite_difference_check(f, params, eps=1e-5):
    """Central finite differences of scalar ``f(params)`` for every entry."""
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + eps
            up = f(params)
            arr[idx] = old - eps
            down = f(params)
            arr[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for name in analytic:
        a, n = np.asarray(analytic[name]), np.asarray(numeric[name])
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def ffnn_gradient_error(seed=0, n_inputs=4, hidden=5, layers=2, n=7):
    """Worst relative error of backprop against finite differences."""
    from playvalue.models.ffnn import ffnn_loss_grad, init_ffnn

    rng = np.random.default_rng(seed)
    params = init_ffnn(n_inputs, hidden, layers, rng)
    for k in params:
        if k.startswith("b"):
            params[k] = rng.normal(0.0, 0.3, size=params[k].shape)
    X = rng.normal(size=(n, n_inputs))
    y = rng.normal(size=n)
    _, grads = ffnn_loss_grad(params, X, y)
    numeric = finite_difference_check(lambda p: ffnn_loss_grad(p, X, y)[0], params)
    return max_relative_error(grads, numeric)


def lstm_gradient_error(seed=0, n_inputs=2, hidden=3, layers=2, steps=4, batch=2, dropout=False):
    """Worst relative error of BPTT against finite differences."""
    from playvalue.models.lstm import init_lstm, lstm_loss_grad

    rng = np.random.default_rng(seed)
    params = init_lstm(n_inputs, hidden, layers, rng)
    params["b_out"] = rng.normal(size=1)
    X = rng.normal(size=(batch, steps, n_inputs))
    mask = np.ones((batch, steps))
    mask[1, steps - 1:] = 0.0
    X[1, steps - 1:] = 0.0
    y = rng.normal(size=(batch, steps))
    hmasks = None
    if dropout:
        hmasks = [(rng.random((batch, hidden)) < 0.8) / 0.8 for _ in range(layers)]
    _, grads = lstm_loss_grad(params, X, mask, y, hmasks)
    numeric = finite_difference_check(lambda p: lstm_loss_grad(p, X, mask, y, hmasks)[0], params)
    return max_relative_error(grads, numeric)


def toy_table(rng, n_seq=60, weeks=6, length=(3, 12), n_features=3, y_fn=None):
    """FeatureTable with random features and per-frame targets."""
    from playvalue.featurize import FeatureTable

    rows = []
    for s in range(n_seq):
        L = int(rng.integers(length[0], length[1] + 1))
        for k in range(L):
            rows.append((s, k, 1 + s % weeks))
    seq, offset, week = (np.array(c) for c in zip(*rows))
    X = rng.normal(size=(len(seq), n_features))
    y = y_fn(X, offset, rng) if y_fn else rng.normal(10.0, 4.0, size=len(seq))
    n = len(seq)
    return FeatureTable(
        X=X,
        columns=tuple(f"f{j}" for j in range(n_features)),
        seq=seq,
        offset=offset,
        week=week,
        game_id=np.array([f"g{w:02d}" for w in week], dtype=object),
        play_id=np.array([f"{s:04d}" for s in seq], dtype=object),
        frame_id=offset + 1,
        carrier_id=np.array([f"RB{s % 4}" for s in seq], dtype=object),
        y=y,
        end_yardline=np.full(n, 20.0),
        bc_x_adj=20.0 + y,
    )


# --------------------------------------------------------------------------
# dropback tree
# --------------------------------------------------------------------------


def dropback_context(rng):
    xy = np.column_stack([rng.uniform(10, 110, 22), rng.uniform(0, 53.3, 22)])
    frame = make_frame(xy)
    offense = frame.player_ids[:11]
    defense = frame.player_ids[11:]
    return DropbackContext(frame, TOWARD_LOW_X, offense[0], tuple(offense[1:6]), tuple(defense))


class RandomSubModels:
    """Random but valid sub-model outputs, fixed per context."""

    def __init__(self, rng):
        self.qb = rng.dirichlet(np.ones(3))
        self.target = rng.uniform(0, 1, 5) * (rng.random(5) < 0.8)
        self.catch = rng.uniform(0, 1, 5)
        self.scores = rng.uniform(0, 1, (5, 16)) * (rng.random((5, 16)) < 0.7)
        self.carrier = {}
        self.rng = rng

    def qb_model(self, ctx):
        return self.qb

    def target_model(self, ctx):
        return self.target

    def global_catch(self, ctx, j):
        return self.catch[j]

    def individual_catch(self, ctx, j):
        return self.scores[j]

    def carrier_model(self, ctx, pid):
        if pid not in self.carrier:
            self.carrier[pid] = float(self.rng.uniform(0, 110))
        return self.carrier[pid]


def enumerate_dropback(ctx, sub, original):
    """Direct nested-sum expectation over every outcome of a dropback.

    Returns the expectation and the total outcome probability.
    """
    p_ta, p_run, p_pass = sub.qb
    t = (sub.target + SOFTMAX_EPS) / np.sum(sub.target + SOFTMAX_EPS)
    catchers = list(ctx.receivers) + list(ctx.defenders)
    total = p_ta * original + p_run * sub.carrier_model(ctx, ctx.qb_id)
    mass = p_ta + p_run
    for j in range(5):
        c = sub.catch[j]
        s = (sub.scores[j] + SOFTMAX_EPS) / np.sum(sub.scores[j] + SOFTMAX_EPS)
        total += p_pass * t[j] * (1 - c) * original
        mass += p_pass * t[j] * (1 - c)
        for k, pid in enumerate(catchers):
            v = sub.carrier_model(ctx, pid)
            if k >= 5:
                v = 100.0 - v
            total += p_pass * t[j] * c * s[k] * v
            mass += p_pass * t[j] * c * s[k]
    return total, mass


# --------------------------------------------------------------------------
# breakaway run
# --------------------------------------------------------------------------


def breakaway_scenario(start=47.0, speed=8.5, contact=8, trail_speed=6.0):
    """A run that breaks free after first contact and scores.

    The carrier runs straight toward the endzone at ``speed``. Until frame
    ``contact`` the defenders close in on a shrinking ring around him; from
    then on they trail behind at ``trail_speed`` and fan out, so the
    separation grows every frame until the carrier crosses the goal line.
    Returns the ``Play`` and the index of the first-contact frame.
    """
    off_dx = np.array([2.0, 1.5, 1.5, 1, 1, 3, 3, 4, 4, 5])
    off_dy = np.array([0.0, -3, 3, -6, 6, -9, 9, -14, 14, -20])
    ring = np.linspace(0, 2 * np.pi, 11, endpoint=False)
    trail_dx = np.array([0.0, 1, 2, 3, 4, 5, 6, 8, 10, 12, 15])
    trail_dy = np.array([-1.5, 1.5, -3, 3, -5, 5, -8, 8, -12, 12, 0.0])
    sides = [OFFENSE] * 11 + [DEFENSE] * 11
    ids = ["BC"] + [f"O{i}" for i in range(10)] + [f"D{i}" for i in range(11)]
    speeds = np.concatenate([np.full(11, speed), np.full(11, trail_speed)])
    frames, k, x_adj = [], 0, start
    while True:
        xc, yc = 10.0 + x_adj, FIELD_WIDTH / 2
        xy = [[xc, yc]] + [[xc + dx, yc + dy] for dx, dy in zip(off_dx, off_dy)]
        if k <= contact:
            r = 4.0 - 3.2 * k / contact
            xy += [[xc + r * math.cos(a), yc + 1.5 * r * math.sin(a)] for a in ring]
        else:
            gap = 0.8 + (speed - trail_speed) * 0.1 * (k - contact)
            spread = 1 + 0.02 * (k - contact)
            xy += [[xc + gap + dx, yc + dy * spread] for dx, dy in zip(trail_dx, trail_dy)]
        done = x_adj <= 0
        event = "touchdown" if done else ("handoff" if k == 0 else ("first_contact" if k == contact else None))
        frames.append(make_frame(np.array(xy), sides=sides, ids=ids, dirs=np.full(22, 270.0), speeds=speeds,
                                 frame_id=k + 1, event=event, ball_at=0))
        if done:
            break
        k += 1
        x_adj -= speed * 0.1
    return Play("scenario", "0001", 1, "OFF", TOWARD_LOW_X, "run", tuple(frames), "BC"), contact
