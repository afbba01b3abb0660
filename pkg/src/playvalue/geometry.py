"""Endzone-adjusted coordinates, carrier-relative geometry and Voronoi cells.

Voronoi cells are built by clipping the field rectangle with the
perpendicular-bisector half-planes of every other generator. With 22 sites
this is cheap and exact, and it lets every cell edge remember which
neighbouring generator produced it.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .field import (
    FIELD_LENGTH,
    FIELD_WIDTH,
    TOWARD_LOW_X,
    dir_to_adjusted,
    wrap_degrees,
    x_to_adjusted,
    y_to_adjusted,
)

ALL_PLAYERS = "all_players"
BC_AND_DEFENSE = "bc_and_defense"
VARIANTS = (ALL_PLAYERS, BC_AND_DEFENSE)

BOUNDARY = -1
DUPLICATE_TOL = 1e-9
PERTURBATION = 1e-6
_EDGE_TOL = 1e-9
_FIELD_RECT = ((0.0, 0.0), (FIELD_LENGTH, 0.0), (FIELD_LENGTH, FIELD_WIDTH), (0.0, FIELD_WIDTH))


@dataclass(frozen=True)
class AdjustedState:
    x_adj: float
    y_adj: float
    dir_adj: float
    s: float = 0.0
    dis: float = 0.0


@dataclass(frozen=True)
class RelativeState:
    x_change: float
    y_change: float
    dist_to_ball: float
    dir_wrt_bc_diff: float
    degenerate: bool = False


@dataclass(frozen=True)
class VoronoiFeatures:
    close_adj: float
    far_adj: float
    area: float
    area_in_front: float
    bubble: bool = False
    perturbed: bool = False


def adjust_state(p, drive_direction):
    """Express a raw ``PlayerState`` relative to the target endzone."""
    return AdjustedState(
        x_adj=float(x_to_adjusted(p.x, drive_direction)),
        y_adj=float(y_to_adjusted(p.y, drive_direction)),
        dir_adj=float(dir_to_adjusted(p.dir, drive_direction)),
        s=float(p.s),
        dis=float(p.dis),
    )


def adjust_arrays(x, y, direction, drive_direction):
    return (
        x_to_adjusted(x, drive_direction),
        y_to_adjusted(y, drive_direction),
        dir_to_adjusted(direction, drive_direction),
    )


def relative_arrays(x_adj, y_adj, dir_adj, bc_x_adj, bc_y_adj):
    """Vectorised carrier-relative features.

    Returns ``x_change, y_change, dist_to_ball, dir_wrt_bc_diff, degenerate``.
    The pursuit angle compares each player's heading with the bearing of the
    segment from the player to the carrier; coincident players get 0 and a
    ``degenerate`` flag.
    """
    x_change = bc_x_adj - np.asarray(x_adj, dtype=float)
    y_change = np.asarray(y_adj, dtype=float) - bc_y_adj
    dist = np.hypot(x_change, y_change)
    # forward (toward endzone) and leftward components of player -> carrier
    bearing = np.degrees(np.arctan2(-y_change, -x_change))
    degenerate = dist == 0.0
    diff = np.abs(wrap_degrees(np.asarray(dir_adj, dtype=float) - bearing))
    diff = np.where(degenerate, 0.0, diff)
    return x_change, y_change, dist, diff, degenerate


def relative_state(p, carrier):
    """Position of adjusted state ``p`` relative to the adjusted carrier."""
    xc, yc, d, diff, deg = relative_arrays(p.x_adj, p.y_adj, p.dir_adj, carrier.x_adj, carrier.y_adj)
    return RelativeState(float(xc), float(yc), float(d), float(diff), bool(deg))


# --------------------------------------------------------------------------
# Voronoi cells
# --------------------------------------------------------------------------


def _clip(poly, labels, ax, ay, b, label):
    """Clip a convex polygon with ``ax*x + ay*y <= b``.

    ``labels[i]`` names the source of the edge from vertex i to i+1; the new
    edge along the clipping line gets ``label``.
    """
    n = len(poly)
    if n == 0:
        return poly, labels
    vals = [ax * px + ay * py - b for px, py in poly]
    tol = 1e-12 * (abs(b) + 1.0)
    if all(v <= tol for v in vals):
        return poly, labels
    out, out_labels = [], []
    for i in range(n):
        j = (i + 1) % n
        p, q = poly[i], poly[j]
        vp, vq = vals[i], vals[j]
        p_in, q_in = vp <= tol, vq <= tol
        if p_in:
            out.append(p)
            if q_in:
                out_labels.append(labels[i])
            else:
                t = vp / (vp - vq)
                out_labels.append(labels[i])
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
                out_labels.append(label)
        elif q_in:
            t = vp / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
            out_labels.append(labels[i])
    return out, out_labels


def polygon_area(poly):
    area = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return 0.5 * area


def voronoi_cell(points, index, others=None):
    """Clipped Voronoi cell of ``points[index]`` inside the field.

    Returns the polygon vertices (counter-clockwise) and the edge labels:
    the index of the neighbouring generator or ``BOUNDARY``.
    """
    px, py = float(points[index][0]), float(points[index][1])
    poly = list(_FIELD_RECT)
    labels = [BOUNDARY] * 4
    candidates = range(len(points)) if others is None else others
    for j in candidates:
        if j == index:
            continue
        qx, qy = float(points[j][0]), float(points[j][1])
        ax, ay = qx - px, qy - py
        b = 0.5 * ((qx * qx + qy * qy) - (px * px + py * py))
        poly, labels = _clip(poly, labels, ax, ay, b, j)
        if not poly:
            break
    return poly, labels


def separate_duplicates(points, order_keys):
    """Nudge coincident generators apart by ``PERTURBATION`` yards.

    The generator that comes later in ``order_keys`` order moves, along an
    angle drawn from a generator seeded by its rank, so the result does not
    depend on input order.
    """
    points = np.array(points, dtype=float)
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if d2.min() >= DUPLICATE_TOL**2:
        return points, False
    ranks = sorted(range(len(points)), key=lambda i: order_keys[i])
    moved = False
    for r_pos, i in enumerate(ranks):
        for j in ranks[:r_pos]:
            if math.hypot(*(points[i] - points[j])) < DUPLICATE_TOL:
                theta = np.random.default_rng(r_pos).uniform(0.0, 2.0 * math.pi)
                points[i] += PERTURBATION * np.array([math.cos(theta), math.sin(theta)])
                moved = True
    return points, moved


def cell_features(poly, carrier_x, drive_direction):
    """Area, area in front and extreme adjusted x of a clipped cell."""
    area = polygon_area(poly)
    if drive_direction == TOWARD_LOW_X:
        front, _ = _clip(poly, [BOUNDARY] * len(poly), 1.0, 0.0, carrier_x, BOUNDARY)
    else:
        front, _ = _clip(poly, [BOUNDARY] * len(poly), -1.0, 0.0, -carrier_x, BOUNDARY)
    in_front = polygon_area(front) if len(front) >= 3 else 0.0
    x_adj = x_to_adjusted(np.array([v[0] for v in poly]), drive_direction)
    close = max(float(x_adj.min()), 0.0)
    far = max(float(x_adj.max()), 0.0)
    return close, far, area, min(max(in_front, 0.0), area)


def voronoi_features(frame, carrier_id, drive_direction, variant=ALL_PLAYERS):
    """Features of the carrier's clipped Voronoi cell.

    Parameters
    ----------
    frame : Frame
    carrier_id : str
    drive_direction : str
    variant : {"all_players", "bc_and_defense"}
        Which generators take part. ``bc_and_defense`` keeps only the
        carrier and the defenders.

    Returns
    -------
    VoronoiFeatures
        ``bubble`` is only meaningful for ``all_players``: true when every
        cell edge that is not on the field boundary is shared with a
        teammate's cell.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown Voronoi variant {variant!r}")
    ci = frame.index(carrier_id)
    keep = [
        i
        for i, side in enumerate(frame.team_sides)
        if i == ci or variant == ALL_PLAYERS or side == "defense"
    ]
    points = np.column_stack([frame.x[keep], frame.y[keep]])
    ids = [frame.player_ids[i] for i in keep]
    points, moved = separate_duplicates(points, ids)
    local = keep.index(ci)
    poly, labels = voronoi_cell(points, local)
    close, far, area, in_front = cell_features(poly, float(points[local][0]), drive_direction)
    bubble = False
    if variant == ALL_PLAYERS:
        carrier_side = frame.team_sides[ci]
        bubble = True
        for k, lab in enumerate(labels):
            if lab == BOUNDARY:
                continue
            (x0, y0), (x1, y1) = poly[k], poly[(k + 1) % len(poly)]
            if math.hypot(x1 - x0, y1 - y0) <= _EDGE_TOL:
                continue
            if frame.team_sides[keep[lab]] != carrier_side:
                bubble = False
                break
    return VoronoiFeatures(close, far, area, in_front, bubble, moved)


def all_cells(points):
    """Clipped cells of every generator; used for tessellation checks."""
    points, _ = separate_duplicates(points, list(range(len(points))))
    return [voronoi_cell(points, i)[0] for i in range(len(points))]


def cells_geojson(frame, carrier_id=None, variant=ALL_PLAYERS):
    """Cell polygons of one frame as a GeoJSON-style FeatureCollection."""
    keep = [
        i
        for i, (pid, side) in enumerate(zip(frame.player_ids, frame.team_sides))
        if variant == ALL_PLAYERS or side == "defense" or pid == carrier_id
    ]
    points = np.column_stack([frame.x[keep], frame.y[keep]])
    points, _ = separate_duplicates(points, [frame.player_ids[i] for i in keep])
    features = []
    for local, i in enumerate(keep):
        poly, _ = voronoi_cell(points, local)
        ring = [list(v) for v in poly] + [list(poly[0])]
        features.append(
            {
                "type": "Feature",
                "properties": {"player_id": frame.player_ids[i], "team_side": frame.team_sides[i]},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return json.dumps({"type": "FeatureCollection", "frame_id": frame.frame_id, "features": features})
