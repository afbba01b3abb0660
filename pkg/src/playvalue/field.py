"""Field coordinate convention shared by every module.

Raw tracking coordinates:

* ``x`` runs along the field in ``[0, 120]`` yards. The endzones occupy
  ``[0, 10]`` and ``[110, 120]``; the goal lines sit at ``x = 10`` and
  ``x = 110``.
* ``y`` runs across the field in ``[0, 53.3]`` yards.
* ``dir`` is a heading in degrees measured clockwise from the ``+y`` axis,
  so ``dir = 90`` points toward ``+x``. The unit heading vector is
  ``(sin(dir), cos(dir))``.

Adjusted coordinates are expressed relative to the ball-carrier's target
endzone: ``x_adj`` is the signed distance from the target goal line
(positive in the field of play, negative inside the target endzone),
``y_adj`` is the distance from the middle of the field with positive values
on the left when facing the target endzone, and ``dir_adj`` is the heading
relative to straight-at-the-endzone with positive angles to the left.
"""

import numpy as np

FIELD_LENGTH = 120.0
FIELD_WIDTH = 53.3
FIELD_AREA = FIELD_LENGTH * FIELD_WIDTH
HALF_WIDTH = FIELD_WIDTH / 2.0
LOW_GOAL_LINE = 10.0
HIGH_GOAL_LINE = 110.0
FRAME_RATE = 10.0
FRAME_SECONDS = 1.0 / FRAME_RATE
MAX_YARDLINE = 110.0

TOWARD_HIGH_X = "toward_high_x"
TOWARD_LOW_X = "toward_low_x"
DRIVE_DIRECTIONS = (TOWARD_HIGH_X, TOWARD_LOW_X)


def check_direction(drive_direction):
    if drive_direction not in DRIVE_DIRECTIONS:
        raise ValueError(f"unknown drive direction {drive_direction!r}")
    return drive_direction


def x_to_adjusted(x, drive_direction):
    """Signed yards from the target goal line for raw ``x``."""
    check_direction(drive_direction)
    x = np.asarray(x, dtype=float)
    if drive_direction == TOWARD_LOW_X:
        return x - LOW_GOAL_LINE
    return HIGH_GOAL_LINE - x


def adjusted_to_x(x_adj, drive_direction):
    check_direction(drive_direction)
    x_adj = np.asarray(x_adj, dtype=float)
    if drive_direction == TOWARD_LOW_X:
        return x_adj + LOW_GOAL_LINE
    return HIGH_GOAL_LINE - x_adj


def y_to_adjusted(y, drive_direction):
    check_direction(drive_direction)
    y = np.asarray(y, dtype=float)
    if drive_direction == TOWARD_LOW_X:
        return HALF_WIDTH - y
    return y - HALF_WIDTH


def adjusted_to_y(y_adj, drive_direction):
    check_direction(drive_direction)
    y_adj = np.asarray(y_adj, dtype=float)
    if drive_direction == TOWARD_LOW_X:
        return HALF_WIDTH - y_adj
    return y_adj + HALF_WIDTH


def endzone_heading(drive_direction):
    """Raw ``dir`` value that points straight at the target endzone."""
    check_direction(drive_direction)
    return 270.0 if drive_direction == TOWARD_LOW_X else 90.0


def wrap_degrees(angle):
    """Wrap angles to ``(-180, 180]``."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(wrapped == -180.0, 180.0, wrapped)


def dir_to_adjusted(direction, drive_direction):
    return wrap_degrees(endzone_heading(drive_direction) - np.asarray(direction, dtype=float))


def adjusted_to_dir(dir_adj, drive_direction):
    return np.mod(endzone_heading(drive_direction) - np.asarray(dir_adj, dtype=float), 360.0)
