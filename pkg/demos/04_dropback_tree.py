"""Expected end yard line of a pass play from its sub-model probabilities.

The quarterback throws it away, scrambles or passes; a pass goes to one of
five receivers and is caught, dropped or caught by one of sixteen players.
Each leaf of that tree contributes its probability times the end yard line
the ball-carrier model gives the catcher. The sub-models here are simple
placeholders that satisfy the input contracts.
"""

import numpy as np

from playvalue.field import TOWARD_LOW_X
from playvalue.ingest import Frame
from playvalue.valuation import (
    ConstantQbDecision,
    DistanceTargetModel,
    DropbackContext,
    PositionCarrierModel,
    SeparationCatchModel,
    combine_dropback,
)

rng = np.random.default_rng(3)
los = 65.0
qb = np.array([los + 17.0, 26.6])
receivers = np.column_stack([rng.uniform(los - 25, los, 5), rng.uniform(5, 48, 5)])
linemen = np.column_stack([np.full(5, los + 11.0), np.linspace(22, 31, 5)])
# each defender trails a receiver or sits deep, the rest rush
cover = receivers[:, None, :] + rng.normal(0, 2.5, (5, 1, 2))
deep = np.column_stack([rng.uniform(los - 35, los - 25, 2), rng.uniform(10, 43, 2)])
rush = np.column_stack([np.full(4, los + 12.5), np.linspace(20, 33, 4)])
xy = np.vstack([qb, receivers, linemen, cover[:, 0], deep, rush])

ids = [f"O{k:02d}" for k in range(11)] + [f"D{k:02d}" for k in range(11)]
# state columns x, y, s, dis, dir; raw x runs from the back of the low-x endzone
states = np.column_stack([xy[:, 0] + 10.0, xy[:, 1], np.zeros(22), np.zeros(22), np.full(22, 270.0)])
frame = Frame(1, 0.0, None, tuple(ids), ("OFF",) * 11 + ("DEF",) * 11, states)
ctx = DropbackContext(frame, TOWARD_LOW_X, ids[0], tuple(ids[1:6]), tuple(ids[11:]))

out = combine_dropback(ctx, ConstantQbDecision(), DistanceTargetModel(), SeparationCatchModel().global_catch,
                       SeparationCatchModel().individual_catch, PositionCarrierModel(gain=4.0), los)
print(f"line of scrimmage {los:.0f}; expected end yard line {out.expected:.2f} "
      f"({len(out.leaves)} leaves, total probability {out.total_probability:.12f})")

rows = sorted(out.node_table(), key=lambda r: -r["probability"])
print(f"\n{'path':<24} {'prob':>7} {'end':>6}")
for r in rows[:10]:
    flag = "  turnover" if r["possession_change"] else ""
    print(f"{r['path']:<24} {r['probability']:7.4f} {r['value']:6.1f}{flag}")
interceptions = sum(r["probability"] for r in rows if r["possession_change"])
print(f"\nprobability the defense ends up with the ball: {interceptions:.4f}")
