"""Value of a run play as it unfolds.

Trains on weeks 1-2 and values a week-3 carry frame by frame: the expected
end yard line, the end yard-line density from a forest of regression trees,
and the expected points and win probability integrated against that density.
"""

import warnings

import numpy as np

from playvalue.featurize import build_feature_table
from playvalue.ingest import extract_ball_carrier_sequences
from playvalue.models import ModelConfig, fit_model
from playvalue.synthgen import GeneratorConfig, planted_signal_corpus
from playvalue.valuation import (
    DensityForest,
    ExpectedPoints,
    GameState,
    WinProbability,
    density_modes,
    valuation_timeline,
)

corpus = planted_signal_corpus(GeneratorConfig(seed=4, weeks=3, plays_per_week=50))
sequences, _ = extract_ball_carrier_sequences(corpus.plays)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    table = build_feature_table(sequences)

train = table.subset(np.flatnonzero(table.week < 3))
model = fit_model(train, ModelConfig("gbt", {"n_trees": 40}))
forest = DensityForest(n_trees=20, min_leaf=30, seed=0).fit(train.X, train.end_yardline, train.columns)

# the longest week-3 carry
held = np.flatnonzero(table.week == 3)
seq = max(np.unique(table.seq[held]), key=lambda s: np.sum(table.seq == s))
play = table.subset(np.flatnonzero(table.seq == seq))
state = GameState(float(play.bc_x_adj[0]), down=1, distance=10, score_diff=-4, seconds_remaining=240)
print(f"play {play.game_id[0]}:{play.play_id[0]}, {len(play)} frames, "
      f"ends at the {play.end_yardline[0]:.1f} (trailing by 4, 4:00 left)")

plug_in = valuation_timeline(play, model, [ExpectedPoints(), WinProbability()], state=state)
dens = valuation_timeline(play, model, [ExpectedPoints(), WinProbability()], density_model=forest, state=state)
densities = forest.estimate_many(play.X)

print(f"\n{'frame':>5} {'at':>5} {'E[end]':>7} {'EP':>6} {'WP':>6} {'E[EP]':>6} {'E[WP]':>6}  density modes")
for i in range(0, len(play), 8):
    r, d = plug_in.records[i], dens.records[i]
    modes = ", ".join(f"{m}" for m in density_modes(densities[i]))
    print(f"{r.frame_id:>5} {r.carrier_yardline:5.1f} {r.expected_end_yardline:7.1f} "
          f"{r.values['ep']:6.2f} {r.values['wp']:6.3f} {d.values['ep']:6.2f} {d.values['wp']:6.3f}  [{modes}]")

# averaging the value over the density is not the value at the average end spot
gap = np.abs(dens.series("ep") - plug_in.series("ep")).max()
print(f"\nlargest gap between plug-in and density-integrated EP: {gap:.2f} points")
