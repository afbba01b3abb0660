"""Space owned by the ball carrier, frame by frame.

Generates one short synthetic carry and prints the carrier's Voronoi cell
area, the part of it in front of the carrier, and the nearest and farthest
cell boundary distances from the target endzone.
"""

import numpy as np

from playvalue.geometry import BC_AND_DEFENSE, voronoi_features
from playvalue.ingest import extract_ball_carrier_sequences
from playvalue.synthgen import GeneratorConfig, generate_corpus

corpus = generate_corpus(GeneratorConfig(seed=11, weeks=1, plays_per_week=3))
(seq, *_), _ = extract_ball_carrier_sequences(corpus.plays)
play, carrier = seq.play, seq.carrier_id
print(f"play {play.key}: carrier {carrier}, {seq.length} carry frames, drive {seq.drive_direction}")

print(f"{'frame':>5} {'x_adj':>6} {'area':>8} {'front':>8} {'close':>6} {'far':>6} {'area(def only)':>15}")
frames = seq.frames
for frame, x_adj in list(zip(frames, seq.carrier_x_adj))[::4]:
    full = voronoi_features(frame, carrier, seq.drive_direction)
    defense = voronoi_features(frame, carrier, seq.drive_direction, variant=BC_AND_DEFENSE)
    print(f"{frame.frame_id:>5} {x_adj:6.1f} {full.area:8.1f} {full.area_in_front:8.1f} "
          f"{full.close_adj:6.1f} {full.far_adj:6.1f} {defense.area:15.1f}")

# blockers take space away, so the carrier's cell can only grow without them
print("cell grows when teammates are ignored:", bool(np.all(
    [voronoi_features(f, carrier, seq.drive_direction, variant=BC_AND_DEFENSE).area
     >= voronoi_features(f, carrier, seq.drive_direction).area - 1e-9 for f in frames])))
