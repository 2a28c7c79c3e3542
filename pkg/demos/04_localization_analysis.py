"""What the slow features encode: place, and (with reweighting) heading.

Collects a random walk in the four-room arena, fits the hierarchy, then
asks two questions of the 32 features: can a linear readout recover the
agent's (x, y) position, and its heading?  Feature maps are written as
.ppm images colored red/blue by feature value at each visited position.

This is a scaled-down run (2000 steps) so it finishes in a few minutes;
the acceptance suite runs the full 8000-step version.

Run:  python3 demos/04_localization_analysis.py
"""

import math
import os
import time

import numpy as np

from sfanav import analysis, hsfa, sfa, worldsim as ws

outdir = os.path.dirname(os.path.abspath(__file__))

layout = ws.make_layout("fourrooms")
ds = ws.collect_random(layout, n_steps=2000, reset_every=500, seed=0)
print(f"collected {len(ds)} frames, "
      f"occupancy {ws.occupancy_fraction(ds, layout):.2f}")

# Down-weight turn transitions when measuring slowness: a uniform-random
# policy turns on 2/3 of its steps, which would otherwise make view
# direction the fastest (= discarded) signal.
weights = sfa.lra_weights(ds.actions, {ws.LEFT: 0.01, ws.RIGHT: 0.01,
                                       ws.FORWARD: 1.0})

t0 = time.time()
net = hsfa.fit_network(ds.observations, boundaries=ds.boundaries,
                       weights=weights, seed=0)
feats = net.transform_batch(ds.observations)
print(f"fit + transform in {time.time() - t0:.0f}s")

# --- location --------------------------------------------------------------
diam = ws.arena_diameter(layout)
loc = analysis.location_decode(feats, ds.poses, diameter=diam)
print(f"location decode: RMSE {loc['rmse']:.2f} world units "
      f"({100 * loc['rmse_fraction']:.1f}% of the arena diameter)")

# --- heading ---------------------------------------------------------------
_, err = analysis.evaluate_heading(feats, ds.poses[:, 2])
print(f"heading decode: mean circular error {math.degrees(err):.1f} deg "
      "(90 deg would be chance)")

# --- feature maps ----------------------------------------------------------
bounds = (0.0, 6.0, 0.0, 6.0)
for idx in range(3):
    fmap = analysis.feature_map(ds.poses, feats, idx)
    img = analysis.render_feature_map(fmap, bounds, grid=120)
    path = os.path.join(outdir, f"feature_{idx}.ppm")
    ws.save_ppm(img, path)
    print(f"feature {idx}: value range +-{fmap.value_range:.2f} "
          f"-> {os.path.basename(path)}")

# slicing by view direction shows whether a map is heading-invariant
center, width = analysis.heading_sections(6)[0]
fmap = analysis.feature_map(ds.poses, feats, 0, heading_section=(center, width))
img = analysis.render_feature_map(fmap, bounds, grid=120)
ws.save_ppm(img, os.path.join(outdir, "feature_0_east.ppm"))
print("feature 0 restricted to east-facing samples -> feature_0_east.ppm")
