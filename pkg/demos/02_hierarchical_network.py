"""Hierarchical SFA on an image time series.

A stack of quadratic SFA nodes with shared weights per layer turns 60x80
RGB frames into 32 slow features.  Here the network is trained on a short
simulator recording; the point is the geometry of the hierarchy and the
bounded, decorrelated outputs, not localization quality (that needs a
longer walk -- see demo 04).

Run:  python3 demos/02_hierarchical_network.py   (~1 minute)
"""

import time

import numpy as np

from sfanav import hsfa, sfa, worldsim

layout = worldsim.make_layout("fourrooms")
ds = worldsim.collect_random(layout, n_steps=600, reset_every=300, seed=0)
print(f"recorded {len(ds)} frames, episode boundaries at {list(ds.boundaries)}")

t0 = time.time()
net = hsfa.fit_network(ds.observations, boundaries=ds.boundaries, seed=0)
print(f"fit in {time.time() - t0:.0f}s")

print("stage output shapes:", net.layer_shapes())
for spec in hsfa.DEFAULT_LAYER_SPECS:
    print(f"  rf={spec.rf} stride={spec.stride} channels={spec.channels}")

feats = net.transform_batch(ds.observations)
print(f"features: {feats.shape}, range [{feats.min():.2f}, {feats.max():.2f}]"
      " (clipped to +-4)")

delta = sfa.measured_delta(feats, ds.boundaries)
print("slowness of the first 8 features:", np.round(delta[:8], 3))
print("(ascending: slow features first, faster ones later)")

# single-frame inference matches the batch path
one = net.transform(ds.observations[0])
print("single-frame vs batch max difference:",
      float(np.abs(one - feats[0]).max()))
