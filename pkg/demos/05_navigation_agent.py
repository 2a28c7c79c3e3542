"""Training the navigation agent on extracted features.

A small actor-critic (3-layer tanh MLP, clipped-surrogate updates with
hand-derived gradients) learns to reach the target in the star maze from
a low-dimensional feature vector.  This demo uses a quick PCA extractor
and a short training budget so it runs in a few minutes; the full
hSFA-vs-PCA-vs-random comparison lives in the acceptance suite.

Run:  python3 demos/05_navigation_agent.py
"""

import time

import numpy as np

from sfanav import agent, analysis, worldsim as ws

layout = ws.make_layout("starmaze_arm")

# quick extractor: PCA on a short random walk
ds = ws.collect_random(layout, n_steps=1500, reset_every=300, seed=0)
pca = analysis.fit_pca_extractor(ds.observations, k=32)
print(f"PCA extractor: 32 components, "
      f"{100 * pca.explained_variance_ratio.sum():.0f}% variance explained")

# random-policy baseline
env = ws.NavEnv(layout, seed=100, l_max=300)
base = agent.evaluate("random", env, n_episodes=20, seed=0)
print(f"random policy: mean episode length {base['mean']:.0f} / 300")

# train
t0 = time.time()
env = ws.NavEnv(layout, seed=0, l_max=300)
model, lengths, _ = agent.train(env, pca.transform, total_steps=30_000, seed=0)
print(f"trained 30k steps in {time.time() - t0:.0f}s")

chunk = max(len(lengths) // 6, 1)
for i in range(0, len(lengths), chunk):
    block = lengths[i:i + chunk]
    print(f"  episodes {i:4d}-{i + len(block) - 1:4d}: "
          f"mean length {np.mean(block):6.1f}")

env = ws.NavEnv(layout, seed=100, l_max=300)
res = agent.evaluate(model, env, n_episodes=20, extractor=pca.transform,
                     seed=0)
print(f"trained policy: mean episode length {res['mean']:.0f} / 300 "
      f"(random baseline {base['mean']:.0f})")
