"""Slow feature analysis on synthetic signals.

A slowly varying sine is mixed with fast noise through a random rotation;
linear SFA has to find the rotation that makes the first output as slow as
possible.  A second construction hides the slow source inside a product of
two observed signals, which only the quadratic node can undo.

Run:  python3 demos/01_slow_feature_basics.py
"""

import numpy as np

from sfanav import sfa

rng = np.random.default_rng(0)
t = 4096
steps = np.arange(t)

# --- linear recovery -------------------------------------------------------
slow = np.sin(2 * np.pi * steps / t)
fast = rng.normal(size=(t, 3))
sources = np.column_stack([slow, fast])
mix, _ = np.linalg.qr(rng.normal(size=(4, 4)))
observed = sources @ mix.T

model = sfa.fit_linear_sfa(observed, out_dim=4)
outputs = model.apply(observed)

corr = np.corrcoef(outputs[:, 0], slow)[0, 1]
print("linear SFA")
print("  delta (slowness, ascending):", np.round(model.delta, 4))
print(f"  |corr(y1, sine)| = {abs(corr):.4f}")

report = sfa.constraint_report(outputs)
print(f"  constraint check: |mean| <= {report['max_abs_mean']:.2e}, "
      f"|var-1| <= {report['max_abs_var_minus_1']:.2e}, "
      f"|corr| <= {report['max_abs_offdiag_corr']:.2e}")

# --- a source only visible after quadratic expansion -----------------------
flip = (-1.0) ** steps                      # fastest possible signal
hidden = np.column_stack([slow * flip, flip, rng.normal(size=(t, 2))])
mix2, _ = np.linalg.qr(rng.normal(size=(4, 4)))
observed2 = hidden @ mix2.T                 # slow source appears only as a product

lin = sfa.fit_linear_sfa(observed2, out_dim=4)
lin_best = np.abs(np.corrcoef(lin.apply(observed2).T, slow)[-1, :-1]).max()

node = sfa.fit_quadratic_node(observed2, d_mid=4, d_out=4, seed=0)
quad_out = sfa.apply_node(node, observed2)
quad_best = np.abs(np.corrcoef(quad_out.T, slow)[-1, :-1]).max()

print("quadratic node")
print(f"  best linear    |corr| = {lin_best:.4f}  (cannot see the product)")
print(f"  best quadratic |corr| = {quad_best:.4f}")

# --- loop rate adaptation --------------------------------------------------
# Down-weighting a class of transitions changes what counts as "slow".
actions = np.tile([0, 2], t // 2)[:t]
weights = sfa.lra_weights(actions, {0: 1.0, 1: 1.0, 2: 4.0})
print("LRA difference weights for alternating actions (sqrt(1*4) = 2):",
      np.unique(weights))
