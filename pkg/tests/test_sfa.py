"""Slow feature extraction against analytic and naive oracles."""

import numpy as np
import pytest

from sfanav import sfa
from sfanav.numcore import covariance


def _corr(a, b) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def rotated_slow_fast(t=4096, n_fast=3, seed=0):
    """A slow sine mixed with faster noise channels by a fixed rotation."""
    rng = np.random.default_rng(seed)
    slow = np.sin(2 * np.pi * np.arange(t) / t)
    fast = [rng.normal(size=t) for _ in range(n_fast)]
    src = np.column_stack([slow] + fast)
    q, _ = np.linalg.qr(rng.normal(size=(n_fast + 1, n_fast + 1)))
    return src @ q.T, slow


# ---------------------------------------------------------------------------
# temporal differences

def test_differences_match_naive_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 2))
    d = sfa.temporal_differences(x)
    ref = np.array([x[i + 1] - x[i] for i in range(9)])
    assert np.array_equal(d, ref)


def test_boundary_pairs_are_dropped():
    x = np.arange(8, dtype=float)[:, None]
    d = sfa.temporal_differences(x, boundaries=[3, 6])
    # pairs (2,3) and (5,6) straddle episode starts
    assert d.shape == (5, 1)
    assert np.array_equal(d[:, 0], [1, 1, 1, 1, 1])
    d_all = sfa.temporal_differences(x, boundaries=[3], skip_boundaries=False)
    assert d_all.shape == (7, 1)


def test_boundary_out_of_range_rejected():
    with pytest.raises(ValueError, match="out of range"):
        sfa.temporal_differences(np.zeros((5, 1)), boundaries=[9])


# ---------------------------------------------------------------------------
# linear SFA

def test_linear_sfa_constraints_on_training_data():
    x, _ = rotated_slow_fast()
    tr = sfa.fit_linear_sfa(x, out_dim=4)
    y = tr.apply(x)
    rep = sfa.constraint_report(y, tr.delta)
    assert rep["max_abs_mean"] <= 1e-8
    assert rep["max_abs_var_minus_1"] <= 1e-6
    assert rep["max_abs_offdiag_corr"] <= 1e-6
    assert rep["delta_ascending"]


def test_linear_sfa_recovers_rotated_sine():
    x, slow = rotated_slow_fast()
    tr = sfa.fit_linear_sfa(x, out_dim=2)
    assert abs(_corr(tr.apply(x)[:, 0], slow)) >= 0.95


def test_fit_delta_matches_measured_output_delta():
    x, _ = rotated_slow_fast(t=1000)
    tr = sfa.fit_linear_sfa(x, out_dim=3)
    measured = sfa.measured_delta(tr.apply(x))
    assert np.allclose(tr.delta, measured, atol=1e-8)


def test_streamed_fit_equals_in_memory_fit():
    rng = np.random.default_rng(1)
    blocks_data = [rng.normal(size=(300, 6)) for _ in range(3)]

    def blocks():
        for b in blocks_data:
            yield b, (), None

    st = sfa.fit_linear_sfa_stream(blocks, out_dim=4)
    # pooling with per-block boundaries must match the block protocol
    pooled = np.concatenate(blocks_data)
    mem = sfa.fit_linear_sfa(pooled, out_dim=4, boundaries=[300, 600])
    assert np.abs(st.rotation - mem.rotation).max() <= 1e-10
    assert np.abs(st.whitening.projection - mem.whitening.projection).max() <= 1e-10
    assert np.abs(st.delta - mem.delta).max() <= 1e-10


def test_refit_is_bit_identical():
    x, _ = rotated_slow_fast(t=800, seed=3)
    a = sfa.fit_linear_sfa(x, out_dim=3)
    b = sfa.fit_linear_sfa(x, out_dim=3)
    assert np.array_equal(a.rotation, b.rotation)
    assert np.array_equal(a.whitening.projection, b.whitening.projection)
    assert np.array_equal(a.apply(x), b.apply(x))


def test_skipped_boundary_changes_difference_statistics():
    # a huge jump at the boundary dominates the diff covariance unless dropped
    t = 400
    x = np.concatenate([np.sin(np.linspace(0, 2 * np.pi, t // 2)),
                        50 + np.sin(np.linspace(0, 2 * np.pi, t // 2))])
    x = np.column_stack([x, np.random.default_rng(4).normal(size=t)])
    with_skip = sfa.fit_linear_sfa(x, out_dim=1, boundaries=[t // 2])
    without = sfa.fit_linear_sfa(x, out_dim=1, boundaries=[t // 2],
                                 skip_boundaries=False)
    assert not np.allclose(with_skip.delta, without.delta)


# ---------------------------------------------------------------------------
# quadratic expansion and nodes

def test_quadratic_expand_small_case():
    out = sfa.quadratic_expand(np.array([2.0, 3.0]))
    # linear terms first, then upper-triangle products in row-major order
    assert np.array_equal(out, [2.0, 3.0, 4.0, 6.0, 9.0])
    assert sfa.expanded_dim(2) == 5
    assert sfa.expanded_dim(32) == 32 + 32 * 33 // 2


def test_quadratic_expand_batch_matches_per_row():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(7, 4))
    batch = sfa.quadratic_expand(x)
    for i in range(7):
        assert np.array_equal(batch[i], sfa.quadratic_expand(x[i]))


def test_quadratic_expand_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        sfa.quadratic_expand(np.array([1.0, np.inf]))


def quadratically_embedded(t=4096):
    """Slow sine visible only through a product of observed channels."""
    s = np.sin(2 * np.pi * np.arange(t) / t)
    flip = np.where(np.arange(t) % 2 == 0, 1.0, -1.0)
    return np.column_stack([s * flip, flip]), s


def test_quadratic_node_recovers_embedded_source():
    x, s = quadratically_embedded()
    lin = sfa.fit_linear_sfa(x, out_dim=2)
    lin_y = lin.apply(x)
    lin_best = max(abs(_corr(lin_y[:, j], s)) for j in range(2))
    node = sfa.fit_quadratic_node(x, d_mid=2, d_out=3, seed=0)
    y = sfa.apply_node(node, x)
    quad_best = max(abs(_corr(y[:, j], s)) for j in range(3))
    assert quad_best >= 0.9
    assert lin_best < 0.5


def test_apply_node_clips_to_bound():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(500, 3))
    node = sfa.fit_quadratic_node(x, d_mid=3, d_out=3, clip_bound=4.0, seed=0)
    y = sfa.apply_node(node, 100 * x)  # far outside the training range
    assert np.abs(y).max() <= 4.0


def test_node_inference_is_noise_free_and_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400, 4))
    node = sfa.fit_quadratic_node(x, d_mid=4, d_out=2, seed=0)
    assert np.array_equal(sfa.apply_node(node, x), sfa.apply_node(node, x))


def test_node_refit_same_seed_identical_different_seed_not():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(400, 4))
    a = sfa.fit_quadratic_node(x, d_mid=4, d_out=2, seed=1)
    b = sfa.fit_quadratic_node(x, d_mid=4, d_out=2, seed=1)
    c = sfa.fit_quadratic_node(x, d_mid=4, d_out=2, seed=2)
    assert np.array_equal(a.extract.rotation, b.extract.rotation)
    assert not np.array_equal(a.extract.rotation, c.extract.rotation)


# ---------------------------------------------------------------------------
# difference weights (learning rate adaptation)

def test_lra_alternating_actions_geometric_mean():
    actions = np.array([0, 1, 0, 1, 0])
    w = sfa.lra_weights(actions, {0: 1.0, 1: 4.0, 2: 1.0})
    assert np.array_equal(w, [2.0, 2.0, 2.0, 2.0])


def test_lra_unknown_action_rejected():
    with pytest.raises(ValueError, match="unknown action"):
        sfa.lra_weights(np.array([0, 9]), {0: 1.0})


def test_uniform_weights_reproduce_unweighted_fit():
    x, _ = rotated_slow_fast(t=600, seed=9)
    plain = sfa.fit_linear_sfa(x, out_dim=3)
    weighted = sfa.fit_linear_sfa(x, out_dim=3, weights=np.full(len(x) - 1, 3.0))
    assert np.abs(plain.rotation - weighted.rotation).max() <= 1e-12
    assert np.abs(plain.delta - weighted.delta).max() <= 1e-12
    assert np.abs(plain.whitening.projection
                  - weighted.whitening.projection).max() <= 1e-12


def test_zero_weight_equals_dropped_boundary_pair():
    x, _ = rotated_slow_fast(t=500, seed=10)
    w = np.ones(len(x) - 1)
    w[249] = 0.0  # silence the pair (249, 250)
    weighted = sfa.fit_linear_sfa(x, out_dim=3, weights=w)
    bounded = sfa.fit_linear_sfa(x, out_dim=3, boundaries=[250])
    assert np.allclose(weighted.rotation, bounded.rotation, atol=1e-10)
    assert np.allclose(weighted.delta, bounded.delta, atol=1e-10)


def test_weight_length_mismatch_rejected():
    x, _ = rotated_slow_fast(t=100, seed=11)
    with pytest.raises(ValueError):
        sfa.fit_linear_sfa(x, out_dim=2, weights=np.ones(5))
