"""Linear and quadratic slow feature extraction.

A linear SFA fit whitens its input and then keeps the directions along
which consecutive whitened samples change least (smallest eigenvalues of
the covariance of temporal differences). The quadratic node wraps that
primitive into the five-stage layer used by the hierarchical network:
reduce -> polynomial expansion -> (training-time noise) -> extract ->
clip.

Fits can run over a stream of independent time-series blocks (one block
per patch position when training a layer with weight sharing); only the
second-moment accumulators are kept in memory.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .numcore import (
    DEFAULT_RANK_TOL,
    WhiteningTransform,
    eigh_sym,
    whitening_from_moments,
)

__all__ = [
    "LinearSfaTransform",
    "QuadraticSfaNode",
    "temporal_differences",
    "fit_linear_sfa",
    "fit_linear_sfa_stream",
    "quadratic_expand",
    "expanded_dim",
    "fit_quadratic_node",
    "fit_quadratic_node_stream",
    "apply_node",
    "lra_weights",
    "constraint_report",
]

DEFAULT_NOISE_STD = 1e-4
DEFAULT_CLIP_BOUND = 4.0


# ---------------------------------------------------------------------------
# temporal differences

def _diff_keep_mask(t: int, boundaries) -> np.ndarray:
    """Mask over the t-1 consecutive pairs; pairs straddling an episode
    boundary (index where a new episode starts) are dropped."""
    keep = np.ones(t - 1, dtype=bool)
    for b in boundaries:
        b = int(b)
        if b < 0 or b > t:
            raise ValueError(f"boundary index {b} out of range for {t} samples")
        if 0 < b < t:
            keep[b - 1] = False
    return keep


def temporal_differences(data, boundaries=(), skip_boundaries=True):
    """Differences x(t+1) - x(t) between consecutive rows.

    ``boundaries`` lists the indices at which a new episode starts; with
    ``skip_boundaries`` (the default) pairs that straddle a boundary are
    excluded from the output.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples to take differences")
    d = np.diff(x, axis=0)
    if skip_boundaries and len(boundaries) > 0:
        d = d[_diff_keep_mask(x.shape[0], boundaries)]
    return d


# ---------------------------------------------------------------------------
# linear SFA

@dataclass(frozen=True)
class LinearSfaTransform:
    """Affine slow-feature map: whitening followed by a rotation.

    ``rotation`` rows are orthonormal directions in whitened space,
    ordered by slowness; ``delta`` holds the matching mean squared
    one-step output changes, ascending.
    """

    whitening: WhiteningTransform
    rotation: np.ndarray  # (M, K)
    delta: np.ndarray     # (M,)

    @property
    def in_dim(self) -> int:
        return self.whitening.in_dim

    @property
    def out_dim(self) -> int:
        return self.rotation.shape[0]

    @functools.cached_property
    def _weight(self) -> np.ndarray:
        # composing rotation and whitening avoids materializing the
        # full-rank whitened representation on every call
        return np.ascontiguousarray(self.rotation @ self.whitening.projection)

    def apply(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} columns, got {x.shape[1]}")
        y = (x - self.whitening.mean) @ self._weight.T
        return y[0] if single else y


class _MomentAccumulator:
    """Streaming accumulator for a (weighted) mean and second moment."""

    def __init__(self, dim: int):
        self.dim = dim
        self.wsum = 0.0
        self.vec = np.zeros(dim)
        self.mat = np.zeros((dim, dim))

    def add(self, x: np.ndarray, weights=None):
        if x.shape[0] == 0:
            return
        if weights is None:
            self.wsum += x.shape[0]
            self.vec += x.sum(axis=0)
            self.mat += x.T @ x
        else:
            w = np.asarray(weights, dtype=np.float64)
            self.wsum += w.sum()
            self.vec += w @ x
            self.mat += (w[:, None] * x).T @ x

    def covariance(self):
        if self.wsum <= 0:
            raise ValueError("no samples (or all-zero weights) accumulated")
        mean = self.vec / self.wsum
        cov = self.mat / self.wsum - np.outer(mean, mean)
        return 0.5 * (cov + cov.T), mean


def _fix_signs(rotation: np.ndarray, projection: np.ndarray):
    """Flip each component so its largest-magnitude input loading is
    positive; makes refits bit-comparable."""
    loadings = rotation @ projection  # (M, N)
    for j in range(rotation.shape[0]):
        k = int(np.argmax(np.abs(loadings[j])))
        if loadings[j, k] < 0:
            rotation[j] = -rotation[j]
    return rotation


def fit_linear_sfa_stream(block_fn, out_dim, rank_tol=DEFAULT_RANK_TOL,
                          skip_boundaries=True) -> LinearSfaTransform:
    """Fit linear SFA over a stream of independent time-series blocks.

    ``block_fn()`` must return a fresh iterator of ``(x, boundaries,
    diff_weights)`` tuples each time it is called (two passes are made:
    mean/covariance, then difference covariance). ``diff_weights`` may be
    None or hold one nonnegative weight per consecutive pair of the
    block; weights of boundary-straddling pairs are dropped along with
    the pairs.
    """
    point_acc = None
    for x, _, _ in block_fn():
        x = np.asarray(x, dtype=np.float64)
        if point_acc is None:
            point_acc = _MomentAccumulator(x.shape[1])
        point_acc.add(x)
    if point_acc is None or point_acc.wsum < 2:
        raise ValueError("need at least 2 samples to fit SFA")
    cov, mean = point_acc.covariance()
    whitening = whitening_from_moments(cov, mean, rank_tol)
    k = whitening.out_dim
    if out_dim > k:
        raise ValueError(f"out_dim {out_dim} exceeds post-whitening rank {k}")

    # Differences commute with the affine whitening map, so the whitened
    # difference covariance is P C_dot P^T with C_dot accumulated on raw
    # differences.
    diff_acc = _MomentAccumulator(point_acc.dim)
    n_diffs = 0
    for x, boundaries, dw in block_fn():
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] < 2:
            continue
        d = np.diff(x, axis=0)
        if dw is not None:
            dw = np.asarray(dw, dtype=np.float64)
            if dw.shape != (x.shape[0] - 1,):
                raise ValueError("difference weights must have one entry per pair")
            if np.any(dw < 0):
                raise ValueError("difference weights must be nonnegative")
        if skip_boundaries and len(boundaries) > 0:
            keep = _diff_keep_mask(x.shape[0], boundaries)
            d = d[keep]
            if dw is not None:
                dw = dw[keep]
        diff_acc.add(d, dw)
        n_diffs += d.shape[0]
    if n_diffs < 2:
        raise ValueError("fewer than 2 usable difference rows")
    dcov_raw, _ = diff_acc.covariance()
    dcov = whitening.projection @ dcov_raw @ whitening.projection.T
    vals, vecs = eigh_sym(dcov)
    rotation = vecs[:, :out_dim].T.copy()
    rotation = _fix_signs(rotation, whitening.projection)
    return LinearSfaTransform(whitening=whitening, rotation=rotation,
                              delta=vals[:out_dim].copy())


def fit_linear_sfa(data, out_dim, boundaries=(), weights=None,
                   rank_tol=DEFAULT_RANK_TOL, skip_boundaries=True) -> LinearSfaTransform:
    """Fit linear SFA on a single in-memory time series.

    ``weights``, if given, holds one nonnegative weight per consecutive
    difference (length T-1) and enters the difference covariance only.
    """
    x = np.asarray(data, dtype=np.float64)

    def blocks():
        yield x, boundaries, weights

    return fit_linear_sfa_stream(blocks, out_dim, rank_tol, skip_boundaries)


# ---------------------------------------------------------------------------
# quadratic expansion and the five-stage node

def expanded_dim(k: int) -> int:
    return k + k * (k + 1) // 2


@functools.lru_cache(maxsize=None)
def _triu_indices(k: int):
    return np.triu_indices(k)


def quadratic_expand(v):
    """Degree-2 polynomial expansion without constant term.

    Order: the K linear terms first, then the monomials v_i * v_j for
    i <= j in row-major order of the upper triangle. Accepts a single
    vector or a matrix of row vectors.
    """
    x = np.asarray(v, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input to quadratic expansion")
    t, k = x.shape
    iu, ju = _triu_indices(k)
    out = np.empty((t, expanded_dim(k)))
    out[:, :k] = x
    out[:, k:] = x[:, iu] * x[:, ju]
    return out[0] if single else out


@dataclass(frozen=True)
class QuadraticSfaNode:
    """One hierarchical layer: reduce -> expand -> extract -> clip.

    Gaussian noise on the expanded signal is a training-time device only;
    the fitted node carries no noise state and inference is
    deterministic.
    """

    reduce: LinearSfaTransform
    extract: LinearSfaTransform
    noise_std: float = DEFAULT_NOISE_STD
    clip_bound: float = DEFAULT_CLIP_BOUND

    @property
    def in_dim(self) -> int:
        return self.reduce.in_dim

    @property
    def mid_dim(self) -> int:
        return self.reduce.out_dim

    @property
    def out_dim(self) -> int:
        return self.extract.out_dim


def _noise_rng(seed, block_index):
    # seed may be an int or a tuple of ints (e.g. (run_seed, layer_index))
    parts = seed if isinstance(seed, tuple) else (seed,)
    return np.random.default_rng((0x5FA, *(int(p) for p in parts),
                                  int(block_index)))


def fit_quadratic_node_stream(block_fn, d_mid, d_out,
                              noise_std=DEFAULT_NOISE_STD,
                              clip_bound=DEFAULT_CLIP_BOUND,
                              seed=0, rank_tol=DEFAULT_RANK_TOL,
                              skip_boundaries=True) -> QuadraticSfaNode:
    """Fit a quadratic node over a stream of blocks (see
    :func:`fit_linear_sfa_stream` for the block protocol).

    The noise added to the expanded signal is seeded per block index so
    both accumulation passes of the extract stage see identical data.
    """
    reduce = fit_linear_sfa_stream(block_fn, d_mid, rank_tol, skip_boundaries)

    def expanded_blocks():
        for i, (x, boundaries, dw) in enumerate(block_fn()):
            e = quadratic_expand(reduce.apply(x))
            if noise_std > 0:
                e = e + _noise_rng(seed, i).normal(0.0, noise_std, size=e.shape)
            yield e, boundaries, dw

    extract = fit_linear_sfa_stream(expanded_blocks, d_out, rank_tol,
                                    skip_boundaries)
    return QuadraticSfaNode(reduce=reduce, extract=extract,
                            noise_std=float(noise_std),
                            clip_bound=float(clip_bound))


def fit_quadratic_node(data, d_mid, d_out, noise_std=DEFAULT_NOISE_STD,
                       clip_bound=DEFAULT_CLIP_BOUND, boundaries=(),
                       weights=None, seed=0, rank_tol=DEFAULT_RANK_TOL,
                       skip_boundaries=True) -> QuadraticSfaNode:
    x = np.asarray(data, dtype=np.float64)

    def blocks():
        yield x, boundaries, weights

    return fit_quadratic_node_stream(blocks, d_mid, d_out, noise_std,
                                     clip_bound, seed, rank_tol,
                                     skip_boundaries)


def apply_node(node: QuadraticSfaNode, data) -> np.ndarray:
    """Inference path of a node: reduce -> expand -> extract -> clip.

    No noise is ever applied here.
    """
    x = np.asarray(data, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != node.in_dim:
        raise ValueError(f"expected {node.in_dim} columns, got {x.shape[1]}")
    y = node.extract.apply(quadratic_expand(node.reduce.apply(x)))
    np.clip(y, -node.clip_bound, node.clip_bound, out=y)
    return y[0] if single else y


# ---------------------------------------------------------------------------
# learning rate adaptation weights

def lra_weights(actions, point_weights) -> np.ndarray:
    """Per-difference weights from per-step action weights.

    ``point_weights`` maps each action id to a nonnegative scalar; the
    weight of the difference between steps i and i+1 is the geometric
    mean sqrt(w_i * w_{i+1}).
    """
    try:
        w = np.array([point_weights[a] for a in actions], dtype=np.float64)
    except KeyError as err:
        raise ValueError(f"unknown action id {err.args[0]!r}") from err
    if np.any(w < 0):
        raise ValueError("point weights must be nonnegative")
    if len(w) < 2:
        raise ValueError("need at least 2 steps for difference weights")
    return np.sqrt(w[:-1] * w[1:])


# ---------------------------------------------------------------------------
# diagnostics

def constraint_report(outputs, delta=None) -> dict:
    """Measure the zero-mean / unit-variance / decorrelation constraints
    on a matrix of extracted signals. Returns the worst-case deviations."""
    y = np.asarray(outputs, dtype=np.float64)
    mean = y.mean(axis=0)
    var = y.var(axis=0)
    yc = y - mean
    std = np.sqrt(np.maximum(var, 1e-300))
    corr = (yc / std).T @ (yc / std) / y.shape[0]
    off = corr - np.diag(np.diag(corr))
    report = {
        "max_abs_mean": float(np.abs(mean).max()),
        "max_abs_var_minus_1": float(np.abs(var - 1.0).max()),
        "max_abs_offdiag_corr": float(np.abs(off).max()),
    }
    if delta is not None:
        d = np.asarray(delta, dtype=np.float64)
        report["delta_ascending"] = bool(np.all(np.diff(d) >= -1e-12))
    return report


def measured_delta(outputs, boundaries=()) -> np.ndarray:
    """Mean squared one-step change of each output signal."""
    d = temporal_differences(outputs, boundaries)
    return (d ** 2).mean(axis=0)
