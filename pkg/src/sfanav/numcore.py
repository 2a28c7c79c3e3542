"""Deterministic numerical primitives.

Covariance (optionally sample-weighted), symmetric eigendecomposition,
whitening and ordinary least squares. Everything here is a pure function
of its inputs; fitted transforms are frozen dataclasses and safe to share
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WhiteningTransform",
    "LinearRegressor",
    "covariance",
    "eigh_sym",
    "fit_whitening",
    "fit_linear_regression",
]

DEFAULT_RANK_TOL = 1e-7


def _as_data_matrix(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected 2-D data matrix, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty data matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("data matrix contains non-finite entries")
    return x


def covariance(data, weights=None):
    """Population covariance and mean of row samples.

    With ``weights`` (one nonnegative scalar per row) the weighted form
    ``sum_i w_i (x_i - mu_w)(x_i - mu_w)^T / sum_i w_i`` is used, where
    ``mu_w`` is the weighted mean. Uniform weights reproduce the
    unweighted result exactly.

    Returns ``(cov, mean)``.
    """
    x = _as_data_matrix(data)
    t = x.shape[0]
    if t < 2:
        raise ValueError("covariance needs at least 2 samples")
    if weights is None:
        mean = x.mean(axis=0)
        xc = x - mean
        cov = xc.T @ xc / t
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (t,):
            raise ValueError(f"weights shape {w.shape} does not match {t} samples")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        wsum = w.sum()
        if wsum <= 0:
            raise ValueError("weights sum to zero")
        mean = (w[:, None] * x).sum(axis=0) / wsum
        xc = x - mean
        cov = (w[:, None] * xc).T @ xc / wsum
    # enforce exact symmetry against accumulation round-off
    cov = 0.5 * (cov + cov.T)
    return cov, mean


def eigh_sym(sym, tol=1e-10):
    """Eigendecomposition of a symmetric matrix.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns. Rejects inputs that are not symmetric
    within ``tol`` (relative to the largest entry).
    """
    a = np.asarray(sym, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return vals, vecs


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map that decorrelates and scales data to identity covariance.

    ``projection`` has shape (K, N) with K <= N; directions whose
    eigenvalue falls below the rank threshold at fit time are dropped.
    """

    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray  # retained covariance eigenvalues, descending

    @property
    def in_dim(self) -> int:
        return self.projection.shape[1]

    @property
    def out_dim(self) -> int:
        return self.projection.shape[0]

    def apply(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} columns, got {x.shape[1]}")
        y = (x - self.mean) @ self.projection.T
        return y[0] if single else y


def whitening_from_moments(cov, mean, rank_tol=DEFAULT_RANK_TOL) -> WhiteningTransform:
    """Build a whitening transform from precomputed covariance and mean."""
    vals, vecs = eigh_sym(cov)
    top = vals[-1]
    if top <= 0:
        raise ValueError("constant data: covariance has no positive eigenvalues")
    keep = vals > rank_tol * top
    if not np.any(keep):
        raise ValueError("no directions above rank threshold")
    vals = vals[keep][::-1]
    vecs = vecs[:, keep][:, ::-1]
    projection = vecs.T / np.sqrt(vals)[:, None]
    return WhiteningTransform(mean=np.asarray(mean, dtype=np.float64),
                              projection=projection,
                              eigenvalues=vals)


def fit_whitening(data, rank_tol=DEFAULT_RANK_TOL) -> WhiteningTransform:
    """Fit a whitening transform so the training data gets zero mean and
    identity covariance. Directions with eigenvalue <= rank_tol times the
    largest eigenvalue are discarded."""
    x = _as_data_matrix(data)
    if x.shape[0] < 2:
        raise ValueError("whitening needs at least 2 samples")
    cov, mean = covariance(x)
    return whitening_from_moments(cov, mean, rank_tol)


@dataclass(frozen=True)
class LinearRegressor:
    coef: np.ndarray
    intercept: float

    def predict(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        y = x @ self.coef + self.intercept
        return float(y[0]) if single else y


def fit_linear_regression(x, y) -> LinearRegressor:
    """Ordinary least squares with intercept.

    Solved via ``lstsq`` on the augmented design matrix, which yields the
    minimum-norm solution when the inputs are rank deficient.
    """
    x = _as_data_matrix(x)
    yv = np.asarray(y, dtype=np.float64).ravel()
    if yv.shape[0] != x.shape[0]:
        raise ValueError("x and y have different sample counts")
    design = np.column_stack([x, np.ones(x.shape[0])])
    beta, *_ = np.linalg.lstsq(design, yv, rcond=None)
    return LinearRegressor(coef=beta[:-1], intercept=float(beta[-1]))
