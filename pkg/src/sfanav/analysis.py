"""Representation diagnostics.

Spatial maps of single feature dimensions (optionally sliced by heading
section), heading reconstruction through sin/cos regressions, linear
location decoding, and the PCA baseline extractor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .binio import FormatError, Reader, Writer
from .numcore import LinearRegressor, fit_linear_regression

__all__ = [
    "FeatureMap",
    "HeadingModel",
    "PcaExtractor",
    "feature_map",
    "write_feature_map_csv",
    "render_feature_map",
    "fit_heading_model",
    "evaluate_heading",
    "circular_error",
    "heading_sections",
    "location_decode",
    "fit_pca_extractor",
]

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# feature maps

@dataclass(frozen=True)
class FeatureMap:
    points: np.ndarray   # (n, 3) columns x, y, value
    value_range: float   # symmetric color scale: [-value_range, value_range]
    feature_index: int


def _angular_distance(a, b):
    d = np.abs((a - b) % TWO_PI)
    return np.minimum(d, TWO_PI - d)


def heading_sections(n_sections: int):
    """Centers of n equal angle sections covering the full circle."""
    width = TWO_PI / n_sections
    return [(k * width, width) for k in range(n_sections)]


def feature_map(poses, features, index, heading_section=None) -> FeatureMap:
    """One (x, y, value) point per step for a single feature dimension.

    ``heading_section`` is an optional (center, width) pair; only steps
    whose heading lies within width/2 of the center are kept.
    """
    f = np.asarray(features, dtype=np.float64)
    p = np.asarray(poses, dtype=np.float64)
    if f.shape[0] != p.shape[0]:
        raise ValueError("features and poses have different lengths")
    if not 0 <= index < f.shape[1]:
        raise IndexError(f"feature index {index} out of range")
    values = f[:, index]
    xy = p[:, :2]
    if heading_section is not None:
        center, width = heading_section
        keep = _angular_distance(p[:, 2], center) <= width / 2
        values = values[keep]
        xy = xy[keep]
    pts = np.column_stack([xy, values])
    vmax = float(np.abs(values).max()) if values.size else 1.0
    return FeatureMap(points=pts, value_range=max(vmax, 1e-12),
                      feature_index=int(index))


def write_feature_map_csv(fmap: FeatureMap, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for x, y, v in fmap.points:
            writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{v:.6f}"])


def render_feature_map(fmap: FeatureMap, bounds, grid=200) -> np.ndarray:
    """Rasterize a map onto a grid with a diverging red/white/blue
    palette (red positive, blue negative, white empty or zero).

    ``bounds`` is (xmin, xmax, ymin, ymax); returns (grid, grid, 3) u8.
    """
    x0, x1, y0, y1 = bounds
    acc = np.zeros((grid, grid))
    cnt = np.zeros((grid, grid), dtype=np.int64)
    if fmap.points.size:
        gx = np.clip(((fmap.points[:, 0] - x0) / (x1 - x0) * grid).astype(int),
                     0, grid - 1)
        gy = np.clip(((fmap.points[:, 1] - y0) / (y1 - y0) * grid).astype(int),
                     0, grid - 1)
        # image row 0 at the top = largest y
        np.add.at(acc, (grid - 1 - gy, gx), fmap.points[:, 2])
        np.add.at(cnt, (grid - 1 - gy, gx), 1)
    img = np.full((grid, grid, 3), 255, dtype=np.uint8)
    hit = cnt > 0
    val = np.zeros_like(acc)
    val[hit] = acc[hit] / cnt[hit]
    norm = np.clip(val / fmap.value_range, -1.0, 1.0)
    pos = norm > 0
    neg = norm < 0
    # fade white -> deep red / deep blue
    img[..., 1][hit & pos] = (255 * (1 - norm[hit & pos])).astype(np.uint8)
    img[..., 2][hit & pos] = (255 * (1 - norm[hit & pos])).astype(np.uint8)
    img[..., 0][hit & neg] = (255 * (1 + norm[hit & neg])).astype(np.uint8)
    img[..., 1][hit & neg] = (255 * (1 + norm[hit & neg])).astype(np.uint8)
    return img


# ---------------------------------------------------------------------------
# heading reconstruction

@dataclass(frozen=True)
class HeadingModel:
    """Two linear maps from features to the sine and cosine of the
    (shifted) heading; the angle is recovered with atan2."""

    sin_reg: LinearRegressor
    cos_reg: LinearRegressor

    def predict(self, features) -> np.ndarray:
        s = self.sin_reg.predict(features)
        c = self.cos_reg.predict(features)
        return (np.arctan2(s, c) + math.pi) % TWO_PI


def circular_error(a, b) -> np.ndarray:
    """Shortest angular distance, in [0, pi]."""
    return _angular_distance(np.asarray(a, dtype=np.float64),
                             np.asarray(b, dtype=np.float64))


def fit_heading_model(features, phis) -> HeadingModel:
    f = np.asarray(features, dtype=np.float64)
    phi = np.asarray(phis, dtype=np.float64)
    shifted = phi - math.pi
    return HeadingModel(sin_reg=fit_linear_regression(f, np.sin(shifted)),
                        cos_reg=fit_linear_regression(f, np.cos(shifted)))


def evaluate_heading(features, phis):
    """First-half fit / second-half evaluation.

    Returns ``(model, mean_error)`` with the error in radians, averaged
    with the circular distance.
    """
    f = np.asarray(features, dtype=np.float64)
    phi = np.asarray(phis, dtype=np.float64)
    half = f.shape[0] // 2
    if half <= f.shape[1]:
        raise ValueError("split halves must exceed the feature dimension")
    model = fit_heading_model(f[:half], phi[:half])
    pred = model.predict(f[half:])
    return model, float(circular_error(pred, phi[half:]).mean())


# ---------------------------------------------------------------------------
# location decoding

def location_decode(features, xy, diameter=None):
    """Planar RMSE of linear (x, y) decoding, first-half fit /
    second-half evaluation. Returns a dict with ``rmse`` and, when the
    arena diameter is given, ``rmse_fraction``."""
    f = np.asarray(features, dtype=np.float64)
    p = np.asarray(xy, dtype=np.float64)[:, :2]
    half = f.shape[0] // 2
    reg_x = fit_linear_regression(f[:half], p[:half, 0])
    reg_y = fit_linear_regression(f[:half], p[:half, 1])
    err = np.column_stack([reg_x.predict(f[half:]) - p[half:, 0],
                           reg_y.predict(f[half:]) - p[half:, 1]])
    rmse = float(np.sqrt((err ** 2).sum(axis=1).mean()))
    out = {"rmse": rmse}
    if diameter is not None:
        out["rmse_fraction"] = rmse / diameter
    return out


# ---------------------------------------------------------------------------
# PCA baseline extractor

@dataclass(frozen=True)
class PcaExtractor:
    """Top principal components of the (scaled) image stream."""

    input_shape: tuple
    mean: np.ndarray               # flattened mean image
    components: np.ndarray         # (k, N), orthonormal rows
    explained_variance: np.ndarray  # descending
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance

    def transform_batch(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"images shape {x.shape[1:]} does not match "
                             f"{self.input_shape}")
        flat = x.reshape(x.shape[0], -1) / 255.0
        return (flat - self.mean) @ self.components.T

    def transform(self, image) -> np.ndarray:
        return self.transform_batch(np.asarray(image)[None])[0]


def fit_pca_extractor(images, k=32, chunk=512) -> PcaExtractor:
    """Principal components of an image stream.

    The covariance is never materialized: an implicitly defined operator
    streams over image chunks inside the Lanczos iteration, so memory
    stays at one chunk of flattened frames.
    """
    x = np.asarray(images)
    t = x.shape[0]
    if t <= k:
        raise ValueError(f"need more than {k} frames, got {t}")
    shape = x.shape[1:]
    n = int(np.prod(shape))

    mean = np.zeros(n)
    for i in range(0, t, chunk):
        mean += x[i:i + chunk].reshape(-1, n).sum(axis=0) / 255.0
    mean /= t

    total_var = 0.0
    for i in range(0, t, chunk):
        xc = x[i:i + chunk].reshape(-1, n) / 255.0 - mean
        total_var += float((xc ** 2).sum())
    total_var /= t
    if total_var <= 0:
        raise ValueError("constant image stream: nothing to extract")

    def matvec(v):
        out = np.zeros(n)
        for i in range(0, t, chunk):
            xc = x[i:i + chunk].reshape(-1, n) / 255.0 - mean
            out += xc.T @ (xc @ v)
        return out / t

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    v0 = np.sin(np.arange(n) + 1.0)  # fixed start vector for determinism
    vals, vecs = eigsh(op, k=k, which="LM", v0=v0)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    comps = vecs[:, order].T.copy()
    # deterministic sign: largest-magnitude loading positive
    for j in range(comps.shape[0]):
        i = int(np.argmax(np.abs(comps[j])))
        if comps[j, i] < 0:
            comps[j] = -comps[j]
    return PcaExtractor(input_shape=shape, mean=mean, components=comps,
                        explained_variance=vals, total_variance=total_var)


# ---------------------------------------------------------------------------
# PCA model serialization (.pca)

PCA_MAGIC = b"PCAXTR\x00\x00"
PCA_VERSION = 1


def save_pca(extractor: PcaExtractor, path):
    with open(path, "wb") as fh:
        w = Writer(fh, PCA_MAGIC, PCA_VERSION)
        for s in extractor.input_shape:
            w.u64(s)
        w.f64(extractor.total_variance)
        w.array(extractor.mean)
        w.array(extractor.components)
        w.array(extractor.explained_variance)


def load_pca(path) -> PcaExtractor:
    with open(path, "rb") as fh:
        r = Reader(fh, PCA_MAGIC, PCA_VERSION)
        shape = tuple(r.u64() for _ in range(3))
        total = r.f64()
        mean = r.array()
        components = r.array()
        ev = r.array()
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after PCA model")
    return PcaExtractor(input_shape=shape, mean=mean, components=components,
                        explained_variance=ev, total_variance=total)
