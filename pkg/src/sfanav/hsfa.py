"""Hierarchical slow-feature network over image grids.

Each convolution-style layer moves one shared quadratic node across the
input grid (receptive field + stride, valid positions only) and is
trained on the pooled per-position time series of the previous layer's
clipped outputs. A final fully connected node maps the flattened last
grid to the 32-dimensional feature vector.

Training is layer by layer; per-layer statistics are accumulated by
streaming over patch positions so the full patch matrix is never
materialized at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binio import FormatError, Reader, Writer
from .numcore import DEFAULT_RANK_TOL, WhiteningTransform
from .sfa import (
    DEFAULT_CLIP_BOUND,
    DEFAULT_NOISE_STD,
    LinearSfaTransform,
    QuadraticSfaNode,
    apply_node,
    fit_quadratic_node_stream,
)

__all__ = [
    "LayerSpec",
    "LayerGeometry",
    "HsfaNetwork",
    "DEFAULT_LAYER_SPECS",
    "patch_grid",
    "extract_patches",
    "fit_network",
    "save_network",
    "load_network",
]

MAGIC = b"HSFANET\x00"
VERSION = 1

DEFAULT_FEATURE_DIM = 32
DEFAULT_MID_DIM = 32


@dataclass(frozen=True)
class LayerSpec:
    """Configuration of one grid layer: receptive field, stride and
    output channels. ``rf is None`` marks the fully connected top node."""

    rf: tuple | None
    stride: tuple | None
    channels: int
    d_mid: int = DEFAULT_MID_DIM


# receptive fields / strides of the stock three-layer 60x80 network
DEFAULT_LAYER_SPECS = (
    LayerSpec(rf=(10, 10), stride=(5, 5), channels=32),
    LayerSpec(rf=(3, 3), stride=(2, 3), channels=32),
    LayerSpec(rf=None, stride=None, channels=32),
)


@dataclass(frozen=True)
class LayerGeometry:
    rf: tuple
    stride: tuple
    in_shape: tuple  # (H, W, C)

    def __post_init__(self):
        h, w, _ = self.in_shape
        rh, rw = self.rf
        sr, sc = self.stride
        if rh > h or rw > w:
            raise ValueError(f"receptive field {self.rf} exceeds input {self.in_shape}")
        if sr < 1 or sc < 1:
            raise ValueError("strides must be positive")

    @property
    def grid_shape(self) -> tuple:
        h, w, _ = self.in_shape
        return ((h - self.rf[0]) // self.stride[0] + 1,
                (w - self.rf[1]) // self.stride[1] + 1)

    @property
    def patch_dim(self) -> int:
        return self.rf[0] * self.rf[1] * self.in_shape[2]

    def out_shape(self, channels: int) -> tuple:
        gh, gw = self.grid_shape
        return (gh, gw, channels)


def patch_grid(geom: LayerGeometry):
    """Row-major (row, col) origins of every valid patch position."""
    gh, gw = geom.grid_shape
    return [(r * geom.stride[0], c * geom.stride[1])
            for r in range(gh) for c in range(gw)]


# frames per chunk when streaming image stacks through the network;
# bounds the size of the materialized patch matrix
_CHUNK = 256


def _gather_patches(grid, geom: LayerGeometry) -> np.ndarray:
    """(T, H, W, C) -> (T, gh, gw, patch_dim), flattened row-major within
    the patch with channels fastest."""
    rh, rw = geom.rf
    sr, sc = geom.stride
    win = np.lib.stride_tricks.sliding_window_view(grid, (rh, rw), axis=(1, 2))
    win = win[:, ::sr, ::sc]               # (T, gh, gw, C, rh, rw)
    win = np.moveaxis(win, 3, 5)           # (T, gh, gw, rh, rw, C)
    t, gh, gw = win.shape[:3]
    return win.reshape(t, gh, gw, -1)


def extract_patches(images, geom: LayerGeometry):
    """Flatten every patch of every frame into one row.

    Rows are ordered position-major: all T frames of position 0, then
    all T frames of position 1, ... so each position's rows form a
    contiguous time series. Within a row the patch is flattened
    row-major with channels fastest. Returns ``(matrix, time_index)``.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.shape[1:] != geom.in_shape:
        raise ValueError(f"images shape {x.shape[1:]} does not match {geom.in_shape}")
    t = x.shape[0]
    patches = _gather_patches(x, geom)
    gh, gw = geom.grid_shape
    rows = np.moveaxis(patches, 0, 2).reshape(gh * gw * t, geom.patch_dim)
    time_index = np.tile(np.arange(t), gh * gw)
    return rows, time_index


@dataclass(frozen=True)
class HsfaNetwork:
    """Stack of patch-wise nodes plus one fully connected top node."""

    input_shape: tuple            # (H, W, C)
    mean_image: np.ndarray        # subtracted after scaling to [0, 1]
    layers: tuple                 # ((LayerGeometry, QuadraticSfaNode), ...)
    top: QuadraticSfaNode

    @property
    def feature_dim(self) -> int:
        return self.top.out_dim

    def layer_shapes(self):
        """Output shape after each stage, ending in (feature_dim,)."""
        shapes = []
        for geom, node in self.layers:
            shapes.append(geom.out_shape(node.out_dim))
        shapes.append((self.feature_dim,))
        return shapes

    def transform_batch(self, images) -> np.ndarray:
        """Map a (T, H, W, C) image stack to (T, feature_dim).

        The stack is processed in fixed-size frame chunks so memory stays
        bounded for long recordings.
        """
        x = np.asarray(images)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"images shape {x.shape[1:]} does not match "
                             f"{self.input_shape}")
        out = np.empty((x.shape[0], self.feature_dim))
        for i in range(0, x.shape[0], _CHUNK):
            grid = np.asarray(x[i:i + _CHUNK], dtype=np.float64) / 255.0 \
                - self.mean_image
            for geom, node in self.layers:
                grid = _apply_layer(geom, node, grid)
            out[i:i + _CHUNK] = apply_node(self.top,
                                           grid.reshape(grid.shape[0], -1))
        return out

    def transform(self, image) -> np.ndarray:
        return self.transform_batch(np.asarray(image)[None])[0]


def _apply_layer(geom: LayerGeometry, node, grid) -> np.ndarray:
    """Run one shared node over every patch position of a float grid."""
    t = grid.shape[0]
    gh, gw = geom.grid_shape
    patches = _gather_patches(grid, geom).reshape(-1, geom.patch_dim)
    return apply_node(node, patches).reshape(t, gh, gw, node.out_dim)


def fit_network(images, boundaries=(), weights=None,
                layer_specs=DEFAULT_LAYER_SPECS, feature_dim=None,
                noise_std=DEFAULT_NOISE_STD, clip_bound=DEFAULT_CLIP_BOUND,
                seed=0, rank_tol=DEFAULT_RANK_TOL,
                skip_boundaries=True) -> HsfaNetwork:
    """Train the hierarchy layer by layer on an image time series.

    ``images`` is (T, H, W, C) with values in [0, 255]; ``weights`` are
    optional per-difference weights (length T-1) shared by every patch
    position.
    """
    x = np.asarray(images)
    if x.ndim != 4:
        raise ValueError("expected a (T, H, W, C) image stack")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    specs = list(layer_specs)
    if not specs or specs[-1].rf is not None:
        raise ValueError("last layer spec must be the fully connected one (rf=None)")
    if feature_dim is not None:
        specs[-1] = LayerSpec(rf=None, stride=None, channels=feature_dim,
                              d_mid=specs[-1].d_mid)

    t = x.shape[0]
    mean_image = np.mean(x, axis=0, dtype=np.float64) / 255.0

    def input_patch(r, c, rh, rw):
        # scale and center one patch position lazily; the raw stack stays
        # in its compact integer dtype
        raw = np.asarray(x[:, r:r + rh, c:c + rw, :], dtype=np.float64)
        return raw / 255.0 - mean_image[r:r + rh, c:c + rw, :]

    grid = None  # float grid of the previous layer's outputs (None = input)
    layers = []
    for li, spec in enumerate(specs[:-1]):
        in_shape = x.shape[1:] if grid is None else grid.shape[1:]
        geom = LayerGeometry(rf=spec.rf, stride=spec.stride, in_shape=in_shape)
        rh, rw = geom.rf
        origins = patch_grid(geom)

        def blocks(origins=origins, current=grid, rh=rh, rw=rw):
            for r, c in origins:
                if current is None:
                    block = input_patch(r, c, rh, rw)
                else:
                    block = current[:, r:r + rh, c:c + rw, :]
                yield block.reshape(t, -1), boundaries, weights

        node = fit_quadratic_node_stream(
            blocks, d_mid=min(spec.d_mid, geom.patch_dim), d_out=spec.channels,
            noise_std=noise_std, clip_bound=clip_bound,
            seed=(seed, li), rank_tol=rank_tol,
            skip_boundaries=skip_boundaries)
        # clipped outputs of this layer feed the next one
        gh, gw = geom.grid_shape
        nxt = np.empty((t, gh, gw, node.out_dim))
        for i in range(0, t, _CHUNK):
            if grid is None:
                g = np.asarray(x[i:i + _CHUNK], dtype=np.float64) / 255.0 \
                    - mean_image
            else:
                g = grid[i:i + _CHUNK]
            nxt[i:i + _CHUNK] = _apply_layer(geom, node, g)
        layers.append((geom, node))
        grid = nxt

    top_spec = specs[-1]
    if grid is None:  # degenerate stack: fully connected node only
        grid = np.asarray(x, dtype=np.float64) / 255.0 - mean_image
    flat = grid.reshape(t, -1)

    def top_blocks():
        yield flat, boundaries, weights

    top = fit_quadratic_node_stream(
        top_blocks, d_mid=min(top_spec.d_mid, flat.shape[1]),
        d_out=top_spec.channels, noise_std=noise_std, clip_bound=clip_bound,
        seed=(seed, len(specs) - 1), rank_tol=rank_tol,
        skip_boundaries=skip_boundaries)

    return HsfaNetwork(input_shape=x.shape[1:], mean_image=mean_image,
                       layers=tuple(layers), top=top)


# ---------------------------------------------------------------------------
# serialization (.hsfa)

def _write_linear(w: Writer, tr: LinearSfaTransform):
    w.array(tr.whitening.mean)
    w.array(tr.whitening.projection)
    w.array(tr.whitening.eigenvalues)
    w.array(tr.rotation)
    w.array(tr.delta)


def _read_linear(r: Reader) -> LinearSfaTransform:
    mean = r.array()
    projection = r.array()
    eigenvalues = r.array()
    rotation = r.array()
    delta = r.array()
    return LinearSfaTransform(
        whitening=WhiteningTransform(mean=mean, projection=projection,
                                     eigenvalues=eigenvalues),
        rotation=rotation, delta=delta)


def _write_node(w: Writer, node: QuadraticSfaNode):
    w.f64(node.noise_std)
    w.f64(node.clip_bound)
    _write_linear(w, node.reduce)
    _write_linear(w, node.extract)


def _read_node(r: Reader) -> QuadraticSfaNode:
    noise_std = r.f64()
    clip_bound = r.f64()
    reduce = _read_linear(r)
    extract = _read_linear(r)
    return QuadraticSfaNode(reduce=reduce, extract=extract,
                            noise_std=noise_std, clip_bound=clip_bound)


def save_network(net: HsfaNetwork, path):
    with open(path, "wb") as fh:
        w = Writer(fh, MAGIC, VERSION)
        for s in net.input_shape:
            w.u64(s)
        w.array(net.mean_image)
        w.u64(len(net.layers))
        for geom, node in net.layers:
            w.u64(geom.rf[0]); w.u64(geom.rf[1])
            w.u64(geom.stride[0]); w.u64(geom.stride[1])
            for s in geom.in_shape:
                w.u64(s)
            _write_node(w, node)
        _write_node(w, net.top)


def load_network(path) -> HsfaNetwork:
    with open(path, "rb") as fh:
        r = Reader(fh, MAGIC, VERSION)
        input_shape = tuple(r.u64() for _ in range(3))
        mean_image = r.array()
        n_layers = r.u64()
        layers = []
        for _ in range(n_layers):
            rf = (r.u64(), r.u64())
            stride = (r.u64(), r.u64())
            in_shape = tuple(r.u64() for _ in range(3))
            node = _read_node(r)
            layers.append((LayerGeometry(rf=rf, stride=stride,
                                         in_shape=in_shape), node))
        top = _read_node(r)
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after network data")
    return HsfaNetwork(input_shape=input_shape, mean_image=mean_image,
                       layers=tuple(layers), top=top)
