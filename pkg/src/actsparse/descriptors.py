"""Frame and cuboid descriptors: PHOG, HOG3D, cuboid sampling and filtering."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .solvers import InvalidInputError

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


class EmptyResultError(InvalidInputError):
    """Raised when filtering removes every descriptor."""


def central_gradients(arr: np.ndarray, axes: Sequence[int]) -> list:
    """Central differences along ``axes`` with edge replication at the borders."""
    out = []
    for ax in axes:
        pad = [(0, 0)] * arr.ndim
        pad[ax] = (1, 1)
        p = np.pad(arr, pad, mode="edge")
        n = arr.shape[ax]
        hi = np.take(p, np.arange(2, n + 2), axis=ax)
        lo = np.take(p, np.arange(0, n), axis=ax)
        out.append((hi - lo) / 2.0)
    return out


# ---------------------------------------------------------------------------
# PHOG
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhogConfig:
    levels: tuple = (0, 1, 2)
    bins: int = 9
    signed: bool = False

    def __post_init__(self):
        if self.bins < 2:
            raise InvalidInputError("PHOG needs at least 2 orientation bins")
        if not self.levels or min(self.levels) < 0:
            raise InvalidInputError("PHOG levels must be non-negative integers")

    @property
    def dim(self) -> int:
        return self.bins * sum(4 ** level for level in self.levels)


def phog(frame, cfg: PhogConfig = PhogConfig()) -> np.ndarray:
    """Pyramid histogram of oriented gradients of a grayscale frame.

    Level ``l`` splits the frame into a ``2^l x 2^l`` grid; each cell holds a
    magnitude-weighted orientation histogram. Levels are concatenated
    coarse-to-fine and every level block is l1-normalized (an all-zero
    block stays zero).
    """
    img = np.asarray(frame, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise InvalidInputError(f"frame must be a non-empty 2-D image, got shape {img.shape}")
    if min(img.shape) < 2:
        raise InvalidInputError(f"frame must be at least 2x2, got {img.shape}")
    gy, gx = central_gradients(img, (0, 1))
    mag = np.hypot(gx, gy)
    span = 2 * np.pi if cfg.signed else np.pi
    theta = np.mod(np.arctan2(gy, gx), span)
    bin_idx = np.minimum((theta / (span / cfg.bins)).astype(np.intp), cfg.bins - 1)

    h, w = img.shape
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    blocks = []
    for level in cfg.levels:
        g = 2 ** level
        cell = (rows * g // h) * g + (cols * g // w)
        hist = np.bincount((cell * cfg.bins + bin_idx).ravel(), weights=mag.ravel(), minlength=g * g * cfg.bins)
        total = hist.sum()
        blocks.append(hist / total if total > 0 else hist)
    return np.concatenate(blocks)


def phog_matrix(frames, cfg: PhogConfig = PhogConfig()) -> np.ndarray:
    """Stack the PHOG descriptors of ``frames`` as columns (m x n_frames)."""
    return np.stack([phog(f, cfg) for f in frames], axis=1)


# ---------------------------------------------------------------------------
# HOG3D
# ---------------------------------------------------------------------------


def icosahedron_axes() -> np.ndarray:
    """Ten unit axes through opposite face centres of a regular icosahedron."""
    p, q = GOLDEN, 1.0 / GOLDEN
    verts = [(1, 1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1),
             (0, q, p), (0, q, -p), (q, p, 0), (q, -p, 0), (p, 0, q), (-p, 0, q)]
    axes = np.array(verts, dtype=np.float64)
    return axes / np.linalg.norm(axes, axis=1, keepdims=True)


def dodecahedron_axes() -> np.ndarray:
    """Six unit axes through opposite face centres of a regular dodecahedron."""
    p = GOLDEN
    verts = [(0, 1, p), (0, 1, -p), (1, p, 0), (1, -p, 0), (p, 0, 1), (-p, 0, 1)]
    axes = np.array(verts, dtype=np.float64)
    return axes / np.linalg.norm(axes, axis=1, keepdims=True)


AXIS_SETS = {"icosahedron": icosahedron_axes, "dodecahedron": dodecahedron_axes}


@dataclass(frozen=True)
class Hog3dConfig:
    """HOG3D layout.

    ``cell_grid`` is ``(cx, cy, ct)``: cells along width, height and time.
    ``axes`` names a folded polyhedron axis set. ``clip`` caps every bin
    (0 disables).
    """

    cell_grid: tuple = (5, 2, 3)
    axes: str = "icosahedron"
    clip: float = 0.0

    def __post_init__(self):
        if len(self.cell_grid) != 3 or min(self.cell_grid) < 1:
            raise InvalidInputError("cell_grid must be three positive integers")
        if self.axes not in AXIS_SETS:
            raise InvalidInputError(f"unknown axis set {self.axes!r}; choose from {sorted(AXIS_SETS)}")
        if self.clip < 0:
            raise InvalidInputError("clip must be nonnegative")

    @property
    def orientation_axes(self) -> np.ndarray:
        return AXIS_SETS[self.axes]()

    @property
    def dim(self) -> int:
        cx, cy, ct = self.cell_grid
        return len(self.orientation_axes) * cx * cy * ct


def _pad_to_grid(vol: np.ndarray, grid_tyx: tuple) -> np.ndarray:
    # only axes shorter than their cell count need padding; longer ones are
    # split into near-equal cells
    pad = [(0, 0)] * (vol.ndim - 3)
    for size, cells in zip(vol.shape[-3:], grid_tyx):
        pad.append((0, max(cells - size, 0)))
    if any(p[1] for p in pad):
        vol = np.pad(vol, pad, mode="edge")
    return vol


def quantize_orientations(grad: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Index of the axis with the largest |cosine| to each gradient vector.

    ``grad`` has (gx, gy, gt) in its last dimension. Lowest index wins ties.
    """
    return np.argmax(np.abs(grad @ axes.T), axis=-1)


def hog3d_from_gradients(grad: np.ndarray, cfg: Hog3dConfig = Hog3dConfig()) -> np.ndarray:
    """Histogram a (N, T, H, W, 3) gradient field into per-cell orientation bins.

    Each voxel adds its gradient magnitude to the bin of its quantized axis in
    the cell that contains it. Cells are ordered (t, y, x) with the
    orientation bins innermost.
    """
    n, t, h, w, _ = grad.shape
    cx, cy, ct = cfg.cell_grid
    axes = cfg.orientation_axes
    n_ax = len(axes)
    mag = np.linalg.norm(grad, axis=-1)
    bin_idx = quantize_orientations(grad, axes)
    ti = (np.arange(t) * ct // t)[:, None, None]
    yi = (np.arange(h) * cy // h)[None, :, None]
    xi = (np.arange(w) * cx // w)[None, None, :]
    cell = (ti * cy + yi) * cx + xi
    per_sample = cx * cy * ct * n_ax
    flat = (np.arange(n)[:, None, None, None] * per_sample + cell[None] * n_ax + bin_idx).ravel()
    hist = np.bincount(flat, weights=mag.ravel(), minlength=n * per_sample).reshape(n, per_sample)
    if cfg.clip > 0:
        hist = np.minimum(hist, cfg.clip)
    return hist


def hog3d_batch(volumes, cfg: Hog3dConfig = Hog3dConfig()) -> np.ndarray:
    """HOG3D descriptors for a stack of cuboid volumes.

    Parameters
    ----------
    volumes : (N, T, H, W) array
    cfg : Hog3dConfig

    Returns
    -------
    (N, dim) array of nonnegative, unnormalized histograms.
    """
    vol = np.asarray(volumes, dtype=np.float64)
    if vol.ndim != 4:
        raise InvalidInputError(f"expected (N, T, H, W) volumes, got shape {vol.shape}")
    if vol.shape[1] < 2:
        raise InvalidInputError("HOG3D needs depth >= 2 for a temporal gradient")
    cx, cy, ct = cfg.cell_grid
    vol = _pad_to_grid(vol, (ct, cy, cx))
    gt, gy, gx = central_gradients(vol, (1, 2, 3))
    return hog3d_from_gradients(np.stack([gx, gy, gt], axis=-1), cfg)


def hog3d(cuboid, cfg: Hog3dConfig = Hog3dConfig()) -> np.ndarray:
    """HOG3D descriptor of a single (T, H, W) intensity volume."""
    cuboid = np.asarray(cuboid, dtype=np.float64)
    if cuboid.ndim != 3:
        raise InvalidInputError(f"cuboid must be a (T, H, W) volume, got shape {cuboid.shape}")
    return hog3d_batch(cuboid[None], cfg)[0]


# ---------------------------------------------------------------------------
# Cuboid sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CuboidSpec:
    x: int
    y: int
    t0: int
    width: int
    height: int
    depth: int

    def fits(self, shape_thw) -> bool:
        t, h, w = shape_thw
        return (0 <= self.x and self.x + self.width <= w and 0 <= self.y and self.y + self.height <= h
                and 0 <= self.t0 and self.t0 + self.depth <= t)


def sample_cuboids(volume_shape, count: int = 300, dims=(7, 12, 12), seed=0) -> list:
    """Uniformly place ``count`` cuboids of size ``dims`` = (depth, height, width).

    ``volume_shape`` is the (T, H, W) shape of the key-sequence.
    """
    t, h, w = (int(s) for s in volume_shape)
    depth, height, width = (int(d) for d in dims)
    if count < 1:
        raise InvalidInputError("count must be positive")
    if depth > t or height > h or width > w or min(depth, height, width) < 1:
        raise InvalidInputError(f"cuboid {dims} does not fit inside volume {(t, h, w)}")
    rng = np.random.default_rng(seed)
    ts = rng.integers(0, t - depth + 1, size=count)
    ys = rng.integers(0, h - height + 1, size=count)
    xs = rng.integers(0, w - width + 1, size=count)
    return [CuboidSpec(int(x), int(y), int(t0), width, height, depth) for x, y, t0 in zip(xs, ys, ts)]


def cut_cuboids(volume, specs) -> np.ndarray:
    """Extract the (N, depth, height, width) stack of cuboids from a (T, H, W) volume."""
    volume = np.asarray(volume, dtype=np.float64)
    if not specs:
        return np.zeros((0, 1, 1, 1))
    return np.stack([volume[s.t0:s.t0 + s.depth, s.y:s.y + s.height, s.x:s.x + s.width] for s in specs])


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

_AUTO = re.compile(r"^auto-(\d+(?:\.\d+)?)%$")


def resolve_threshold(norms: np.ndarray, threshold: Union[float, str]) -> float:
    """Turn a numeric threshold or ``"auto-P%"`` into a magnitude cut.

    ``auto-P%`` cuts at the magnitude of the ``floor(P/100 * n)``-th weakest
    descriptor, so that share of descriptors is dropped (ties at the cut
    are dropped too). Zero-norm columns are always dropped.
    """
    if isinstance(threshold, str):
        match = _AUTO.match(threshold.strip())
        if not match:
            raise InvalidInputError(f"threshold must be a number or 'auto-P%', got {threshold!r}")
        n_drop = int(np.floor(float(match.group(1)) / 100.0 * norms.size))
        if n_drop == 0 or norms.size == 0:
            return 0.0
        return float(np.sort(norms)[n_drop - 1])
    threshold = float(threshold)
    if threshold < 0:
        raise InvalidInputError("threshold must be nonnegative")
    return threshold


def filter_and_normalize(descs, threshold: Union[float, str] = 0.0, norm: str = "l2") -> np.ndarray:
    """Drop columns whose l2 norm is <= threshold, then unit-normalize the rest.

    ``norm`` selects the normalization of kept columns ("l2" or "l1").
    Column order is preserved.
    """
    descs = np.asarray(descs, dtype=np.float64)
    if descs.ndim != 2:
        raise InvalidInputError("descriptors must be a (dim, n) matrix")
    if norm not in ("l1", "l2"):
        raise InvalidInputError(f"norm must be 'l1' or 'l2', got {norm!r}")
    mags = np.linalg.norm(descs, axis=0)
    cut = resolve_threshold(mags, threshold)
    keep = mags > cut
    if not np.any(keep):
        raise EmptyResultError(f"all {descs.shape[1]} descriptors fall at or below threshold {cut:g}")
    kept = descs[:, keep]
    scale = np.linalg.norm(kept, axis=0) if norm == "l2" else np.abs(kept).sum(axis=0)
    return kept / scale
