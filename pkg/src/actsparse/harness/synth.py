"""Synthetic action videos with a three-act temporal structure.

Each class is one motion archetype. A video is split into early, middle and
late acts (boundaries jittered per video) with act-specific motion, so that
classes differ both in what moves and in how the motion changes over time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..decomposition import VideoTensor
from ..solvers import InvalidInputError
from .dataset import Dataset

BACKGROUND = 0.2
FOREGROUND = 0.8


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 3
    train_per_class: int = 10
    test_per_class: int = 5
    n_frames: int = 24
    height: int = 32
    width: int = 32
    noise: float = 0.05


def _soft(d, edge=0.75):
    """Smooth 0..1 ramp for anti-aliased shape edges (d < 0 inside)."""
    return 1.0 / (1.0 + np.exp(d / (edge / 2.0)))


def _acts(n: int, rng) -> np.ndarray:
    """Act index (0, 1, 2) of every frame; boundaries near n/3 and 2n/3."""
    b1 = int(round(n / 3 + rng.integers(-1, 2)))
    b2 = int(round(2 * n / 3 + rng.integers(-1, 2)))
    act = np.zeros(n, dtype=int)
    act[b1:] = 1
    act[b2:] = 2
    return act


def _integrate(start, velocities, act, lo, hi):
    """Positions from per-act velocities, reflected into [lo, hi]."""
    pos = np.empty(act.size)
    p = start
    for i, a in enumerate(act):
        pos[i] = p
        p += velocities[a]
    span = hi - lo
    folded = np.mod(pos - lo, 2 * span)
    return lo + np.where(folded > span, 2 * span - folded, folded)


def _grid(h, w):
    return np.mgrid[0:h, 0:w].astype(np.float64)


def bar_horizontal_motion(n, h, w, rng):
    """Vertical bar sliding right, faster, then back left."""
    act = _acts(n, rng)
    scale = rng.uniform(0.8, 1.2)
    xs = _integrate(rng.uniform(3, 8), scale * np.array([1.0, 2.0, -1.5]), act, 2, w - 3)
    half = rng.uniform(1.5, 2.5)
    yy, xx = _grid(h, w)
    return np.stack([_soft(np.abs(xx - x) - half) for x in xs])


def bar_vertical_motion(n, h, w, rng):
    """Horizontal bar dropping, pausing, then dropping fast."""
    act = _acts(n, rng)
    scale = rng.uniform(0.8, 1.2)
    ys = _integrate(rng.uniform(3, 8), scale * np.array([1.0, 0.0, 2.0]), act, 2, h - 3)
    half = rng.uniform(1.5, 2.5)
    yy, xx = _grid(h, w)
    return np.stack([_soft(np.abs(yy - y) - half) for y in ys])


def expanding_blob(n, h, w, rng):
    """Disc that grows, holds, then shrinks."""
    act = _acts(n, rng)
    scale = rng.uniform(0.8, 1.2)
    rs = _integrate(rng.uniform(2, 4), scale * np.array([0.8, 0.0, -0.8]), act, 1.5, min(h, w) / 2 - 2)
    cy, cx = h / 2 + rng.uniform(-2, 2), w / 2 + rng.uniform(-2, 2)
    yy, xx = _grid(h, w)
    dist = np.hypot(yy - cy, xx - cx)
    return np.stack([_soft(dist - r) for r in rs])


def rotating_bar(n, h, w, rng):
    """Bar spinning about the centre: slow, fast, then reversed."""
    act = _acts(n, rng)
    scale = rng.uniform(0.8, 1.2)
    angles = np.cumsum(np.r_[rng.uniform(0, np.pi), scale * np.array([0.15, 0.35, -0.25])[act[:-1]]])
    cy, cx = h / 2, w / 2
    yy, xx = _grid(h, w)
    frames = []
    for a in angles:
        across = -(xx - cx) * np.sin(a) + (yy - cy) * np.cos(a)
        along = (xx - cx) * np.cos(a) + (yy - cy) * np.sin(a)
        frames.append(_soft(np.abs(across) - 1.5) * _soft(np.abs(along) - min(h, w) * 0.4))
    return np.stack(frames)


def bouncing_dot(n, h, w, rng):
    """Small square moving diagonally, bouncing off the borders, speeding up then stopping."""
    act = _acts(n, rng)
    scale = rng.uniform(0.8, 1.2)
    xs = _integrate(rng.uniform(4, w - 4), scale * np.array([1.5, 2.5, 0.0]), act, 3, w - 4)
    ys = _integrate(rng.uniform(4, h - 4), scale * np.array([1.5, -2.5, 0.0]), act, 3, h - 4)
    yy, xx = _grid(h, w)
    return np.stack([_soft(np.maximum(np.abs(xx - x), np.abs(yy - y)) - 2.5) for x, y in zip(xs, ys)])


def flicker_grid(n, h, w, rng):
    """Checkerboard whose contrast flickers slowly, then quickly, then holds."""
    act = _acts(n, rng)
    period = rng.integers(6, 9)
    yy, xx = _grid(h, w)
    board = ((yy // period + xx // period) % 2).astype(float)
    freq = np.array([0.3, 1.2, 0.0]) * rng.uniform(0.8, 1.2)
    phase = np.cumsum(np.r_[rng.uniform(0, np.pi), freq[act[:-1]]])
    return np.stack([0.5 + (board - 0.5) * np.cos(p) for p in phase])


ARCHETYPES = {
    "moving_bar_right": bar_horizontal_motion,
    "moving_bar_down": bar_vertical_motion,
    "expanding_blob": expanding_blob,
    "rotating_bar": rotating_bar,
    "bouncing_dot": bouncing_dot,
    "flicker_grid": flicker_grid,
}


def render_video(archetype: str, n_frames: int, height: int, width: int, noise: float, rng) -> np.ndarray:
    shape = ARCHETYPES[archetype](n_frames, height, width, rng)
    frames = BACKGROUND + (FOREGROUND - BACKGROUND) * shape
    if noise > 0:
        frames = frames + rng.normal(0.0, noise, size=frames.shape)
    # stored as float32 so that VIDF round-trips are exact
    return frames.astype(np.float32).astype(np.float64)


def synth_gen(cfg: SynthConfig = SynthConfig(), seed=0) -> Dataset:
    """Generate a dataset with one archetype per class; deterministic for a given seed."""
    names = list(ARCHETYPES)
    if cfg.n_classes > len(names):
        raise InvalidInputError(f"at most {len(names)} classes available, asked for {cfg.n_classes}")
    if cfg.n_classes < 1 or cfg.n_frames < 1 or min(cfg.height, cfg.width) < 8:
        raise InvalidInputError("need >= 1 class, >= 1 frame and frames of at least 8x8")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    classes = names[: cfg.n_classes]
    videos = []
    class_seeds = ss.spawn(cfg.n_classes)
    for c, (name, cs) in enumerate(zip(classes, class_seeds)):
        counts = {"train": cfg.train_per_class, "test": cfg.test_per_class}
        split_seeds = dict(zip(counts, cs.spawn(2)))
        for split, count in counts.items():
            for i, vs in enumerate(split_seeds[split].spawn(count)):
                rng = np.random.default_rng(vs)
                frames = render_video(name, cfg.n_frames, cfg.height, cfg.width, cfg.noise, rng)
                videos.append((VideoTensor(frames, f"{name}_{split}_{i:03d}", c), c, split))
    return Dataset(classes, videos)
