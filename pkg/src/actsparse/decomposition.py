"""Video decomposition into K temporally ordered key-sequences.

A video is described frame by frame with PHOG, each frame's usefulness for
reconstructing the video itself and the rest of a reference class is scored
from the joint row-sparse solution, and K key-frames spread over the video are
expanded into ``2t+1``-frame windows described by sampled HOG3D cuboids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .descriptors import (
    EmptyResultError,
    Hog3dConfig,
    PhogConfig,
    cut_cuboids,
    filter_and_normalize,
    hog3d_batch,
    phog_matrix,
    sample_cuboids,
)
from .solvers import AdmmConfig, InvalidInputError, solve_joint_row_sparse

SCORE_MODES = ("signed", "absolute")
TIE_RTOL = 1e-9


@dataclass
class VideoTensor:
    frames: np.ndarray
    id: str = ""
    class_label: Optional[int] = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise InvalidInputError(f"video {self.id!r}: frames must be an (n, H, W) stack with n >= 1")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 3
    t: int = 3
    theta: Union[float, str] = "auto"
    score_mode: str = "absolute"

    def __post_init__(self):
        if self.k < 1 or self.t < 0:
            raise InvalidInputError("need k >= 1 and t >= 0")
        if self.score_mode not in SCORE_MODES:
            raise InvalidInputError(f"score_mode must be one of {SCORE_MODES}")
        if isinstance(self.theta, str) and self.theta != "auto":
            raise InvalidInputError("theta must be a number or 'auto'")


@dataclass(frozen=True)
class CuboidConfig:
    """Cuboid sampling and HOG3D settings for key-sequence description.

    ``dims`` is (depth, height, width). ``threshold`` is a magnitude cut or
    ``"auto-P%"``.
    """

    count: int = 300
    dims: tuple = (7, 12, 12)
    hog3d: Hog3dConfig = Hog3dConfig()
    threshold: Union[float, str] = 0.0
    norm: str = "l2"
    max_resamples: int = 5


@dataclass
class KeySequence:
    key_frame_index: int
    cuboid_descriptors: np.ndarray
    frames: Optional[np.ndarray] = None


@dataclass
class KeySequenceSet:
    sequences: list
    t: int
    source_video: str = ""
    reference_class: Optional[int] = None
    scores: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        idx = self.centers
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidInputError(f"key-frame indices must be strictly increasing, got {idx}")

    @property
    def k(self) -> int:
        return len(self.sequences)

    @property
    def centers(self) -> list:
        return [s.key_frame_index for s in self.sequences]


def frame_contribution_scores(w_full, mode: str = "absolute") -> np.ndarray:
    """Per-frame contribution: row sums of ``[W_i | W_rest]`` (absolute values in "absolute" mode)."""
    w_full = np.asarray(w_full, dtype=np.float64)
    if mode not in SCORE_MODES:
        raise InvalidInputError(f"score mode must be one of {SCORE_MODES}")
    if mode == "absolute":
        w_full = np.abs(w_full)
    return w_full.sum(axis=1)


def anchor_positions(n_frames: int, k: int) -> np.ndarray:
    """K time instants ``floor((j - 1/2) n / K)`` for j = 1..K, spread over the video."""
    return np.floor((np.arange(1, k + 1) - 0.5) * n_frames / k).astype(int)


def candidate_set(scores, cfg: SelectionConfig) -> np.ndarray:
    """Frames whose score clears the threshold, relaxed to the K best when too few do."""
    scores = np.asarray(scores, dtype=np.float64)
    # scores within solver round-off of the K-th best count as ties
    kth = np.sort(scores)[::-1][cfg.k - 1] - TIE_RTOL * max(np.abs(scores).max(), 1e-300)
    if cfg.theta == "auto":
        return np.nonzero(scores >= kth)[0]
    cand = np.nonzero(scores > float(cfg.theta))[0]
    if cand.size < cfg.k:
        cand = np.nonzero(scores >= kth)[0]
    return cand


def select_keyframes(scores, cfg: SelectionConfig, n_frames: Optional[int] = None) -> list:
    """Pick K key-frames from the candidate set, one near each anchor.

    Anchors are served in temporal order; each takes the nearest unused
    candidate, the earlier frame on ties.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n = scores.size if n_frames is None else int(n_frames)
    if n != scores.size:
        raise InvalidInputError(f"got {scores.size} scores for {n} frames")
    if n < cfg.k:
        raise InvalidInputError(f"video has {n} frames, fewer than K={cfg.k}")
    if not np.all(np.isfinite(scores)):
        raise InvalidInputError("scores must be finite")
    cand = candidate_set(scores, cfg)
    used = set()
    chosen = []
    for a in anchor_positions(n, cfg.k):
        free = [c for c in cand if c not in used]
        best = min(free, key=lambda c: (abs(int(c) - int(a)), c))
        used.add(best)
        chosen.append(int(best))
    return sorted(chosen)


def extract_keysequences(video, indices, t: int) -> list:
    """``2t+1``-frame windows centred on each index; out-of-range frames clamp to the ends."""
    frames = video.frames if isinstance(video, VideoTensor) else np.asarray(video)
    n = frames.shape[0]
    windows = []
    for j in indices:
        if not 0 <= j < n:
            raise InvalidInputError(f"key-frame index {j} outside video of {n} frames")
        pos = np.clip(np.arange(j - t, j + t + 1), 0, n - 1)
        windows.append(frames[pos])
    return windows


def describe_windows(windows, cuboid_cfg: CuboidConfig, seed) -> list:
    """Filtered, normalized HOG3D cuboid descriptors (dim x n') for each window.

    All windows of one video share the sampled cuboid placements. If
    filtering empties a window, placements are redrawn from a fresh seed.
    """
    if not windows:
        return []
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    attempts = ss.spawn(cuboid_cfg.max_resamples + 1)
    last_error = None
    for attempt in attempts:
        specs = sample_cuboids(windows[0].shape, cuboid_cfg.count, cuboid_cfg.dims, attempt)
        try:
            return [
                filter_and_normalize(hog3d_batch(cut_cuboids(w, specs), cuboid_cfg.hog3d).T,
                                     cuboid_cfg.threshold, cuboid_cfg.norm)
                for w in windows
            ]
        except EmptyResultError as err:
            last_error = err
    raise last_error


def build_keysequence_set(video: VideoTensor, indices, t: int, cuboid_cfg: CuboidConfig, seed,
                          reference_class=None, scores=None) -> KeySequenceSet:
    """Assemble a KeySequenceSet from already chosen key-frame indices."""
    indices = sorted(int(i) for i in indices)
    windows = extract_keysequences(video, indices, t)
    descs = describe_windows(windows, cuboid_cfg, seed)
    seqs = [KeySequence(i, d, w) for i, d, w in zip(indices, descs, windows)]
    return KeySequenceSet(seqs, t, video.id, reference_class, scores)


def decompose(video: VideoTensor, class_frames, phog_cfg: PhogConfig = PhogConfig(),
              sel_cfg: SelectionConfig = SelectionConfig(), admm_cfg: AdmmConfig = AdmmConfig(),
              cuboid_cfg: CuboidConfig = CuboidConfig(), seed=0, reference_class=None) -> KeySequenceSet:
    """Decompose ``video`` into K key-sequences relative to a reference class.

    Parameters
    ----------
    video : VideoTensor
    class_frames : (m, n - n_i) array
        PHOG columns of the other videos of the reference class; may be empty.
    seed : int or np.random.SeedSequence
        Drives cuboid placement.
    """
    z_self = phog_matrix(video.frames, phog_cfg)
    z_rest = np.asarray(class_frames, dtype=np.float64)
    if z_rest.size == 0:
        z_rest = np.zeros((z_self.shape[0], 0))
    sol = solve_joint_row_sparse(z_self, z_rest, admm_cfg)
    scores = frame_contribution_scores(sol.w_full, sel_cfg.score_mode)
    indices = select_keyframes(scores, sel_cfg, video.n_frames)
    return build_keysequence_set(video, indices, sel_cfg.t, cuboid_cfg, seed, reference_class, scores)
