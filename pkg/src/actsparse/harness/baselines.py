"""Comparison baselines: alternative key-frame pickers and reduced descriptors."""

from __future__ import annotations

import numpy as np

from ..decomposition import KeySequenceSet, VideoTensor
from ..descriptors import PhogConfig, phog_matrix
from ..itra import BankConfig, DictionaryBank, inter_descriptor, sum_pool
from ..solvers import Dictionary, InvalidInputError, ksvd, omp_batch

# -- key-frame baselines -----------------------------------------------------


def baseline_uniform_keyframes(n_frames: int, k: int) -> list:
    """Central frame of each of K near-equal segments.

    Segments follow ``np.array_split`` (longer segments first); the centre of
    segment ``[start, end]`` is ``(start + end) // 2``.
    """
    if isinstance(n_frames, VideoTensor):
        n_frames = n_frames.n_frames
    if k < 1 or n_frames < k:
        raise InvalidInputError(f"need 1 <= K <= n_frames, got K={k}, n_frames={n_frames}")
    return [int((seg[0] + seg[-1]) // 2) for seg in np.array_split(np.arange(n_frames), k)]


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability proportional to squared distance."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, k: int, iters: int = 100, seed=0):
    """Lloyd's algorithm from k-means++ seeds.

    An emptied cluster is re-seeded at the point farthest from its assigned
    centre. Returns ``(centers, labels)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k or k < 1:
        raise InvalidInputError(f"need at least k={k} points, got {x.shape[0] if x.ndim == 2 else 0}")
    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(x, k, rng)
    labels = np.zeros(x.shape[0], dtype=int)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        for j in range(k):
            members = labels == j
            if np.any(members):
                new[j] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(x.shape[0]), labels]))
                new[j] = x[far]
                labels[far] = j
        if np.array_equal(new, centers):
            break
        centers = new
    return centers, labels


def window_embeddings(video: VideoTensor, t: int, phog_cfg: PhogConfig = PhogConfig(), z=None):
    """Concatenated PHOG of every full ``2t+1``-frame window; returns (centre indices, embeddings)."""
    n = video.n_frames
    if n < 2 * t + 1:
        raise InvalidInputError(f"video {video.id!r} has {n} frames, needs >= {2 * t + 1}")
    z = phog_matrix(video.frames, phog_cfg) if z is None else z
    centers = np.arange(t, n - t)
    emb = np.stack([z[:, j - t:j + t + 1].T.ravel() for j in centers])
    return centers, emb


def nearest_windows(centers_idx: np.ndarray, emb: np.ndarray, cluster_centers: np.ndarray) -> list:
    """For each cluster centre in turn, the closest unused window (earlier on ties); sorted."""
    used, chosen = set(), []
    for c in cluster_centers:
        d = np.sum((emb - c) ** 2, axis=1)
        for w in np.lexsort((centers_idx, d)):
            if w not in used:
                used.add(w)
                chosen.append(int(centers_idx[w]))
                break
    if len(chosen) < len(cluster_centers):
        raise InvalidInputError("fewer windows than clusters")
    return sorted(chosen)


def baseline_kmeans_keyframes(class_videos, k: int, t: int, seed=0, phog_cfg: PhogConfig = PhogConfig(),
                              iters: int = 100, phog_cache=None):
    """Cluster all windows of a class and map each centre back to a window per video.

    Returns ``(indices_per_video, cluster_centers)``.
    """
    per_video = []
    for i, v in enumerate(class_videos):
        z = phog_cache[i] if phog_cache is not None else None
        per_video.append(window_embeddings(v, t, phog_cfg, z))
    all_emb = np.vstack([emb for _, emb in per_video])
    centers, _ = kmeans(all_emb, k, iters, seed)
    return [nearest_windows(idx, emb, centers) for idx, emb in per_video], centers


# -- descriptor ablations ----------------------------------------------------


def learn_shared_dictionary(keyseq_sets, cfg: BankConfig = BankConfig(), seed=0) -> Dictionary:
    """One K-SVD dictionary over the cuboids of every class and position."""
    pooled = np.hstack([s.cuboid_descriptors for ks in keyseq_sets for s in ks.sequences])
    d, _ = ksvd(pooled, cfg.atoms_per_dictionary, cfg.lambda1, cfg.ksvd_iters, seed=seed)
    return d


def shared_descriptor(ks: KeySequenceSet, dictionary: Dictionary, cfg: BankConfig = BankConfig()) -> np.ndarray:
    """One pooled coefficient mass per position: length K."""
    n = dictionary.n_atoms
    out = np.zeros(ks.k)
    for j, seq in enumerate(ks.sequences):
        codes, _ = omp_batch(dictionary.atoms, seq.cuboid_descriptors, cfg.lambda1)
        out[j] = sum_pool(codes, [(0, n)], cfg.pooling).sum()
    return out


def ablation_inter_only(ks: KeySequenceSet, bank: DictionaryBank, cfg: BankConfig = BankConfig()) -> np.ndarray:
    """The phi block of ITRA alone (length K*C), in ITRA order."""
    return inter_descriptor(ks, bank, cfg=cfg).T.ravel()
