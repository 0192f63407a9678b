"""Sparse-representation classifier over ITRA descriptors.

Training learns one K-SVD dictionary per class and concatenates them into
``B = [B^1 | ... | B^C]``. At inference a test video is decomposed and
described once per reference class; each of the C descriptors is OMP-coded
against ``B``, its pooled class masses give a partial vote, and the majority
of the votes is the label.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .decomposition import VideoTensor, decompose
from .io import load_dictionary, save_dictionary
from .itra import DictionaryBank, itra, sparsity_level, sum_pool
from .solvers import Dictionary, InvalidInputError, block_ranges_for, ksvd, omp_batch


@dataclass
class ClassifierModel:
    b: np.ndarray
    block_ranges: list
    n_b: int
    lambda5: int
    classes: Optional[list] = None

    @property
    def n_classes(self) -> int:
        return len(self.block_ranges)

    @property
    def dim(self) -> int:
        return self.b.shape[0]


@dataclass
class ClassificationResult:
    label: int
    partial_votes: list
    per_class_mass: np.ndarray


def train_classifier(itra_by_class: dict, mu: int = 2, sparsity_fraction: float = 0.10,
                     ksvd_iters: int = 10, seed=0) -> ClassifierModel:
    """Learn the concatenated class dictionary ``B``.

    Each class gets ``n_b = mu * |ITRA|`` atoms, or as many atoms as it has
    training descriptors when that is fewer.

    Parameters
    ----------
    itra_by_class : dict mapping class id to a (|ITRA|, n_videos) matrix
        Class ids must be 0..C-1.
    """
    if not itra_by_class:
        raise InvalidInputError("no classes given")
    n_classes = len(itra_by_class)
    if sorted(itra_by_class) != list(range(n_classes)):
        raise InvalidInputError(f"class ids must be 0..{n_classes - 1}, got {sorted(itra_by_class)}")
    dims = {np.asarray(y).shape[0] for y in itra_by_class.values()}
    if len(dims) != 1:
        raise InvalidInputError(f"descriptor dimensions differ across classes: {sorted(dims)}")
    dim = dims.pop()
    n_b = mu * dim
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(n_classes)
    blocks = []
    for c in range(n_classes):
        y = np.asarray(itra_by_class[c], dtype=np.float64)
        if y.ndim != 2 or y.shape[1] == 0:
            raise InvalidInputError(f"class {c} has no training descriptors")
        atoms = min(n_b, y.shape[1])
        lam4 = sparsity_level(sparsity_fraction, atoms, dim)
        d, _ = ksvd(y, atoms, lam4, ksvd_iters, seed=seeds[c])
        blocks.append(d.atoms)
    b = np.hstack(blocks)
    lam5 = sparsity_level(sparsity_fraction, b.shape[1], dim)
    return ClassifierModel(b, block_ranges_for([blk.shape[1] for blk in blocks]), n_b, lam5)


def partial_vote(masses: np.ndarray) -> int:
    """Class with the largest pooled mass; the smaller id on ties."""
    return int(np.argmax(masses))


def majority_vote(votes, per_class_mass: np.ndarray) -> int:
    """Most frequent vote; ties go to the larger total pooled mass, then the smaller id."""
    counts = Counter(votes)
    top = max(counts.values())
    tied = sorted(c for c, n in counts.items() if n == top)
    if len(tied) == 1:
        return tied[0]
    totals = per_class_mass.sum(axis=0)
    return max(tied, key=lambda c: (totals[c], -c))


def classify_descriptors(descriptors, model: ClassifierModel, pooling: str = "signed") -> ClassificationResult:
    """Vote over the C reference-class descriptors of one test video.

    ``descriptors`` is a sequence of flat ITRA vectors, one per reference
    class. Row ``v`` of ``per_class_mass`` holds the pooled class masses of
    descriptor ``v``'s code.
    """
    omegas = np.stack([np.asarray(d, dtype=np.float64) for d in descriptors], axis=1)
    if omegas.shape[0] != model.dim:
        raise InvalidInputError(f"descriptors are {omegas.shape[0]}-dim, model expects {model.dim}")
    codes, _ = omp_batch(model.b, omegas, model.lambda5)
    mass = sum_pool(codes, model.block_ranges, pooling).T
    votes = [partial_vote(row) for row in mass]
    return ClassificationResult(majority_vote(votes, mass), votes, mass)


def reference_descriptors(video: VideoTensor, per_class_frame_matrices, bank: DictionaryBank,
                          cfg: PipelineConfig, seed=0) -> list:
    """One flat ITRA descriptor per reference class for ``video``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(len(per_class_frame_matrices))
    out = []
    for c, (frames, s) in enumerate(zip(per_class_frame_matrices, seeds)):
        ks = decompose(video, frames, cfg.phog, cfg.selection, cfg.admm, cfg.cuboid, s, reference_class=c)
        out.append(itra(ks, bank, c, cfg.bank).flat)
    return out


def classify(test_video: VideoTensor, per_class_frame_matrices, bank: DictionaryBank, model: ClassifierModel,
             cfg: PipelineConfig = PipelineConfig(), seed=0) -> ClassificationResult:
    """Decompose and describe against every class, then vote.

    ``per_class_frame_matrices[c]`` holds the PHOG columns of class ``c``'s
    training frames.
    """
    if len(per_class_frame_matrices) != model.n_classes:
        raise InvalidInputError(
            f"got frame matrices for {len(per_class_frame_matrices)} classes, model has {model.n_classes}")
    descs = reference_descriptors(test_video, per_class_frame_matrices, bank, cfg, seed)
    return classify_descriptors(descs, model, cfg.bank.pooling)


def save_model(model: ClassifierModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_dictionary(directory / "model.dict", Dictionary(model.b))
    manifest = {
        "classes": model.classes if model.classes is not None else list(range(model.n_classes)),
        "block_ranges": [list(r) for r in model.block_ranges],
        "n_b": model.n_b,
        "lambda5": model.lambda5,
        "itra_dim": model.dim,
    }
    (directory / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model(directory) -> ClassifierModel:
    directory = Path(directory)
    manifest = json.loads((directory / "model.json").read_text())
    b = load_dictionary(directory / "model.dict").atoms
    if b.shape[0] != manifest["itra_dim"]:
        raise InvalidInputError("model.dict dimension disagrees with model.json")
    return ClassifierModel(b, [tuple(r) for r in manifest["block_ranges"]], manifest["n_b"], manifest["lambda5"],
                           manifest["classes"])
