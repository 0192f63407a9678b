"""End-to-end training and inference over a Dataset.

Key-frame methods: ``proposed`` (joint row-sparse selection), ``uniform``
(segment centres) and ``kmeans`` (clustered windows). Descriptors: ``itra``,
``inter`` (phi only) and ``shared`` (single class-shared dictionary).

Every random draw is derived from the master seed, a stage name and the
indices of the item being processed, so stages can be rerun independently.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..classifier import ClassificationResult, ClassifierModel, classify_descriptors, train_classifier
from ..config import PipelineConfig, validate
from ..decomposition import KeySequenceSet, VideoTensor, build_keysequence_set, decompose
from ..descriptors import phog_matrix
from ..itra import DictionaryBank, itra, learn_dictionary_bank
from ..solvers import Dictionary, InvalidInputError
from .baselines import (
    ablation_inter_only,
    baseline_kmeans_keyframes,
    baseline_uniform_keyframes,
    learn_shared_dictionary,
    nearest_windows,
    shared_descriptor,
    window_embeddings,
)
from .dataset import Dataset
from .evaluation import EvalReport, evaluate

KEYFRAME_METHODS = ("proposed", "uniform", "kmeans")
DESCRIPTORS = ("itra", "shared", "inter")


def stage_seed(master: int, stage: str, *idx: int) -> np.random.SeedSequence:
    """Deterministic child seed for ``stage`` and item indices."""
    return np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stage.encode()), *map(int, idx)])


@dataclass
class TrainedPipeline:
    cfg: PipelineConfig
    seed: int
    keyframes: str
    descriptor: str
    n_classes: int
    class_frames: list
    model: ClassifierModel
    bank: Optional[DictionaryBank] = None
    shared: Optional[Dictionary] = None
    kmeans_centers: Optional[list] = None
    train_keysequences: list = field(default_factory=list)


def _phog_cache(videos, cfg: PipelineConfig) -> list:
    return [phog_matrix(v.frames, cfg.phog) for v in videos]


def train_keysequences(ds: Dataset, cfg: PipelineConfig, seed: int, keyframes: str = "proposed"):
    """Key-sequence sets for every training video, each decomposed against its own class.

    Returns ``(keyseq_sets, labels, per_class_phog, kmeans_centers)``.
    """
    if keyframes not in KEYFRAME_METHODS:
        raise InvalidInputError(f"keyframes must be one of {KEYFRAME_METHODS}")
    train = ds.split("train")
    z = _phog_cache([v for v, _ in train], cfg)
    sel = cfg.selection
    sets = []
    centers_by_class = None
    if keyframes == "kmeans":
        centers_by_class = []
        chosen = {}
        for c in range(ds.n_classes):
            members = [i for i, (_, lab) in enumerate(train) if lab == c]
            idx, centers = baseline_kmeans_keyframes([train[i][0] for i in members], sel.k, sel.t,
                                                    stage_seed(seed, "kmeans", c), cfg.phog,
                                                    phog_cache=[z[i] for i in members])
            centers_by_class.append(centers)
            chosen.update(zip(members, idx))
    for i, (video, c) in enumerate(train):
        s = stage_seed(seed, "train-cuboids", i)
        if keyframes == "proposed":
            others = [z[j] for j, (_, lab) in enumerate(train) if lab == c and j != i]
            rest = np.hstack(others) if others else np.zeros((z[i].shape[0], 0))
            ks = decompose(video, rest, cfg.phog, sel, cfg.admm, cfg.cuboid, s, reference_class=c)
        else:
            idx = baseline_uniform_keyframes(video.n_frames, sel.k) if keyframes == "uniform" else chosen[i]
            ks = build_keysequence_set(video, idx, sel.t, cfg.cuboid, s, reference_class=c)
        sets.append(ks)
    labels = [c for _, c in train]
    per_class = []
    for c in range(ds.n_classes):
        cols = [z[i] for i, lab in enumerate(labels) if lab == c]
        per_class.append(np.hstack(cols))
    return sets, labels, per_class, centers_by_class


def bank_training_sets(keyseq_sets, labels) -> dict:
    """Group cuboid descriptors by (class, position)."""
    cells = {}
    for ks, c in zip(keyseq_sets, labels):
        for j, seq in enumerate(ks.sequences):
            cells.setdefault((c, j), []).append(seq.cuboid_descriptors)
    return {cell: np.hstack(mats) for cell, mats in cells.items()}


def describe(ks: KeySequenceSet, pipe_or_bank, c: int, cfg: PipelineConfig, descriptor: str,
             shared: Optional[Dictionary] = None) -> np.ndarray:
    """Flat feature vector of one key-sequence set for the chosen descriptor variant."""
    if descriptor == "itra":
        return itra(ks, pipe_or_bank, c, cfg.bank).flat
    if descriptor == "inter":
        return ablation_inter_only(ks, pipe_or_bank, cfg.bank)
    if descriptor == "shared":
        return shared_descriptor(ks, shared, cfg.bank)
    raise InvalidInputError(f"descriptor must be one of {DESCRIPTORS}")


def fit(ds: Dataset, cfg: PipelineConfig, seed: int = 0, keyframes: str = "proposed",
        descriptor: str = "itra") -> TrainedPipeline:
    validate(cfg)
    ds.check()
    if descriptor not in DESCRIPTORS:
        raise InvalidInputError(f"descriptor must be one of {DESCRIPTORS}")
    sets, labels, per_class, centers = train_keysequences(ds, cfg, seed, keyframes)
    bank = shared = None
    if descriptor == "shared":
        shared = learn_shared_dictionary(sets, cfg.bank, stage_seed(seed, "shared-dict"))
    else:
        bank = learn_dictionary_bank(bank_training_sets(sets, labels), cfg.bank, stage_seed(seed, "bank"))
    by_class = {}
    for ks, c in zip(sets, labels):
        by_class.setdefault(c, []).append(describe(ks, bank, c, cfg, descriptor, shared))
    feats = {c: np.stack(v, axis=1) for c, v in by_class.items()}
    cc = cfg.classifier
    model = train_classifier(feats, cc.mu, cc.sparsity_fraction, cc.ksvd_iters, stage_seed(seed, "classifier"))
    model.classes = list(ds.classes)
    return TrainedPipeline(cfg, seed, keyframes, descriptor, ds.n_classes, per_class, model, bank, shared,
                           centers, sets)


def query_descriptors(pipe: TrainedPipeline, video: VideoTensor, index: int) -> list:
    """The C reference-class feature vectors of a test video."""
    cfg, sel = pipe.cfg, pipe.cfg.selection
    out = []
    z = phog_matrix(video.frames, cfg.phog) if pipe.keyframes == "kmeans" else None
    for c in range(pipe.n_classes):
        s = stage_seed(pipe.seed, "test-cuboids", index, c)
        if pipe.keyframes == "proposed":
            ks = decompose(video, pipe.class_frames[c], cfg.phog, sel, cfg.admm, cfg.cuboid, s, reference_class=c)
        elif pipe.keyframes == "uniform":
            idx = baseline_uniform_keyframes(video.n_frames, sel.k)
            ks = build_keysequence_set(video, idx, sel.t, cfg.cuboid, s, reference_class=c)
        else:
            centers_idx, emb = window_embeddings(video, sel.t, cfg.phog, z)
            idx = nearest_windows(centers_idx, emb, pipe.kmeans_centers[c])
            ks = build_keysequence_set(video, idx, sel.t, cfg.cuboid, s, reference_class=c)
        out.append(describe(ks, pipe.bank, c, cfg, pipe.descriptor, pipe.shared))
    return out


def predict(pipe: TrainedPipeline, video: VideoTensor, index: int = 0) -> ClassificationResult:
    return classify_descriptors(query_descriptors(pipe, video, index), pipe.model, pipe.cfg.bank.pooling)


def run_experiment(ds: Dataset, cfg: PipelineConfig, seed: int = 0, keyframes: str = "proposed",
                   descriptor: str = "itra") -> tuple:
    """Train on the train split, classify the test split; returns ``(report, results)``.

    The report holds no timings, so identical seeds give byte-identical report files.
    """
    pipe = fit(ds, cfg, seed, keyframes, descriptor)
    test = ds.split("test")
    results = [predict(pipe, v, i) for i, (v, _) in enumerate(test)]
    report = evaluate([r.label for r in results], [c for _, c in test], ds.n_classes, ds.classes,
                      cfg.digest(), seed)
    report.extra = {"keyframes": keyframes, "descriptor": descriptor}
    return report, results
