"""Dataset container, on-disk layout and ingestion.

Layout::

    root/{train,test}/{class}/{video}/frame_00000.pgm ...
    root/{train,test}/{class}/{video}.vidf
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..decomposition import VideoTensor
from ..io import load_video, read_pgm, save_video
from ..solvers import InvalidInputError

SPLITS = ("train", "test")


@dataclass
class Dataset:
    classes: list
    videos: list = field(default_factory=list)  # (VideoTensor, class id, split)

    def __post_init__(self):
        for video, c, split in self.videos:
            if not 0 <= c < len(self.classes):
                raise InvalidInputError(f"video {video.id!r} has class id {c} outside 0..{len(self.classes) - 1}")
            if split not in SPLITS:
                raise InvalidInputError(f"video {video.id!r} has split {split!r}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def split(self, name: str) -> list:
        return [(v, c) for v, c, s in self.videos if s == name]

    def check(self) -> None:
        """Every class needs at least one training video."""
        have = {c for _, c, s in self.videos if s == "train"}
        empty = [self.classes[c] for c in range(self.n_classes) if c not in have]
        if empty:
            raise InvalidInputError(f"classes without training videos: {empty}")


def _load_frame_dir(path: Path, class_id: int) -> VideoTensor:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise InvalidInputError(f"{path}: no .pgm frames")
    frames = [read_pgm(p) for p in files]
    shape = frames[0].shape
    for p, f in zip(files, frames):
        if f.shape != shape:
            raise InvalidInputError(f"{p}: frame size {f.shape} differs from {shape} in {path}")
    return VideoTensor(np.stack(frames), path.name, class_id)


def ingest(root) -> Dataset:
    """Load a dataset tree; classes are ordered lexicographically by directory name."""
    root = Path(root)
    if not root.is_dir():
        raise InvalidInputError(f"{root}: not a directory")
    names = sorted({p.name for s in SPLITS if (root / s).is_dir() for p in (root / s).iterdir() if p.is_dir()})
    if not names:
        raise InvalidInputError(f"{root}: no class directories under train/ or test/")
    index = {n: i for i, n in enumerate(names)}
    videos = []
    for split in SPLITS:
        for name in names:
            cdir = root / split / name
            if not cdir.is_dir():
                continue
            entries = sorted(cdir.iterdir())
            if not entries and split == "train":
                raise InvalidInputError(f"{cdir}: empty class")
            for entry in entries:
                if entry.is_dir():
                    video = _load_frame_dir(entry, index[name])
                elif entry.suffix.lower() == ".vidf":
                    video = load_video(entry, index[name])
                else:
                    continue
                videos.append((video, index[name], split))
    ds = Dataset(names, videos)
    ds.check()
    return ds


def write_dataset(ds: Dataset, root) -> None:
    """Write every video as ``root/{split}/{class}/{video}.vidf``."""
    root = Path(root)
    for video, c, split in ds.videos:
        out = root / split / ds.classes[c]
        out.mkdir(parents=True, exist_ok=True)
        save_video(out / f"{video.id}.vidf", video)
