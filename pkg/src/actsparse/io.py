"""Binary file formats.

DICT  magic, u32 version=1, u32 m, u32 n_a, m*n_a f64 column-major,
      then u32 class id, u32 temporal position (0xFFFFFFFF when absent).
MATX  magic, u32 version=1, u32 rows, u32 cols, rows*cols f64 column-major.
KSEQ  magic, u32 version=1, u32 K, u32 t, K x u32 centre indices, K MATX blocks.
VIDF  magic, u32 version=1, u32 n_frames, u32 height, u32 width,
      f32 pixels frame-major, row-major within a frame.

All integers and floats are little-endian.
"""

from __future__ import annotations

import io as _io
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .decomposition import KeySequence, KeySequenceSet, VideoTensor
from .solvers import Dictionary, InvalidInputError

VERSION = 1
ABSENT = 0xFFFFFFFF

PathLike = Union[str, Path]


class FormatError(InvalidInputError):
    """Raised when a file does not follow its declared binary layout."""


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"unexpected end of file: wanted {n} bytes, got {len(data)}")
    return data


def _read_header(fh: BinaryIO, magic: bytes, n_fields: int) -> tuple:
    got = _read_exact(fh, 4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    version, *fields = struct.unpack(f"<{n_fields + 1}I", _read_exact(fh, 4 * (n_fields + 1)))
    if version != VERSION:
        raise FormatError(f"unsupported {magic.decode()} version {version}")
    return tuple(fields)


def _f64_block(fh: BinaryIO, rows: int, cols: int) -> np.ndarray:
    raw = _read_exact(fh, 8 * rows * cols)
    return np.frombuffer(raw, dtype="<f8").reshape((rows, cols), order="F").astype(np.float64)


# -- generic matrices --------------------------------------------------------


def write_matrix(fh: BinaryIO, mat) -> None:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise InvalidInputError("only 2-D matrices can be written")
    fh.write(b"MATX" + struct.pack("<3I", VERSION, *mat.shape))
    fh.write(np.asarray(mat, dtype="<f8").tobytes(order="F"))


def read_matrix(fh: BinaryIO) -> np.ndarray:
    rows, cols = _read_header(fh, b"MATX", 2)
    return _f64_block(fh, rows, cols)


def save_matrix(path: PathLike, mat) -> None:
    with open(path, "wb") as fh:
        write_matrix(fh, mat)


def load_matrix(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_matrix(fh)


# -- dictionaries ------------------------------------------------------------


def dictionary_bytes(d: Dictionary) -> bytes:
    m, n_a = d.atoms.shape
    meta = [ABSENT if v is None else int(v) for v in (d.class_id, d.position)]
    return (b"DICT" + struct.pack("<3I", VERSION, m, n_a)
            + np.asarray(d.atoms, dtype="<f8").tobytes(order="F")
            + struct.pack("<2I", *meta))


def dictionary_from_bytes(data: bytes) -> Dictionary:
    fh = _io.BytesIO(data)
    m, n_a = _read_header(fh, b"DICT", 2)
    atoms = _f64_block(fh, m, n_a)
    tail = fh.read()
    class_id = position = None
    if tail:
        if len(tail) != 8:
            raise FormatError(f"DICT metadata block must be 8 bytes, got {len(tail)}")
        cid, pos = struct.unpack("<2I", tail)
        class_id = None if cid == ABSENT else cid
        position = None if pos == ABSENT else pos
    return Dictionary(atoms, class_id, position)


def save_dictionary(path: PathLike, d: Dictionary) -> None:
    Path(path).write_bytes(dictionary_bytes(d))


def load_dictionary(path: PathLike) -> Dictionary:
    return dictionary_from_bytes(Path(path).read_bytes())


# -- key-sequence sets -------------------------------------------------------


def keysequence_bytes(ks: KeySequenceSet) -> bytes:
    buf = _io.BytesIO()
    buf.write(b"KSEQ" + struct.pack("<3I", VERSION, ks.k, ks.t))
    buf.write(struct.pack(f"<{ks.k}I", *ks.centers))
    for seq in ks.sequences:
        write_matrix(buf, seq.cuboid_descriptors)
    return buf.getvalue()


def keysequence_from_bytes(data: bytes, source_video: str = "", reference_class=None) -> KeySequenceSet:
    """Decode a KSEQ blob. Frames are not stored, so ``frames`` comes back as None."""
    fh = _io.BytesIO(data)
    k, t = _read_header(fh, b"KSEQ", 2)
    centers = struct.unpack(f"<{k}I", _read_exact(fh, 4 * k))
    seqs = [KeySequence(int(c), read_matrix(fh)) for c in centers]
    return KeySequenceSet(seqs, t, source_video, reference_class)


# -- videos ------------------------------------------------------------------


def video_bytes(video: VideoTensor) -> bytes:
    n, h, w = video.frames.shape
    return b"VIDF" + struct.pack("<4I", VERSION, n, h, w) + np.asarray(video.frames, dtype="<f4").tobytes()


def video_from_bytes(data: bytes, id: str = "", class_label=None) -> VideoTensor:
    fh = _io.BytesIO(data)
    n, h, w = _read_header(fh, b"VIDF", 3)
    raw = _read_exact(fh, 4 * n * h * w)
    if fh.read(1):
        raise FormatError("trailing bytes after VIDF pixel data")
    frames = np.frombuffer(raw, dtype="<f4").reshape(n, h, w).astype(np.float64)
    return VideoTensor(frames, id, class_label)


def save_video(path: PathLike, video: VideoTensor) -> None:
    Path(path).write_bytes(video_bytes(video))


def load_video(path: PathLike, class_label=None) -> VideoTensor:
    path = Path(path)
    return video_from_bytes(path.read_bytes(), path.stem, class_label)


# -- PGM frames --------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    """Yield ``count`` whitespace-separated header tokens, skipping comments, then the data offset."""
    pos, tokens = 0, []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    """Binary (P5) PGM as a float image scaled to [0, 1]."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise FormatError(f"{path}: only binary P5 PGM is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    n = w * h * dtype.itemsize
    if len(data) - offset < n:
        raise FormatError(f"{path}: pixel data truncated")
    pix = np.frombuffer(data[offset:offset + n], dtype=dtype).reshape(h, w)
    return pix.astype(np.float64) / maxval


def write_pgm(path: PathLike, img, maxval: int = 255) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    pix = np.rint(img * maxval).astype(dtype)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + pix.tobytes())
