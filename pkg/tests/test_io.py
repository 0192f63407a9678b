import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from actsparse.decomposition import KeySequence, KeySequenceSet, VideoTensor
from actsparse.io import (
    FormatError,
    dictionary_bytes,
    dictionary_from_bytes,
    keysequence_bytes,
    keysequence_from_bytes,
    load_matrix,
    load_video,
    read_pgm,
    save_matrix,
    save_video,
    video_bytes,
    video_from_bytes,
    write_pgm,
)
from actsparse.solvers import Dictionary


def test_dict_layout_by_hand():
    atoms = np.array([[1.0, 0.0, 0.6], [0.0, 1.0, 0.8]])
    blob = dictionary_bytes(Dictionary(atoms, 2, 1))
    assert blob[:4] == b"DICT"
    assert struct.unpack("<3I", blob[4:16]) == (1, 2, 3)
    values = struct.unpack("<6d", blob[16:64])
    assert values == (1.0, 0.0, 0.0, 1.0, 0.6, 0.8)  # column-major
    assert struct.unpack("<2I", blob[64:]) == (2, 1)


def test_dict_roundtrip_with_and_without_metadata():
    atoms = Dictionary.from_columns(np.random.default_rng(0).standard_normal((5, 7))).atoms
    for meta in [(None, None), (3, 0), (None, 2)]:
        back = dictionary_from_bytes(dictionary_bytes(Dictionary(atoms, *meta)))
        assert back.atoms.tobytes() == atoms.tobytes()
        assert (back.class_id, back.position) == meta
    blob = dictionary_bytes(Dictionary(atoms))
    assert blob[-8:] == b"\xff" * 8
    # metadata block is optional when reading
    assert dictionary_from_bytes(blob[:-8]).class_id is None


def test_dict_rejects_bad_files():
    blob = dictionary_bytes(Dictionary(np.eye(2)))
    with pytest.raises(FormatError):
        dictionary_from_bytes(b"DICX" + blob[4:])
    with pytest.raises(FormatError):
        dictionary_from_bytes(blob[:20])
    with pytest.raises(FormatError):
        dictionary_from_bytes(blob[:4] + struct.pack("<I", 2) + blob[8:])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_dict_roundtrip_lossless(m, n, seed):
    d = Dictionary.from_columns(np.random.default_rng(seed).standard_normal((m, n)) + 1e-3)
    assert dictionary_from_bytes(dictionary_bytes(d)).atoms.tobytes() == d.atoms.tobytes()


def test_matrix_roundtrip(tmp_path):
    mat = np.random.default_rng(1).standard_normal((4, 9))
    save_matrix(tmp_path / "m.matx", mat)
    assert load_matrix(tmp_path / "m.matx").tobytes() == mat.tobytes()
    save_matrix(tmp_path / "e.matx", np.zeros((12, 0)))
    assert load_matrix(tmp_path / "e.matx").shape == (12, 0)


def test_keysequence_roundtrip():
    rng = np.random.default_rng(2)
    ks = KeySequenceSet([KeySequence(c, rng.random((12, n))) for c, n in [(2, 5), (9, 3), (15, 7)]], 3, "v", 1)
    back = keysequence_from_bytes(keysequence_bytes(ks), "v", 1)
    assert back.centers == [2, 9, 15] and back.t == 3
    for a, b in zip(ks.sequences, back.sequences):
        assert a.cuboid_descriptors.tobytes() == b.cuboid_descriptors.tobytes()
    assert keysequence_bytes(back) == keysequence_bytes(ks)


def test_vidf_header_example(tmp_path):
    frames = np.arange(80, dtype=np.float32).reshape(5, 4, 4) / 80
    blob = b"VIDF" + struct.pack("<4I", 1, 5, 4, 4) + frames.astype("<f4").tobytes()
    (tmp_path / "clip.vidf").write_bytes(blob)
    video = load_video(tmp_path / "clip.vidf")
    assert video.frames.shape == (5, 4, 4) and video.id == "clip"
    np.testing.assert_array_equal(video.frames, frames)


def test_vidf_roundtrip_and_errors(tmp_path):
    frames = np.random.default_rng(3).random((6, 8, 7)).astype(np.float32)
    video = VideoTensor(frames, "x")
    save_video(tmp_path / "x.vidf", video)
    assert load_video(tmp_path / "x.vidf").frames.tobytes() == frames.astype(np.float64).tobytes()
    blob = video_bytes(video)
    with pytest.raises(FormatError):
        video_from_bytes(blob + b"\x00")
    with pytest.raises(FormatError):
        video_from_bytes(blob[:-1])


@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, width=32)))
def test_vidf_lossless_for_float32(frames):
    back = video_from_bytes(video_bytes(VideoTensor(frames)))
    np.testing.assert_array_equal(back.frames, frames)


@pytest.mark.parametrize("maxval", [255, 65535])
def test_pgm_roundtrip(tmp_path, maxval):
    img = np.round(np.random.default_rng(4).random((6, 9)) * maxval) / maxval
    write_pgm(tmp_path / "f.pgm", img, maxval)
    np.testing.assert_allclose(read_pgm(tmp_path / "f.pgm"), img, atol=1e-12)


def test_pgm_header_comments_and_errors(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])
    (tmp_path / "a.pgm").write_bytes(b"P2\n2 1\n255\n0 255\n")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "a.pgm")
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "t.pgm")
