import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from actsparse.config import PipelineConfig, desk_config, load_config, validate
from actsparse.decomposition import KeySequence, KeySequenceSet, VideoTensor
from actsparse.harness import cli
from actsparse.harness.baselines import (
    ablation_inter_only,
    baseline_kmeans_keyframes,
    baseline_uniform_keyframes,
    kmeans,
    learn_shared_dictionary,
    shared_descriptor,
)
from actsparse.harness.dataset import Dataset, ingest, write_dataset
from actsparse.harness.evaluation import evaluate
from actsparse.harness.pipeline import run_experiment, stage_seed
from actsparse.harness.synth import ARCHETYPES, SynthConfig, synth_gen
from actsparse.io import write_pgm
from actsparse.itra import BankConfig, DictionaryBank, itra
from actsparse.solvers import Dictionary, InvalidInputError
from oracles import lloyd_1d, nearest_centroid_accuracy

TINY = SynthConfig(n_classes=2, train_per_class=3, test_per_class=2, n_frames=16)


# -- ingestion ---------------------------------------------------------------


def write_frames(directory, frames, names=None):
    directory.mkdir(parents=True)
    names = names or [f"frame_{i:05d}.pgm" for i in range(len(frames))]
    for name, f in zip(names, frames):
        write_pgm(directory / name, f)


def test_ingest_two_classes_pgm(tmp_path):
    rng = np.random.default_rng(0)
    write_frames(tmp_path / "train" / "wave" / "v1", rng.random((3, 4, 5)))
    write_frames(tmp_path / "train" / "box" / "v2", rng.random((4, 4, 5)))
    ds = ingest(tmp_path)
    assert ds.classes == ["box", "wave"] and ds.n_classes == 2
    assert [(v.id, c, s) for v, c, s in ds.videos] == [("v2", 0, "train"), ("v1", 1, "train")]
    assert ds.videos[0][0].frames.shape == (4, 4, 5)


def test_ingest_sorts_frame_names(tmp_path):
    frames = [np.full((3, 3), v / 255) for v in (10, 20, 30)]
    write_frames(tmp_path / "train" / "a" / "v", frames, ["frame_00010.pgm", "frame_00002.pgm", "frame_00007.pgm"])
    video = ingest(tmp_path).videos[0][0]
    np.testing.assert_allclose(video.frames[:, 0, 0], [20 / 255, 30 / 255, 10 / 255])


def test_ingest_rejects_mixed_sizes(tmp_path):
    d = tmp_path / "train" / "a" / "v"
    d.mkdir(parents=True)
    write_pgm(d / "frame_00000.pgm", np.zeros((3, 3)))
    write_pgm(d / "frame_00001.pgm", np.zeros((4, 3)))
    with pytest.raises(InvalidInputError, match="frame_00001.pgm"):
        ingest(tmp_path)


def test_ingest_rejects_empty_class(tmp_path):
    write_frames(tmp_path / "train" / "a" / "v", np.zeros((2, 3, 3)))
    (tmp_path / "train" / "b").mkdir()
    with pytest.raises(InvalidInputError, match="empty class"):
        ingest(tmp_path)


def test_ingest_requires_train_video_per_class(tmp_path):
    write_frames(tmp_path / "train" / "a" / "v", np.zeros((2, 3, 3)))
    write_frames(tmp_path / "test" / "b" / "w", np.zeros((2, 3, 3)))
    with pytest.raises(InvalidInputError, match="without training"):
        ingest(tmp_path)


def test_vidf_dataset_roundtrip(tmp_path):
    ds = synth_gen(TINY, seed=3)
    write_dataset(ds, tmp_path)
    back = ingest(tmp_path)
    original = {v.id: (v.frames, ds.classes[c], s) for v, c, s in ds.videos}
    assert len(back.videos) == len(ds.videos)
    for v, c, s in back.videos:
        frames, name, split = original[v.id]
        assert v.frames.tobytes() == frames.tobytes()
        assert (back.classes[c], s) == (name, split)


# -- synthetic data ----------------------------------------------------------


def test_synth_counts():
    ds = synth_gen(SynthConfig(), seed=0)
    assert len(ds.videos) == 45
    assert len(ds.split("train")) == 30 and len(ds.split("test")) == 15
    assert all(v.frames.shape == (24, 32, 32) for v, _, _ in ds.videos)


def test_synth_noise_free_bitwise_identical():
    cfg = SynthConfig(noise=0.0)
    a, b = synth_gen(cfg, seed=5), synth_gen(cfg, seed=5)
    assert all(x.frames.tobytes() == y.frames.tobytes() for (x, _, _), (y, _, _) in zip(a.videos, b.videos))


def test_synth_seeds_differ_and_archetypes_limited():
    a, b = synth_gen(TINY, seed=1), synth_gen(TINY, seed=2)
    assert a.videos[0][0].frames.tobytes() != b.videos[0][0].frames.tobytes()
    assert len(ARCHETYPES) == 6
    synth_gen(SynthConfig(n_classes=6, train_per_class=1, test_per_class=0, n_frames=4), seed=0)
    with pytest.raises(InvalidInputError):
        synth_gen(SynthConfig(n_classes=7))


def test_synth_separable_by_nearest_centroid_on_mean_frames():
    ds = synth_gen(SynthConfig(), seed=0)
    feat = lambda v: v.frames.mean(axis=0).ravel()
    train, test = ds.split("train"), ds.split("test")
    acc = nearest_centroid_accuracy([feat(v) for v, _ in train], [c for _, c in train],
                                    [feat(v) for v, _ in test], [c for _, c in test])
    assert acc > 1 / 3


# -- key-frame baselines -----------------------------------------------------


def test_uniform_keyframes_examples():
    assert baseline_uniform_keyframes(9, 3) == [1, 4, 7]
    assert baseline_uniform_keyframes(10, 3) == [1, 5, 8]
    assert baseline_uniform_keyframes(9, 1) == [4]
    assert baseline_uniform_keyframes(3, 3) == [0, 1, 2]
    with pytest.raises(InvalidInputError):
        baseline_uniform_keyframes(2, 3)


@given(st.integers(1, 12).flatmap(lambda k: st.tuples(st.integers(k, 300), st.just(k))))
def test_uniform_keyframes_depend_only_on_length(nk):
    n, k = nk
    video = VideoTensor(np.random.default_rng(n).random((n, 2, 2)))
    out = baseline_uniform_keyframes(video, k)
    assert out == baseline_uniform_keyframes(n, k)
    assert len(out) == k and out == sorted(set(out))


def test_kmeans_two_clusters_match_lloyd_oracle():
    rng = np.random.default_rng(0)
    pts = np.concatenate([rng.normal(-5, 0.3, 40), rng.normal(7, 0.3, 25)])
    centers, labels = kmeans(pts[:, None], 2, seed=3)
    expected = lloyd_1d(pts, [pts.min(), pts.max()])
    np.testing.assert_allclose(np.sort(centers[:, 0]), expected, atol=1e-6)
    np.testing.assert_allclose(expected, [pts[:40].mean(), pts[40:].mean()], atol=1e-6)
    assert len(set(labels[:40])) == 1 and len(set(labels[40:])) == 1


def test_kmeans_reseeds_empty_cluster():
    pts = np.array([[0.0], [0.0], [0.0], [10.0]])
    centers, labels = kmeans(pts, 3, seed=0)
    assert np.all(np.isfinite(centers))
    with pytest.raises(InvalidInputError):
        kmeans(pts, 5)


def window_video(pattern, seed):
    """Frames alternate between two images according to ``pattern``."""
    rng = np.random.default_rng(seed)
    bright = np.zeros((16, 16))
    bright[:, 8:] = 1
    dark = np.zeros((16, 16))
    dark[8:, :] = 1
    frames = [(bright if p else dark) + 0.01 * rng.random((16, 16)) for p in pattern]
    return VideoTensor(np.stack(frames))


def test_kmeans_keyframes_separated_windows():
    videos = [window_video([1] * 8 + [0] * 8, s) for s in range(3)]
    idx, centers = baseline_kmeans_keyframes(videos, 2, 1, seed=0)
    assert centers.shape[0] == 2
    for chosen in idx:
        assert len(chosen) == 2 and chosen[0] < 8 <= chosen[1]


def test_kmeans_keyframes_identical_windows_deterministic():
    frame = np.random.default_rng(1).random((16, 16))
    videos = [VideoTensor(np.repeat(frame[None], 10, axis=0)) for _ in range(2)]
    a, _ = baseline_kmeans_keyframes(videos, 3, 1, seed=4)
    b, _ = baseline_kmeans_keyframes(videos, 3, 1, seed=4)
    assert a == b
    assert all(len(x) == 3 and all(1 <= i <= 8 for i in x) for x in a)


def test_kmeans_keyframes_k1_nearest_global_mean():
    videos = [window_video([1, 1, 0, 0, 0, 0, 0, 1], s) for s in range(2)]
    idx, centers = baseline_kmeans_keyframes(videos, 1, 1, seed=0)
    from actsparse.harness.baselines import window_embeddings
    for video, chosen in zip(videos, idx):
        cidx, emb = window_embeddings(video, 1)
        assert chosen == [int(cidx[np.argmin(np.sum((emb - centers[0]) ** 2, axis=1))])]


# -- descriptor ablations ----------------------------------------------------


def small_bank_and_sets(rng, c=3, k=3, delta=4, n_a=3):
    dicts = {(ci, j): Dictionary.from_columns(rng.standard_normal((delta, n_a)), ci, j)
             for ci in range(c) for j in range(k)}
    bank = DictionaryBank(dicts, c, k, n_a, delta)
    sets = [KeySequenceSet([KeySequence(3 * j, rng.random((delta, 5))) for j in range(k)], 1) for _ in range(4)]
    return bank, sets


def test_shared_dictionary_single_and_length_k():
    rng = np.random.default_rng(2)
    _, sets = small_bank_and_sets(rng)
    cfg = BankConfig(delta=4, n_atoms=6, ksvd_iters=2)
    d = learn_shared_dictionary(sets, cfg, seed=0)
    assert isinstance(d, Dictionary) and d.atoms.shape == (4, 6)
    assert shared_descriptor(sets[0], d, cfg).shape == (3,)


def test_inter_only_is_phi_block():
    rng = np.random.default_rng(3)
    bank, sets = small_bank_and_sets(rng)
    cfg = BankConfig(delta=4, n_atoms=3)
    inter = ablation_inter_only(sets[0], bank, cfg)
    assert inter.shape == (9,)
    full = itra(sets[0], bank, 1, cfg).flat
    assert inter.tobytes() == full[:9].tobytes()


def test_shared_dictionary_pipeline_smoke():
    ds = synth_gen(SynthConfig(train_per_class=4, test_per_class=2), seed=1)
    report, results = run_experiment(ds, desk_config(), 1, "proposed", "shared")
    assert len(results) == 6 and 0 <= report.accuracy <= 1


# -- evaluation --------------------------------------------------------------


def test_evaluate_all_correct():
    rep = evaluate([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert rep.accuracy == 1.0
    assert rep.confusion == [[1, 0, 0], [0, 2, 0], [0, 0, 1]]
    assert rep.per_class_recall == [1.0, 1.0, 1.0]


def test_evaluate_all_class_zero():
    truth = [0, 0, 1, 2, 2]
    assert evaluate([0] * 5, truth, 3).accuracy == pytest.approx(2 / 5)


def test_evaluate_hand_counted():
    rep = evaluate([0, 1, 1, 2, 0, 2], [0, 0, 1, 1, 2, 2], 3)
    assert rep.confusion == [[1, 1, 0], [0, 1, 1], [1, 0, 1]]
    assert rep.per_class_recall == [0.5, 0.5, 0.5]
    assert evaluate([0], [0], 2).per_class_recall == [1.0, None]


def test_evaluate_outputs(tmp_path):
    rep = evaluate([0, 1], [0, 0], 2, ["a", "b"], "abc", 4)
    rep.write(tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["accuracy"] == 0.5 and data["seed"] == 4 and data["config_hash"] == "abc"
    assert (tmp_path / "confusion.csv").read_text() == "true\\pred,a,b\na,1,1\nb,0,0\n"
    with pytest.raises(InvalidInputError):
        evaluate([0, 3], [0, 1], 2)
    with pytest.raises(InvalidInputError):
        evaluate([], [], 2)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40), st.randoms())
def test_evaluate_invariants(pairs, rnd):
    pred, truth = zip(*pairs)
    rep = evaluate(pred, truth, 5)
    conf = np.array(rep.confusion)
    assert conf.dtype.kind == "i" and np.all(conf >= 0)
    assert 0 <= rep.accuracy <= 1
    np.testing.assert_array_equal(conf.sum(axis=1), np.bincount(truth, minlength=5))
    assert rep.accuracy == np.trace(conf) / conf.sum()
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    p2, t2 = zip(*shuffled)
    again = evaluate(p2, t2, 5)
    assert again.confusion == rep.confusion and again.accuracy == rep.accuracy


# -- config and seeds --------------------------------------------------------


def test_config_roundtrip_and_validation(tmp_path):
    cfg = desk_config()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = load_config(path)
    assert back == cfg and back.digest() == cfg.digest()
    validate(cfg)
    with pytest.raises(InvalidInputError):
        PipelineConfig.from_dict({"bank": {"bogus": 1}})
    with pytest.raises(InvalidInputError):
        validate(cfg.with_updates(bank={"delta": 300}))
    with pytest.raises(InvalidInputError):
        validate(cfg.with_updates(selection={"t": 1}))
    assert PipelineConfig().cuboid.hog3d.dim == PipelineConfig().bank.delta == 300


def test_digest_ignores_paths():
    a = PipelineConfig.from_dict({"paths": {"work": "/a"}})
    b = PipelineConfig.from_dict({"paths": {"work": "/b"}})
    assert a.digest() == b.digest()
    assert a.digest() != PipelineConfig.from_dict({"selection": {"k": 2}}).digest()


def test_stage_seed_deterministic_and_distinct():
    a = np.random.default_rng(stage_seed(5, "bank")).random()
    assert a == np.random.default_rng(stage_seed(5, "bank")).random()
    assert a != np.random.default_rng(stage_seed(5, "classifier")).random()
    assert a != np.random.default_rng(stage_seed(6, "bank")).random()
    stage_seed(2 ** 64 - 1, "x", 3)


# -- CLI ---------------------------------------------------------------------


def write_cli_config(tmp_path, **extra):
    cfg = desk_config().to_dict()
    cfg["paths"] = {"dataset": str(tmp_path / "data"), "work": str(tmp_path / "work"), "out": str(tmp_path / "out")}
    cfg["synth"] = {"n_classes": 2, "train_per_class": 3, "test_per_class": 2, "n_frames": 16}
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_staged_pipeline(tmp_path, capsys):
    config = write_cli_config(tmp_path)
    stages = ["synth", "ingest-check", "decompose", "train-bank", "describe", "train-classifier", "classify",
              "evaluate"]
    for stage in stages:
        assert cli.main([stage, "--config", config, "--seed", "11"]) == 0, stage
    capsys.readouterr()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["seed"] == 11 and len(report["confusion"]) == 2
    assert (tmp_path / "out" / "confusion.csv").exists()
    assert (tmp_path / "work" / "bank" / "manifest.json").exists()
    assert (tmp_path / "work" / "model" / "model.dict").exists()
    # the in-memory run reaches the same predictions
    assert cli.main(["run", "--config", config, "--seed", "11", "--out", str(tmp_path / "run")]) == 0
    again = json.loads((tmp_path / "run" / "report.json").read_text())
    assert again["confusion"] == report["confusion"]


def test_cli_ablate(tmp_path, capsys):
    config = write_cli_config(tmp_path, ablation={"keyframes": ["uniform", "kmeans"], "descriptors": ["shared"]})
    assert cli.main(["synth", "--config", config, "--seed", "2"]) == 0
    assert cli.main(["ablate", "--config", config, "--seed", "2"]) == 0
    out = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert [(c["keyframes"], c["descriptor"]) for c in out["cells"]] == [("uniform", "shared"), ("kmeans", "shared")]
    assert (tmp_path / "out" / "kmeans-shared" / "report.json").exists()


def test_cli_errors_are_json(tmp_path, capsys):
    assert cli.main(["ingest-check", "--seed", "0"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CliError" and "dataset" in err["message"]
    assert cli.main(["ingest-check", "--dataset", str(tmp_path / "missing")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidInputError"
    with pytest.raises(SystemExit) as exc:
        cli.main(["decompose", "--seed", "-4"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"
    bad = tmp_path / "bad.json"
    bad.write_text('{"descriptor": "fancy"}')
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert "descriptor" in json.loads(capsys.readouterr().err)["message"]
