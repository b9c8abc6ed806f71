import json
import logging
import shutil

import numpy as np
import pytest

from affectfusion import DIMENSIONS, cli, pipeline
from affectfusion.data import read_annotation_track, read_feature_track
from affectfusion.data.io import write_descriptor_file, write_feature_track, write_json, write_pgm
from affectfusion.data.types import DescriptorSet, FeatureTrack
from affectfusion.errors import NumericError
from affectfusion.synth import ModalitySpec, SynthSpec, gen_regression_corpus, make_test_images

FAST = ["--set", "train.hidden=[8]", "--set", "train.epochs=4", "--set", "train.batch_size=32"]


def _bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def corpus(tmp_path):
    spec = SynthSpec(seed=5, partitions=(3, 2, 1), duration=8.0,
                     modalities=(ModalitySpec("a", 4, 0.3), ModalitySpec("b", 3, 0.6)))
    res = gen_regression_corpus(spec, tmp_path / "corpus")
    return res.manifest_path, tmp_path / "work"


def _base(corpus):
    manifest, work = corpus
    return ["--manifest", manifest, "--work-dir", work]


def _prepare(corpus, modality="a"):
    base = _base(corpus)
    assert _run("extract", "--kind", "passthrough", "--modality", modality, *base) == 0
    assert _run("fit", "--kind", "standardizer", "--modality", modality, *base) == 0
    assert _run("train", "--modality", modality, *base, *FAST) == 0
    assert _run("predict", "--modality", modality, *base) == 0


# --------------------------------------------------------------- extract


def test_passthrough_byte_identical(corpus):
    manifest, work = corpus
    assert _run("extract", "--kind", "passthrough", "--modality", "a", *_base(corpus)) == 0
    src = manifest.parent / "features" / "a"
    for f in src.iterdir():
        assert (work / "features" / "a" / f.name).read_bytes() == f.read_bytes()
    run = json.loads((work / "features" / "a" / "run.json").read_text())
    assert run["command"] == "extract" and run["config"]["seed"] == 0


def test_passthrough_rejects_inconsistent_dims(corpus):
    manifest, _ = corpus
    write_feature_track(manifest.parent / "features" / "a" / "s001.csv",
                        FeatureTrack([0.0, 0.1], np.zeros((2, 7)), "a"))
    assert _run("extract", "--kind", "passthrough", "--modality", "a", *_base(corpus)) == 1


def _image_manifest(root, template=False):
    img = make_test_images(seed=1, n_noise=1)["noise_0"]
    write_pgm(root / "img" / "f0.pgm", img)
    (root / "frames.csv").write_text("timestamp,image\n0.0,img/f0.pgm\n")
    entry = {"id": "s1", "partition": "test", "modalities": {"face": "frames.csv"}}
    if template:
        pts = [[10, 20], [50, 20], [30, 60], [30, 100]]
        write_json(root / "template.json", {"points": pts, "width": 64, "height": 128})
        (root / "lm.csv").write_text("frame_index,x1,y1,x2,y2,x3,y3,x4,y4\n0,12,22,52,22,32,62,32,102\n")
        entry["modalities"]["marks"] = "lm.csv"
    write_json(root / "manifest.json", {"subjects": [entry]})
    return root / "manifest.json"


def test_extract_hog_single_frame(tmp_path):
    m = _image_manifest(tmp_path)
    assert _run("extract", "--kind", "hog", "--modality", "face", "--manifest", m, "--work-dir", tmp_path / "w") == 0
    tr = read_feature_track(tmp_path / "w" / "features" / "face" / "s1.csv")
    assert tr.vectors.shape == (1, 3780)


def test_extract_hog_with_alignment(tmp_path):
    m = _image_manifest(tmp_path, template=True)
    args = ["--manifest", m, "--work-dir", tmp_path / "w", "--set", f"hog.template={json.dumps(str(tmp_path / 'template.json'))}",
            "--set", "hog.landmarks_modality=marks"]
    assert _run("extract", "--kind", "hog", "--modality", "face", *args) == 0
    tr = read_feature_track(tmp_path / "w" / "features" / "face" / "s1.csv")
    assert tr.vectors.shape == (1, 3780) and tr.vectors.any()


def _descriptor_manifest(root, dim=6, frames=4, per_frame=60):
    r = np.random.default_rng(0)
    centers = r.normal(scale=4, size=(3, dim))
    entries = []
    for i, part in enumerate(["train", "train", "dev", "test"]):
        sid = f"s{i}"
        fr = []
        for f in range(frames):
            lab = r.integers(0, 3, per_frame)
            fr.append((f * 0.5, DescriptorSet(centers[lab] + r.normal(size=(per_frame, dim)), r.uniform(size=per_frame), f)))
        write_descriptor_file(root / "desc" / f"{sid}.csv", fr)
        entry = {"id": sid, "partition": part, "modalities": {"sift": f"desc/{sid}.csv"}}
        if part != "test":
            ts = np.arange(frames) * 0.5
            lines = ["timestamp,arousal,valence,liking"] + [f"{t!r},0.1,0.2,0.3" for t in ts]
            (root / "labels").mkdir(exist_ok=True)
            (root / "labels" / f"{sid}.csv").write_text("\n".join(lines) + "\n")
            entry["labels"] = f"labels/{sid}.csv"
        entries.append(entry)
    write_json(root / "manifest.json", {"subjects": entries})
    return root / "manifest.json"


def test_fv_without_gmm_fails(tmp_path, caplog):
    m = _descriptor_manifest(tmp_path)
    with caplog.at_level(logging.ERROR):
        code = _run("extract", "--kind", "fv", "--modality", "sift", "--manifest", m, "--work-dir", tmp_path / "w")
    assert code == 1
    assert "model not found" in caplog.text


def test_fit_chain_and_fv(tmp_path):
    m = _descriptor_manifest(tmp_path)
    base = ["--manifest", m, "--work-dir", tmp_path / "w", "--set", "kmeans.k=32"]
    for kind in ("kmeans", "gmm", "pca"):
        assert _run("fit", "--kind", kind, "--modality", "sift", *base) == 0
    models = tmp_path / "w" / "models" / "sift"
    gmm = json.loads((models / "gmm" / "model.json").read_text())
    assert gmm["k"] == 32 and len(gmm["weights"]) == 32
    assert sum(gmm["weights"]) == pytest.approx(1.0, abs=1e-9)
    pca = json.loads((models / "pca" / "model.json").read_text())
    assert pca["retained_ratio"] >= 0.99
    run = json.loads((models / "pca" / "run.json").read_text())
    assert run["args"]["n_components"] == pca["n_components"]
    assert _run("extract", "--kind", "fv", "--modality", "sift", *base) == 0
    tr = read_feature_track(tmp_path / "w" / "features" / "sift" / "s3.csv")
    assert tr.vectors.shape == (4, pca["n_components"])


def test_fit_kmeans_k_exceeds_n(tmp_path):
    m = _descriptor_manifest(tmp_path, frames=1, per_frame=5)
    code = _run("fit", "--kind", "kmeans", "--modality", "sift", "--manifest", m,
                "--work-dir", tmp_path / "w", "--set", "kmeans.k=32")
    assert code == 1


def test_boaw_codebook_and_extract(corpus):
    base = [*_base(corpus), "--set", "boaw.codebook_size=5", "--set", "boaw.block_size=2.0"]
    assert _run("fit", "--kind", "boaw-codebook", "--modality", "a", *base) == 0
    assert _run("extract", "--kind", "boaw", "--modality", "a", *base) == 0
    _, work = corpus
    tr = read_feature_track(work / "features" / "a" / "s001.csv")
    assert tr.dim == 5
    # window of 2 s at 10 frames/s holds 20 frames away from the track edges
    assert tr.vectors[3].sum() == 20


# ------------------------------------------------------- train .. fuse


def test_evaluate_perfect_predictions(corpus):
    manifest, work = corpus
    _run("extract", "--kind", "passthrough", "--modality", "a", *_base(corpus))
    for lab in (manifest.parent / "labels").iterdir():
        (work / "predictions" / "gold").mkdir(parents=True, exist_ok=True)
        shutil.copyfile(lab, work / "predictions" / "gold" / lab.name)
    assert _run("evaluate", "--source", "gold", *_base(corpus)) == 0
    score = json.loads((work / "reports" / "gold_dev" / "score.json").read_text())
    for d in DIMENSIONS:
        assert score["dimensions"][d]["ccc"] == pytest.approx(1.0, abs=1e-12)
    assert (work / "reports" / "gold_dev" / "score.png").stat().st_size > 0
    assert (work / "reports" / "gold_dev" / "score.csv").read_text().startswith("dimension,ccc")


def test_evaluate_refuses_test(corpus):
    _, work = corpus
    assert _run("evaluate", "--source", "a", "--partition", "test", *_base(corpus)) == 1
    assert not (work / "reports").exists()


def test_usage_errors_exit_1_and_help_exits_0(capsys):
    assert cli.main(["train"]) == 1
    assert cli.main(["bogus"]) == 1
    assert cli.main(["--help"]) == 0


def test_full_chain_single_modality_fuse(corpus):
    _, work = corpus
    _prepare(corpus)
    for d in DIMENSIONS:
        assert (work / "regressors" / "a" / f"{d}.json").is_file()
        assert (work / "regressors" / "a" / f"{d}_log.png").is_file()
        log = (work / "regressors" / "a" / f"{d}_log.csv").read_text().splitlines()
        assert log[0] == "epoch,train_mse,dev_ccc" and len(log) == 5
    assert _run("evaluate", "--source", "a", *_base(corpus)) == 0
    assert _run("fuse", "--modalities", "a", *_base(corpus)) == 0
    weights = json.loads((work / "fusion" / "weights.json").read_text())
    assert weights == {d: {"a": 1.0} for d in DIMENSIONS}
    for p in (work / "predictions" / "a").glob("s*.csv"):
        fused = read_annotation_track(work / "fusion" / "predictions" / p.name)
        np.testing.assert_array_equal(fused.as_matrix(), read_annotation_track(p).as_matrix())
    assert _run("evaluate", "--source", "fused", *_base(corpus)) == 0


def test_train_twice_byte_identical(corpus):
    _, work = corpus
    _prepare(corpus)
    first = _bytes(work / "regressors")
    cfg = work / "train_run.json"
    shutil.copyfile(work / "regressors" / "a" / "run.json", cfg)
    shutil.rmtree(work / "regressors")
    assert _run("train", "--modality", "a", "--config", cfg) == 0
    assert _bytes(work / "regressors") == first


def test_rerun_every_stage_from_run_json(corpus):
    _, work = corpus
    base = _base(corpus)
    for m in ("a", "b"):
        _prepare(corpus, m)
    assert _run("evaluate", "--source", "a", *base) == 0
    assert _run("fuse", "--modalities", "a,b", *base) == 0
    stages = {
        work / "features" / "a": ["extract", "--kind", "passthrough", "--modality", "a"],
        work / "models" / "a" / "standardizer": ["fit", "--kind", "standardizer", "--modality", "a"],
        work / "regressors" / "a": ["train", "--modality", "a"],
        work / "predictions" / "a": ["predict", "--modality", "a"],
        work / "reports" / "a_dev": ["evaluate", "--source", "a"],
        work / "fusion": ["fuse", "--modalities", "a,b"],
    }
    for directory, argv in stages.items():
        before = _bytes(directory)
        saved = work.parent / "run.json"
        shutil.copyfile(directory / "run.json", saved)
        shutil.rmtree(directory)
        assert _run(*argv, "--config", saved) == 0
        assert _bytes(directory) == before, directory


def test_seed_changes_training(corpus):
    _, work = corpus
    _prepare(corpus)
    first = (work / "regressors" / "a" / "arousal.json").read_bytes()
    assert _run("train", "--modality", "a", *_base(corpus), *FAST, "--seed", "1") == 0
    assert (work / "regressors" / "a" / "arousal.json").read_bytes() != first


# -------------------------------------------------------------- hygiene


def test_test_labels_never_read(corpus, monkeypatch):
    manifest, work = corpus
    doc = json.loads(manifest.read_text())
    poisoned = manifest.parent / "labels" / "poison.csv"
    poisoned.write_text("this is not a label file\n\x00\x01garbage")
    for s in doc["subjects"]:
        if s["partition"] == "test":
            s["labels"] = "labels/poison.csv"
    manifest.write_text(json.dumps(doc))

    reads = []
    real = pipeline.read_annotation_track

    def tracking(path):
        reads.append(str(path))
        return real(path)

    monkeypatch.setattr(pipeline, "read_annotation_track", tracking)
    for m in ("a", "b"):
        _prepare(corpus, m)
    assert _run("fit", "--kind", "boaw-codebook", "--modality", "a", *_base(corpus), "--set", "boaw.codebook_size=3") == 0
    assert _run("evaluate", "--source", "a", *_base(corpus)) == 0
    assert _run("predict", "--modality", "a", "--partitions", "train", *_base(corpus)) == 0
    assert _run("evaluate", "--source", "a", "--partition", "train", *_base(corpus)) == 0
    assert _run("fuse", "--modalities", "a,b", *_base(corpus)) == 0
    assert reads and not any(r.endswith("poison.csv") for r in reads)
    assert (work / "fusion" / "predictions" / "s006.csv").is_file()


def test_fit_reads_no_labels(corpus, monkeypatch):
    calls = []
    monkeypatch.setattr(pipeline, "read_annotation_track", lambda p: calls.append(p))
    _run("extract", "--kind", "passthrough", "--modality", "a", *_base(corpus))
    assert _run("fit", "--kind", "standardizer", "--modality", "a", *_base(corpus)) == 0
    assert calls == []


# ----------------------------------------------------------- exit codes


def test_exit_codes(corpus, monkeypatch, tmp_path):
    assert _run("extract", "--kind", "passthrough", "--modality", "zzz", *_base(corpus)) == 1
    assert _run("extract", "--kind", "passthrough", "--modality", "a", "--manifest", tmp_path / "none.json") == 1
    assert _run("train", "--modality", "a", *_base(corpus), "--set", "train.lr=-1") == 1
    assert _run("train", "--modality", "a", *_base(corpus), "--set", "nonsense=1") == 1
    _run("extract", "--kind", "passthrough", "--modality", "a", *_base(corpus))
    _run("fit", "--kind", "standardizer", "--modality", "a", *_base(corpus))

    def boom(*a, **k):
        raise NumericError("diverged")

    monkeypatch.setattr(pipeline, "mlp_train", boom)
    assert _run("train", "--modality", "a", *_base(corpus)) == 2


def test_training_divergence_exit_code(corpus):
    manifest, _ = corpus
    for f in (manifest.parent / "features" / "a").iterdir():
        tr = read_feature_track(f)
        write_feature_track(f, FeatureTrack(tr.timestamps, tr.vectors * 1e200, "a"))
    base = _base(corpus)
    _run("extract", "--kind", "passthrough", "--modality", "a", *base)
    code = _run("train", "--modality", "a", *base, *FAST, "--set", "train.standardize=false",
                "--set", "train.lr=1e10")
    assert code == 2


def test_synth_subcommands(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"partitions": [2, 1, 1], "duration": 5.0}))
    assert _run("synth", "corpus", "--out", tmp_path / "c", "--spec", spec) == 0
    assert "oracle ridge dev ccc" in capsys.readouterr().out
    assert (tmp_path / "c" / "manifest.json").is_file()
    gspec = tmp_path / "g.json"
    gspec.write_text(json.dumps({"n": 300}))
    assert _run("synth", "gmm", "--out", tmp_path / "g", "--spec", gspec) == 0
    assert (tmp_path / "g" / "truth.json").is_file()
    assert _run("synth", "images", "--out", tmp_path / "i") == 0
    assert (tmp_path / "i" / "constant.pgm").is_file()
    spec.write_text(json.dumps({"bogus": 1}))
    assert _run("synth", "corpus", "--out", tmp_path / "d", "--spec", spec) == 1
