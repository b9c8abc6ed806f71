"""Pipeline stages behind the CLI subcommands.

Work directory layout::

    features/<modality>/<subject>.csv     extract
    models/<modality>/<kind>/model.json   fit
    regressors/<modality>/<dim>.json      train (+ <dim>_log.csv, <dim>_log.png)
    predictions/<modality>/<subject>.csv  predict
    reports/<name>/score.{json,csv,png}   evaluate
    fusion/                               fuse (weights.json, summary.json, predictions/)

Each stage directory receives a ``run.json`` holding the command, its
arguments and the fully resolved config; passing that file back through
``--config`` reproduces the stage byte for byte.
"""

from __future__ import annotations

import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from affectfusion import DIMENSIONS
from affectfusion.data.align import align_track, clamp_labels, nearest_indices
from affectfusion.data.io import (
    read_annotation_track,
    read_descriptor_file,
    read_feature_track,
    read_frame_list,
    read_json,
    read_landmarks,
    read_pgm,
    write_annotation_track,
    write_feature_track,
    write_json,
)
from affectfusion.data.manifest import load_manifest
from affectfusion.data.types import AnnotationTrack, CorpusManifest, FeatureTrack, SubjectEntry
from affectfusion.encoding import (
    BoawCodebook,
    GmmModel,
    KMeansModel,
    PcaModel,
    StandardizerModel,
    boaw_encode,
    fisher_encode,
    fv_normalize,
    gmm_fit_em,
    kmeans_fit,
    pca_apply,
    pca_fit,
    standardize_apply,
    standardize_fit,
)
from affectfusion.errors import ValidationError
from affectfusion.fusion import fuse_predictions, search_weights
from affectfusion.metrics import ccc, score_arrays
from affectfusion.plotting import plot_fusion_weights, plot_score_report, plot_training_log
from affectfusion.regressor import MlpModel, TrainConfig, mlp_predict, mlp_train
from affectfusion.seeding import derive_seed
from affectfusion.vision import AlignmentTemplate, HogConfig, fit_affine, hog_extract, select_top_descriptors, warp_image

logger = logging.getLogger(__name__)

EXTRACT_KINDS = ("hog", "fv", "boaw", "passthrough")
FIT_KINDS = ("kmeans", "gmm", "pca", "standardizer", "boaw-codebook")


class Stage:
    """Resolved config plus the manifest and work-dir helpers every command needs."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        if not cfg.get("manifest"):
            raise ValidationError("no manifest given (use --manifest or the config's 'manifest')")
        self.manifest: CorpusManifest = load_manifest(cfg["manifest"])
        self.work = Path(cfg["work_dir"])

    def seed(self, stage: str) -> int:
        return derive_seed(self.cfg["seed"], stage)

    def subjects(self, partitions, modality: str | None = None) -> list[SubjectEntry]:
        out = [s for s in self.manifest.subjects if s.partition in partitions]
        if modality is not None:
            missing = [s.subject_id for s in out if modality not in s.modalities]
            if missing:
                raise ValidationError(f"modality {modality!r} missing for subject(s) {missing}")
        return out

    def labels(self, entry: SubjectEntry, allowed: tuple[str, ...]) -> AnnotationTrack:
        """Read (and clamp) gold labels, refusing partitions outside ``allowed``."""
        if entry.partition not in allowed:
            raise ValidationError(
                f"subject {entry.subject_id!r}: reading {entry.partition} labels is not permitted here"
            )
        if entry.labels is None:
            raise ValidationError(f"subject {entry.subject_id!r}: no labels file")
        track, _ = clamp_labels(read_annotation_track(entry.labels))
        return track

    def model_path(self, modality: str, kind: str) -> Path:
        return self.work / "models" / modality / kind / "model.json"

    def load_model(self, modality: str, kind: str, cls):
        path = self.model_path(modality, kind)
        if not path.is_file():
            raise ValidationError(f"model not found: {kind} model for modality {modality!r} ({path})")
        return cls.from_json(read_json(path))

    def feature_path(self, modality: str, sid: str) -> Path:
        return self.work / "features" / modality / f"{sid}.csv"

    def features(self, modality: str, entry: SubjectEntry) -> FeatureTrack:
        path = self.feature_path(modality, entry.subject_id)
        if not path.is_file():
            raise ValidationError(f"features not found for subject {entry.subject_id!r}: {path} (run extract)")
        return read_feature_track(path, modality)

    def write_run(self, directory: Path, command: str, args: dict) -> None:
        write_json(directory / "run.json", {"command": command, "args": args, "config": self.cfg})


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- extract


def _hog_config(cfg: dict) -> HogConfig:
    h = cfg["hog"]
    return HogConfig(tuple(h["window"]), h["cell"], h["block"], h["block_stride"], h["bins"])


def _hog_subject(job):
    frames_path, landmarks_path, template_doc, cfg = job
    hog_cfg = _hog_config(cfg)
    frames = read_frame_list(frames_path)
    template = AlignmentTemplate.from_json(template_doc) if template_doc else None
    marks = {}
    if landmarks_path:
        marks = {lf.frame_index: lf for lf in read_landmarks(landmarks_path)}
    rows = []
    for i, (_, img_path) in enumerate(frames):
        img = read_pgm(img_path)
        if template is not None:
            if i not in marks:
                raise ValidationError(f"{landmarks_path}: no landmarks for frame {i}")
            t, _ = fit_affine(marks[i], template)
            img = warp_image(img, t, template.width, template.height)
        rows.append(hog_extract(img, hog_cfg))
    return np.array([t for t, _ in frames]), np.vstack(rows)


def _fv_frames(path, gmm: GmmModel, cfg: dict, pca: PcaModel | None):
    frames = read_descriptor_file(path)
    if frames[0][1].dim != gmm.dim:
        raise ValidationError(f"{path}: descriptor dimension {frames[0][1].dim} does not match GMM ({gmm.dim})")
    rows = []
    for _, ds in frames:
        v = fisher_encode(gmm, select_top_descriptors(ds, cfg["descriptors"]["top"]))
        if cfg["fv"]["normalize"]:
            v = fv_normalize(v, cfg["fv"]["power"])
        rows.append(v)
    x = np.vstack(rows)
    if pca is not None:
        x = pca_apply(pca, x)
    return np.array([t for t, _ in frames]), x


def _fv_subject(job):
    path, gmm_doc, pca_doc, cfg = job
    gmm = GmmModel.from_json(gmm_doc)
    pca = PcaModel.from_json(pca_doc) if pca_doc else None
    return _fv_frames(path, gmm, cfg, pca)


def cmd_extract(cfg: dict, kind: str, modality: str) -> list[Path]:
    """Write one FeatureTrack CSV per subject for ``modality``."""
    if kind not in EXTRACT_KINDS:
        raise ValidationError(f"unknown extract kind {kind!r}; choose from {EXTRACT_KINDS}")
    st = Stage(cfg)
    subjects = st.subjects(("train", "dev", "test"), modality)
    if not subjects:
        raise ValidationError(f"no subjects carry modality {modality!r}")
    out_dir = st.work / "features" / modality
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    if kind == "passthrough":
        dims = set()
        for s in subjects:
            dims.add(read_feature_track(s.modalities[modality], modality).dim)
        if len(dims) != 1:
            raise ValidationError(f"modality {modality!r}: inconsistent feature dimensions {sorted(dims)}")
        for s in subjects:
            dst = st.feature_path(modality, s.subject_id)
            shutil.copyfile(s.modalities[modality], dst)
            outputs.append(dst)
        st.write_run(out_dir, "extract", {"kind": kind, "modality": modality})
        return outputs

    if kind == "hog":
        template_doc = read_json(cfg["hog"]["template"]) if cfg["hog"]["template"] else None
        lm_mod = cfg["hog"]["landmarks_modality"]
        if (template_doc is None) != (lm_mod is None):
            raise ValidationError("hog alignment needs both hog.template and hog.landmarks_modality")
        if lm_mod:
            st.subjects(("train", "dev", "test"), lm_mod)
        jobs = [(s.modalities[modality], s.modalities.get(lm_mod) if lm_mod else None, template_doc, cfg)
                for s in subjects]
        results = _map(_hog_subject, jobs, cfg["workers"])
        names = None
    elif kind == "fv":
        gmm = st.load_model(modality, "gmm", GmmModel)
        pca_doc = None
        if cfg["fv"]["pca"]:
            st.load_model(modality, "pca", PcaModel)
            pca_doc = read_json(st.model_path(modality, "pca"))
        gmm_doc = gmm.to_json()
        jobs = [(s.modalities[modality], gmm_doc, pca_doc, cfg) for s in subjects]
        results = _map(_fv_subject, jobs, cfg["workers"])
        names = None
    else:  # boaw
        book = st.load_model(modality, "boaw-codebook", BoawCodebook)
        results = []
        for s in subjects:
            lld = read_feature_track(s.modalities[modality], modality)
            track, empty = boaw_encode(lld, book, hop=cfg["boaw"]["hop"], log_tf=cfg["boaw"]["log_tf"])
            if empty.any():
                logger.warning("subject %s: %d empty BoAW block(s)", s.subject_id, int(empty.sum()))
            results.append((track.timestamps, track.vectors))
        names = [f"w{i + 1}" for i in range(book.size)]

    dims = {x.shape[1] for _, x in results}
    if len(dims) != 1:
        raise ValidationError(f"modality {modality!r}: inconsistent feature dimensions {sorted(dims)}")
    for s, (ts, x) in zip(subjects, results):
        dst = st.feature_path(modality, s.subject_id)
        write_feature_track(dst, FeatureTrack(ts, x, modality), names)
        outputs.append(dst)
    st.write_run(out_dir, "extract", {"kind": kind, "modality": modality})
    logger.info("extract %s: wrote %d track(s) to %s", kind, len(outputs), out_dir)
    return outputs


# -------------------------------------------------------------------- fit


def _pooled_descriptors(st: Stage, modality: str) -> np.ndarray:
    top = st.cfg["descriptors"]["top"]
    rows = []
    for s in st.subjects(("train",), modality):
        for _, ds in read_descriptor_file(s.modalities[modality]):
            rows.append(select_top_descriptors(ds, top).descriptors)
    if not rows:
        raise ValidationError(f"no training descriptors for modality {modality!r}")
    return np.vstack(rows)


def cmd_fit(cfg: dict, kind: str, modality: str) -> Path:
    """Fit one unsupervised model on training-partition data only."""
    if kind not in FIT_KINDS:
        raise ValidationError(f"unknown fit kind {kind!r}; choose from {FIT_KINDS}")
    st = Stage(cfg)
    seed = st.seed(f"fit/{kind}/{modality}")
    info: dict = {"seed": seed}
    if kind == "kmeans":
        data = _pooled_descriptors(st, modality)
        k = cfg["kmeans"]
        model = kmeans_fit(data, k["k"], seed=seed, max_iter=k["max_iter"], tol=k["tol"])
        info.update(iterations=model.n_iter, objective=model.inertia)
    elif kind == "gmm":
        init = st.load_model(modality, "kmeans", KMeansModel)
        data = _pooled_descriptors(st, modality)
        g = cfg["gmm"]
        model = gmm_fit_em(data, init.k, init, g["max_iter"], g["tol"], g["var_floor"])
        info.update(iterations=model.n_iter, objective=model.loglik_history[-1])
    elif kind == "pca":
        gmm = st.load_model(modality, "gmm", GmmModel)
        rows = [_fv_frames(s.modalities[modality], gmm, cfg, None)[1]
                for s in st.subjects(("train",), modality)]
        if not rows:
            raise ValidationError(f"no training subjects for modality {modality!r}")
        model = pca_fit(np.vstack(rows), cfg["pca"]["variance_ratio"])
        info.update(n_components=model.n_components, objective=model.retained_ratio)
    elif kind == "standardizer":
        subs = st.subjects(("train",))
        if not subs:
            raise ValidationError("no training subjects")
        model = standardize_fit(np.vstack([st.features(modality, s).vectors for s in subs]))
        info.update(constant_features=int(model.constant.sum()))
    else:  # boaw-codebook
        subs = st.subjects(("train",), modality)
        data = np.vstack([read_feature_track(s.modalities[modality]).vectors for s in subs]) if subs else None
        if data is None:
            raise ValidationError(f"no training subjects for modality {modality!r}")
        km = kmeans_fit(data, cfg["boaw"]["codebook_size"], seed=seed,
                        max_iter=cfg["kmeans"]["max_iter"], tol=cfg["kmeans"]["tol"])
        model = BoawCodebook(km.centroids, cfg["boaw"]["block_size"])
        info.update(iterations=km.n_iter, objective=km.inertia)
    path = st.model_path(modality, kind)
    write_json(path, model.to_json())
    st.write_run(path.parent, "fit", {"kind": kind, "modality": modality, **info})
    logger.info("fit %s for %s: %s", kind, modality, info)
    return path


# ------------------------------------------------------------------ train


def _design(st: Stage, modality: str, partition: str, scaler):
    xs, ys = [], []
    for s in st.subjects((partition,)):
        gold = st.labels(s, allowed=("train", "dev"))
        feats = align_track(st.features(modality, s), gold.timestamps)
        xs.append(feats.vectors)
        ys.append(gold.as_matrix())
    if not xs:
        raise ValidationError(f"no {partition} subjects")
    x = np.vstack(xs)
    if scaler is not None:
        x = standardize_apply(scaler, x)
    return x, np.vstack(ys)


def _scaler(st: Stage, modality: str):
    if not st.cfg["train"]["standardize"]:
        return None
    return st.load_model(modality, "standardizer", StandardizerModel)


def cmd_train(cfg: dict, modality: str, dimensions=DIMENSIONS) -> list[Path]:
    """Train one regressor per emotion dimension; dev CCC selects the epoch."""
    st = Stage(cfg)
    scaler = _scaler(st, modality)
    xtr, ytr = _design(st, modality, "train", scaler)
    xdev, ydev = _design(st, modality, "dev", scaler)
    out_dir = st.work / "regressors" / modality
    t = cfg["train"]
    outputs = []
    for d in dimensions:
        j = DIMENSIONS.index(d)
        tc = TrainConfig(tuple(t["hidden"]), t["lr"], t["momentum"], t["batch_size"], t["epochs"],
                         t["patience"], st.seed(f"train/{modality}/{d}"))
        model, report = mlp_train(xtr, ytr[:, j], xdev, ydev[:, j], tc)
        logger.info("train %s/%s: best dev CCC %.4f at epoch %d (%.1fs)", modality, d,
                    report.dev_ccc[report.selected_epoch - 1], report.selected_epoch, report.wall_time)
        path = out_dir / f"{d}.json"
        write_json(path, model.to_json())
        (out_dir / f"{d}_log.csv").write_text("\n".join(report.log_lines()) + "\n")
        plot_training_log(report, out_dir / f"{d}_log.png", f"{modality} / {d}")
        outputs.append(path)
    st.write_run(out_dir, "train", {"modality": modality, "dimensions": list(dimensions)})
    return outputs


# ---------------------------------------------------------------- predict


def cmd_predict(cfg: dict, modality: str, partitions=("dev", "test")) -> list[Path]:
    st = Stage(cfg)
    scaler = _scaler(st, modality)
    models = {}
    for d in DIMENSIONS:
        path = st.work / "regressors" / modality / f"{d}.json"
        if not path.is_file():
            raise ValidationError(f"model not found: regressor {path} (run train)")
        models[d] = MlpModel.from_json(read_json(path))
    out_dir = st.work / "predictions" / modality
    outputs = []
    for s in st.subjects(tuple(partitions)):
        feats = st.features(modality, s)
        x = feats.vectors if scaler is None else standardize_apply(scaler, feats.vectors)
        pred = np.column_stack([mlp_predict(models[d], x) for d in DIMENSIONS])
        path = out_dir / f"{s.subject_id}.csv"
        write_annotation_track(path, AnnotationTrack.from_matrix(feats.timestamps, pred))
        outputs.append(path)
    st.write_run(out_dir, "predict", {"modality": modality, "partitions": list(partitions)})
    return outputs


# --------------------------------------------------------------- evaluate


def _read_prediction(directory: Path, sid: str) -> AnnotationTrack:
    path = directory / f"{sid}.csv"
    if not path.is_file():
        raise ValidationError(f"predictions not found for subject {sid!r}: {path}")
    return read_annotation_track(path)


def _pooled_pairs(st: Stage, pred_dirs: list[Path], partition: str, allowed):
    """Gold matrix and, per prediction dir, the aligned prediction matrix, pooled over subjects."""
    golds = []
    preds = [[] for _ in pred_dirs]
    for s in st.subjects((partition,)):
        gold = st.labels(s, allowed=allowed)
        golds.append(gold.as_matrix())
        for i, d in enumerate(pred_dirs):
            p = _read_prediction(d, s.subject_id)
            preds[i].append(p.as_matrix()[nearest_indices(p.timestamps, gold.timestamps)])
    if not golds:
        raise ValidationError(f"no {partition} subjects to score")
    return np.vstack(golds), [np.vstack(p) for p in preds]


def cmd_evaluate(cfg: dict, source: str, partition: str = "dev"):
    """Score ``predictions/<source>`` (or the fused predictions for ``fused``)."""
    if partition == "test":
        raise ValidationError("test labels are never read; evaluate on train or dev")
    st = Stage(cfg)
    pred_dir = st.work / "fusion" / "predictions" if source == "fused" else st.work / "predictions" / source
    gold, (pred,) = _pooled_pairs(st, [pred_dir], partition, allowed=("train", "dev"))
    report = score_arrays(gold, pred)
    out_dir = st.work / "reports" / f"{source}_{partition}"
    write_json(out_dir / "score.json", {"source": source, "partition": partition, **report.to_dict()})
    (out_dir / "score.csv").write_text("\n".join(report.csv_lines()) + "\n")
    plot_score_report(gold, pred, report, out_dir / "score.png", f"{source} ({partition})")
    st.write_run(out_dir, "evaluate", {"source": source, "partition": partition})
    return report, out_dir


# ------------------------------------------------------------------- fuse


def cmd_fuse(cfg: dict, modalities, partitions=("dev", "test")):
    """Search per-dimension fusion weights on dev, then fuse every requested subject."""
    modalities = list(modalities)
    if not modalities:
        raise ValidationError("fuse needs at least one modality")
    st = Stage(cfg)
    dirs = [st.work / "predictions" / m for m in modalities]
    gold, preds = _pooled_pairs(st, dirs, "dev", allowed=("dev",))
    ts = np.arange(len(gold), dtype=np.float64)
    gold_track = AnnotationTrack.from_matrix(ts, gold)
    tracks = [AnnotationTrack.from_matrix(ts, p) for p in preds]
    weights, fused_ccc = search_weights(tracks, gold_track, cfg["fusion"]["step"], modalities)
    single = {m: {d: ccc(p[:, j], gold[:, j]) for j, d in enumerate(DIMENSIONS)}
              for m, p in zip(modalities, preds)}
    out_dir = st.work / "fusion"
    write_json(out_dir / "weights.json", weights.to_json())
    write_json(out_dir / "summary.json", {"fused_dev_ccc": fused_ccc, "single_dev_ccc": single})
    plot_fusion_weights(weights, fused_ccc, single, out_dir / "weights.png")
    for s in st.subjects(tuple(partitions)):
        per_mod = [_read_prediction(d, s.subject_id) for d in dirs]
        ref = per_mod[0].timestamps
        aligned = [AnnotationTrack.from_matrix(ref, p.as_matrix()[nearest_indices(p.timestamps, ref)])
                   for p in per_mod]
        write_annotation_track(out_dir / "predictions" / f"{s.subject_id}.csv",
                               fuse_predictions(aligned, weights))
    st.write_run(out_dir, "fuse", {"modalities": modalities, "partitions": list(partitions)})
    logger.info("fuse: dev CCC %s", {d: round(v, 4) for d, v in fused_ccc.items()})
    return weights, fused_ccc, single
