"""Deterministic synthetic corpora standing in for licensed affect data.

Every generator draws from streams derived from a single seed, so equal
specs produce byte-identical files.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from affectfusion import DIMENSIONS
from affectfusion.data.io import write_annotation_track, write_descriptor_file, write_feature_track, write_json, write_pgm
from affectfusion.data.types import AnnotationTrack, DescriptorSet, FeatureTrack, GrayImage
from affectfusion.errors import ValidationError
from affectfusion.metrics import ccc
from affectfusion.seeding import stage_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    dim: int = 16
    noise: float = 0.3


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    partitions: tuple = (6, 3, 3)  # train, dev, test subject counts
    duration: float = 60.0  # seconds per subject
    rate: float = 10.0  # frames per second (features and labels)
    modalities: tuple = (ModalitySpec("m1"), ModalitySpec("m2"), ModalitySpec("m3"))
    n_sinusoids: int = 3
    amplitude: float = 1.0
    freq_range: tuple = (0.05, 0.5)  # Hz
    label_noise: float = 0.02
    ridge: float = 1e-2

    def __post_init__(self):
        if min(self.partitions) < 0 or sum(self.partitions) < 1 or len(self.partitions) != 3:
            raise ValidationError("partitions must be three non-negative counts with a positive total")
        if self.partitions[0] < 1 or self.partitions[1] < 1:
            raise ValidationError("need at least one train and one dev subject")
        if self.duration <= 0 or self.rate <= 0 or self.n_sinusoids < 1:
            raise ValidationError("duration, rate and sinusoid count must be positive")
        if self.label_noise < 0 or self.amplitude < 0:
            raise ValidationError("noise and amplitude must be non-negative")
        mods = tuple(m if isinstance(m, ModalitySpec) else ModalitySpec(**m) for m in self.modalities)
        if not mods:
            raise ValidationError("need at least one modality")
        for m in mods:
            if m.dim < 1 or m.noise < 0:
                raise ValidationError(f"modality {m.name!r}: dim must be >= 1 and noise >= 0")
        if len({m.name for m in mods}) != len(mods):
            raise ValidationError("modality names must be unique")
        object.__setattr__(self, "modalities", mods)
        object.__setattr__(self, "partitions", tuple(int(p) for p in self.partitions))

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown synth option(s): {sorted(unknown)}")
        doc = dict(doc)
        for key in ("partitions", "freq_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "modalities" in doc:
            doc["modalities"] = tuple(ModalitySpec(**m) for m in doc["modalities"])
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["partitions"] = list(self.partitions)
        d["freq_range"] = list(self.freq_range)
        return d


def latent_signal(t: np.ndarray, rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """tanh of a random sum of sinusoids evaluated at times ``t``."""
    a = rng.uniform(0.5, 1.0, spec.n_sinusoids) * spec.amplitude
    freq = rng.uniform(*spec.freq_range, spec.n_sinusoids)
    phase = rng.uniform(0, 2 * np.pi, spec.n_sinusoids)
    return np.tanh(np.sin(2 * np.pi * freq[None, :] * t[:, None] + phase[None, :]) @ a)


def _ridge_fit(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    xb = np.column_stack([x, np.ones(len(x))])
    reg = lam * np.eye(xb.shape[1])
    reg[-1, -1] = 0.0
    return np.linalg.solve(xb.T @ xb + reg, xb.T @ y)


def _ridge_predict(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.column_stack([x, np.ones(len(x))]) @ coef


def ridge_oracle(train_x, train_y, dev_x, dev_y, lam: float) -> dict:
    """Dev CCC per dimension of a ridge regression fit on the training rows."""
    coef = _ridge_fit(train_x, train_y, lam)
    pred = np.clip(_ridge_predict(coef, dev_x), -1.0, 1.0)
    return {d: ccc(pred[:, j], dev_y[:, j]) for j, d in enumerate(DIMENSIONS)}


@dataclass
class CorpusResult:
    manifest_path: Path
    oracle: dict
    clamped: int
    subjects: list = field(default_factory=list)


def gen_regression_corpus(spec: SynthSpec, out_dir) -> CorpusResult:
    """Write a manifest, per-modality feature tracks, labels and ``oracle.json``.

    Each subject gets an independent latent trace per emotion dimension;
    modality features are a fixed random linear lift of the three latents
    plus Gaussian noise. Test subjects get no labels file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lift_rng = stage_rng(spec.seed, "synth/lift")
    lifts = {m.name: lift_rng.normal(size=(3, m.dim)) for m in spec.modalities}
    offsets = {m.name: lift_rng.normal(size=m.dim) for m in spec.modalities}
    n_frames = int(round(spec.duration * spec.rate))
    t = np.arange(n_frames) / spec.rate
    parts = ["train"] * spec.partitions[0] + ["dev"] * spec.partitions[1] + ["test"] * spec.partitions[2]
    entries = []
    pooled = {p: {"y": [], **{m.name: [] for m in spec.modalities}} for p in ("train", "dev")}
    clamped = 0
    for i, part in enumerate(parts):
        sid = f"s{i + 1:03d}"
        rng = stage_rng(spec.seed, f"synth/subject/{sid}")
        z = np.column_stack([latent_signal(t, rng, spec) for _ in DIMENSIONS])
        labels = z + spec.label_noise * rng.normal(size=z.shape)
        clipped = np.clip(labels, -1.0, 1.0)
        clamped += int(np.count_nonzero(clipped != labels))
        entry = {"id": sid, "partition": part, "modalities": {}}
        for m in spec.modalities:
            feats = z @ lifts[m.name] + offsets[m.name] + m.noise * rng.normal(size=(n_frames, m.dim))
            rel = f"features/{m.name}/{sid}.csv"
            write_feature_track(out / rel, FeatureTrack(t, feats, m.name))
            entry["modalities"][m.name] = rel
            if part in pooled:
                pooled[part][m.name].append(feats)
        if part != "test":
            rel = f"labels/{sid}.csv"
            write_annotation_track(out / rel, AnnotationTrack.from_matrix(t, clipped))
            entry["labels"] = rel
            pooled[part]["y"].append(clipped)
        entries.append(entry)
    if clamped:
        logger.info("synth: clamped %d generated label value(s) into [-1, 1]", clamped)

    ytr, ydev = np.vstack(pooled["train"]["y"]), np.vstack(pooled["dev"]["y"])
    oracle = {"modalities": {}, "ridge": spec.ridge}
    for m in spec.modalities:
        oracle["modalities"][m.name] = ridge_oracle(
            np.vstack(pooled["train"][m.name]), ytr, np.vstack(pooled["dev"][m.name]), ydev, spec.ridge
        )
    all_tr = np.hstack([np.vstack(pooled["train"][m.name]) for m in spec.modalities])
    all_dev = np.hstack([np.vstack(pooled["dev"][m.name]) for m in spec.modalities])
    oracle["combined"] = ridge_oracle(all_tr, ytr, all_dev, ydev, spec.ridge)
    oracle["clamped_labels"] = clamped
    write_json(out / "oracle.json", oracle)
    write_json(out / "synth.json", spec.to_dict())
    manifest = out / "manifest.json"
    write_json(manifest, {"subjects": entries})
    return CorpusResult(manifest, oracle, clamped, [e["id"] for e in entries])


@dataclass(frozen=True)
class GmmSynthSpec:
    weights: tuple = (0.5, 0.3, 0.2)
    means: tuple = ((0.0, 0.0), (4.0, 4.0), (-4.0, 4.0))
    variances: tuple = ((1.0, 0.5), (0.5, 1.0), (0.8, 0.8))
    n: int = 20_000
    seed: int = 0
    per_frame: int = 100

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim != 2 or var.shape != mu.shape or w.shape != (mu.shape[0],):
            raise ValidationError("inconsistent GMM truth shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9 or np.any(var <= 0):
            raise ValidationError("GMM truth needs a weight simplex and positive variances")
        if self.n < 1 or self.per_frame < 1:
            raise ValidationError("sample and frame counts must be >= 1")


def sample_gmm(spec: GmmSynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``spec.n`` points; returns samples (N, D) and true component labels."""
    rng = stage_rng(spec.seed, "synth/gmm")
    w = np.asarray(spec.weights, dtype=np.float64)
    mu = np.asarray(spec.means, dtype=np.float64)
    sd = np.sqrt(np.asarray(spec.variances, dtype=np.float64))
    labels = rng.choice(len(w), size=spec.n, p=w)
    x = mu[labels] + sd[labels] * rng.normal(size=(spec.n, mu.shape[1]))
    return x, labels


def gen_gmm_samples(spec: GmmSynthSpec, out_dir) -> tuple[np.ndarray, np.ndarray]:
    """Write samples as a descriptor file (``per_frame`` rows per frame) plus ``truth.json``."""
    out = Path(out_dir)
    x, labels = sample_gmm(spec)
    resp_rng = stage_rng(spec.seed, "synth/gmm/responses")
    frames = []
    for f, s in enumerate(range(0, spec.n, spec.per_frame)):
        rows = x[s : s + spec.per_frame]
        frames.append((float(f), DescriptorSet(rows, resp_rng.uniform(size=len(rows)), f)))
    write_descriptor_file(out / "descriptors.csv", frames)
    write_json(out / "truth.json", {
        "weights": list(spec.weights),
        "means": [list(m) for m in spec.means],
        "variances": [list(v) for v in spec.variances],
        "labels": [int(v) for v in labels],
    })
    return x, labels


def make_test_images(seed: int = 0, n_noise: int = 5) -> dict[str, GrayImage]:
    """Fixture images for HOG and warp checks."""
    rng = stage_rng(seed, "synth/images")
    imgs = {"constant": GrayImage(np.full((128, 64), 128, dtype=np.uint8))}
    step = np.zeros((128, 64), dtype=np.uint8)
    step[:, 32:] = 200
    imgs["step_edge"] = GrayImage(step)
    base = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
    shifted = np.zeros_like(base)
    shifted[:, 1:] = base[:, :-1]
    imgs["shift_base"] = GrayImage(base)
    imgs["shift_by_1"] = GrayImage(shifted)
    for i in range(n_noise):
        imgs[f"noise_{i}"] = GrayImage(rng.integers(0, 256, size=(128, 64), dtype=np.uint8))
    return imgs


def gen_test_images(out_dir, seed: int = 0, n_noise: int = 5) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {}
    for name, img in make_test_images(seed, n_noise).items():
        paths[name] = out / f"{name}.pgm"
        write_pgm(paths[name], img)
    return paths
