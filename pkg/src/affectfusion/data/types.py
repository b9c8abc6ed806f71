"""Immutable domain containers.

Arrays stored on these objects are copied on construction and flagged
read-only so instances can be shared across worker processes safely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from affectfusion.errors import ValidationError


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_increasing(ts: np.ndarray, what: str) -> None:
    if ts.ndim != 1:
        raise ValidationError(f"{what}: timestamps must be one-dimensional")
    if not np.all(np.isfinite(ts)):
        raise ValidationError(f"{what}: non-finite timestamp")
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise ValidationError(f"{what}: timestamps must be strictly increasing")


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale image, ``pixels`` has shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError(f"image must be a non-empty 2-D grid, got shape {px.shape}")
        if px.dtype != np.uint8:
            if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 255:
                raise ValidationError("image intensities must lie in [0, 255]")
            px = np.rint(px)
        object.__setattr__(self, "pixels", _frozen(px, np.uint8))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class LandmarkFrame:
    frame_index: int
    points: np.ndarray  # (k, 2) as (x, y)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValidationError(
                f"frame {self.frame_index}: need at least 3 (x, y) landmarks, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"frame {self.frame_index}: non-finite landmark coordinate")
        object.__setattr__(self, "points", _frozen(pts))


@dataclass(frozen=True)
class DescriptorSet:
    """Local descriptors of one frame with their detector response values."""

    descriptors: np.ndarray  # (N, D)
    responses: np.ndarray  # (N,)
    frame_index: int = 0

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        r = np.asarray(self.responses, dtype=np.float64)
        if d.ndim != 2:
            raise ValidationError(f"descriptors must be an N x D matrix, got shape {d.shape}")
        if r.shape != (d.shape[0],):
            raise ValidationError(
                f"frame {self.frame_index}: {r.size} responses for {d.shape[0]} descriptors"
            )
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(r))):
            raise ValidationError(f"frame {self.frame_index}: non-finite descriptor entry")
        object.__setattr__(self, "descriptors", _frozen(d))
        object.__setattr__(self, "responses", _frozen(r))

    def __len__(self) -> int:
        return int(self.descriptors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.descriptors.shape[1])


@dataclass(frozen=True)
class FeatureTrack:
    timestamps: np.ndarray  # (T,)
    vectors: np.ndarray  # (T, F)
    modality_id: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vec = np.asarray(self.vectors, dtype=np.float64)
        _check_increasing(ts, f"track {self.modality_id!r}")
        if vec.ndim == 1 and ts.size == vec.size == 0:
            vec = vec.reshape(0, 0)
        if vec.ndim != 2 or vec.shape[0] != ts.size:
            raise ValidationError(
                f"track {self.modality_id!r}: {ts.size} timestamps for vectors of shape {vec.shape}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"track {self.modality_id!r}: non-finite feature value")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "vectors", _frozen(vec))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


@dataclass(frozen=True)
class AnnotationTrack:
    """Time-stamped (arousal, valence, liking) triples.

    Used for gold labels and, under the ``PredictionTrack`` alias, for model
    output. Range checking is left to :func:`clamp_labels` because raw
    annotation files may legitimately overshoot [-1, 1].
    """

    timestamps: np.ndarray
    arousal: np.ndarray
    valence: np.ndarray
    liking: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        _check_increasing(ts, "annotation track")
        object.__setattr__(self, "timestamps", _frozen(ts))
        for name in ("arousal", "valence", "liking"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != ts.shape:
                raise ValidationError(
                    f"annotation track: {name} has {v.size} values for {ts.size} timestamps"
                )
            object.__setattr__(self, name, _frozen(v))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def dimension(self, name: str) -> np.ndarray:
        if name not in ("arousal", "valence", "liking"):
            raise ValidationError(f"unknown emotion dimension {name!r}")
        return getattr(self, name)

    def as_matrix(self) -> np.ndarray:
        """(T, 3) matrix in arousal, valence, liking column order."""
        return np.column_stack([self.arousal, self.valence, self.liking])

    @classmethod
    def from_matrix(cls, timestamps, values) -> "AnnotationTrack":
        values = np.asarray(values, dtype=np.float64).reshape(-1, 3)
        return cls(timestamps, values[:, 0], values[:, 1], values[:, 2])


PredictionTrack = AnnotationTrack


@dataclass(frozen=True)
class SubjectEntry:
    subject_id: str
    partition: str
    modalities: dict[str, str] = field(default_factory=dict)
    labels: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    subjects: tuple[SubjectEntry, ...]
    root: str = "."

    def by_partition(self, partition: str) -> list[SubjectEntry]:
        return [s for s in self.subjects if s.partition == partition]

    def partition_counts(self) -> tuple[int, int, int]:
        return tuple(len(self.by_partition(p)) for p in ("train", "dev", "test"))

    def subject(self, subject_id: str) -> SubjectEntry:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise ValidationError(f"unknown subject {subject_id!r}")
