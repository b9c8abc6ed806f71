"""Readers and writers for the on-disk formats.

Tracks are CSV with a header row whose first column is ``timestamp``.
Floats are written with ``repr`` so a write/read round trip is exact and
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from affectfusion.data.types import (
    AnnotationTrack,
    DescriptorSet,
    FeatureTrack,
    GrayImage,
    LandmarkFrame,
)
from affectfusion.errors import ValidationError

LABEL_COLUMNS = ("arousal", "valence", "liking")


def fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path}: empty CSV (header row required)")
    return [h.strip() for h in rows[0]], rows[1:]


def _to_matrix(path, header, rows) -> np.ndarray:
    try:
        m = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from None
    if rows and (m.ndim != 2 or m.shape[1] != len(header)):
        raise ValidationError(f"{path}: ragged rows (expected {len(header)} columns)")
    return m.reshape(len(rows), len(header))


def _write_csv(path, header, timestamps, matrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for t, row in zip(timestamps, matrix):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def read_feature_track(path, modality_id: str = "") -> FeatureTrack:
    header, rows = _read_rows(path)
    if header[0] != "timestamp":
        raise ValidationError(f"{path}: first column must be 'timestamp', got {header[0]!r}")
    m = _to_matrix(path, header, rows)
    if m.shape[0] == 0:
        raise ValidationError(f"{path}: track has no rows")
    try:
        return FeatureTrack(m[:, 0], m[:, 1:], modality_id)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_feature_track(path, track: FeatureTrack, names=None) -> None:
    names = names or [f"f{i + 1}" for i in range(track.dim)]
    _write_csv(path, ["timestamp", *names], track.timestamps, track.vectors)


def read_annotation_track(path) -> AnnotationTrack:
    header, rows = _read_rows(path)
    if tuple(header) != ("timestamp", *LABEL_COLUMNS):
        raise ValidationError(f"{path}: header must be timestamp,arousal,valence,liking")
    m = _to_matrix(path, header, rows)
    if m.shape[0] == 0:
        raise ValidationError(f"{path}: annotation track has no rows")
    try:
        return AnnotationTrack.from_matrix(m[:, 0], m[:, 1:])
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_annotation_track(path, track: AnnotationTrack) -> None:
    _write_csv(path, ["timestamp", *LABEL_COLUMNS], track.timestamps, track.as_matrix())


def read_landmarks(path) -> list[LandmarkFrame]:
    """CSV ``frame_index,x1,y1,...,xk,yk``; one row per frame."""
    header, rows = _read_rows(path)
    if header[0] != "frame_index" or (len(header) - 1) % 2:
        raise ValidationError(f"{path}: header must be frame_index,x1,y1,...,xk,yk")
    m = _to_matrix(path, header, rows)
    return [LandmarkFrame(int(r[0]), r[1:].reshape(-1, 2)) for r in m]


def read_descriptor_file(path) -> list[tuple[float, DescriptorSet]]:
    """CSV ``timestamp,response,d1,...,dD``; rows of one frame share a timestamp.

    Frames are returned in timestamp order, frame_index numbering them from 0.
    """
    header, rows = _read_rows(path)
    if header[:2] != ["timestamp", "response"] or len(header) < 3:
        raise ValidationError(f"{path}: header must be timestamp,response,d1,...,dD")
    m = _to_matrix(path, header, rows)
    if m.shape[0] == 0:
        raise ValidationError(f"{path}: no descriptors")
    frames = []
    ts = m[:, 0]
    for i, t in enumerate(np.unique(ts)):
        sel = m[ts == t]
        frames.append((float(t), DescriptorSet(sel[:, 2:], sel[:, 1], frame_index=i)))
    return frames


def write_descriptor_file(path, frames) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = frames[0][1].dim
    lines = [",".join(["timestamp", "response"] + [f"d{i + 1}" for i in range(dim)])]
    for t, ds in frames:
        for r, row in zip(ds.responses, ds.descriptors):
            lines.append(",".join([fmt(t), fmt(r)] + [fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def read_frame_list(path) -> list[tuple[float, Path]]:
    """CSV ``timestamp,image``; image paths are relative to the list file."""
    header, rows = _read_rows(path)
    if header[:2] != ["timestamp", "image"]:
        raise ValidationError(f"{path}: header must be timestamp,image")
    base = Path(path).parent
    out = []
    for r in rows:
        try:
            out.append((float(r[0]), base / r[1].strip()))
        except (ValueError, IndexError):
            raise ValidationError(f"{path}: malformed frame row {r!r}") from None
    return out


def read_pgm(path) -> GrayImage:
    """Binary 8-bit PGM (P5)."""
    data = Path(path).read_bytes() if Path(path).is_file() else None
    if data is None:
        raise ValidationError(f"image not found: {path}")
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValidationError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos) if len(data) - pos >= w * h else None
    if raw is None:
        raise ValidationError(f"{path}: pixel data truncated")
    return GrayImage(raw.reshape(h, w))


def write_pgm(path, img: GrayImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{img.width} {img.height}\n255\n".encode()
    path.write_bytes(header + img.pixels.tobytes())


def write_json(path, obj) -> None:
    """Deterministic JSON (sorted keys, fixed indent, trailing newline)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None


def relpath_or_abs(p: str, base) -> str:
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(str(base), p))
