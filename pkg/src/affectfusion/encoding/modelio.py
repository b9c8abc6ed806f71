"""Shared helpers for the JSON model files (flat row-major arrays)."""

from __future__ import annotations

import numpy as np

from affectfusion.errors import ValidationError

FORMAT_VERSION = 1


def flat(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def unflat(values, shape) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if arr.size != int(np.prod(shape)):
        raise ValidationError(f"model array has {arr.size} values, expected shape {shape}")
    return arr.reshape(shape)


def check_doc(doc, kind: str) -> None:
    if not isinstance(doc, dict):
        raise ValidationError(f"{kind} model file must hold a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"{kind} model: unsupported format_version {doc.get('format_version')!r}")
    if doc.get("kind") != kind:
        raise ValidationError(f"expected a {kind} model file, got kind {doc.get('kind')!r}")
