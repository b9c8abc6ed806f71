from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import ValidationError

CONSTANT_STD = 1e-12


@dataclass(frozen=True)
class StandardizerModel:
    mean: np.ndarray
    std: np.ndarray  # population standard deviation

    @property
    def constant(self) -> np.ndarray:
        return self.std < CONSTANT_STD

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "kind": "standardizer",
            "dim": int(self.mean.size),
            "mean": flat(self.mean),
            "std": flat(self.std),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StandardizerModel":
        check_doc(doc, "standardizer")
        d = doc["dim"]
        return cls(unflat(doc["mean"], (d,)), unflat(doc["std"], (d,)))


def standardize_fit(data) -> StandardizerModel:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValidationError(f"standardizer needs an N x F matrix, got shape {x.shape}")
    return StandardizerModel(x.mean(axis=0), x.std(axis=0))


def standardize_apply(model: StandardizerModel, data) -> np.ndarray:
    """z-score each feature; constant features map to 0."""
    x = np.asarray(data, dtype=np.float64)
    if x.shape[-1] != model.mean.size:
        raise ValidationError(f"standardizer expects {model.mean.size} features, got {x.shape[-1]}")
    scale = np.where(model.constant, 1.0, model.std)
    return np.where(model.constant, 0.0, (x - model.mean) / scale)
