from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import ValidationError

logger = logging.getLogger(__name__)

# eigenvalues below this fraction of the largest are treated as exactly zero
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (m, D), orthonormal rows
    eigenvalues: np.ndarray  # (m,), descending
    retained_ratio: float
    total_variance: float = 0.0

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def to_json(self) -> dict:
        m, d = self.components.shape
        return {
            "format_version": 1,
            "kind": "pca",
            "dim": int(d),
            "n_components": int(m),
            "retained_ratio": float(self.retained_ratio),
            "total_variance": float(self.total_variance),
            "mean": flat(self.mean),
            "components": flat(self.components),
            "eigenvalues": flat(self.eigenvalues),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PcaModel":
        check_doc(doc, "pca")
        m, d = doc["n_components"], doc["dim"]
        return cls(
            unflat(doc["mean"], (d,)),
            unflat(doc["components"], (m, d)),
            unflat(doc["eigenvalues"], (m,)),
            float(doc["retained_ratio"]),
            float(doc.get("total_variance", 0.0)),
        )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(data, variance_ratio: float = 0.99) -> PcaModel:
    """Principal components retaining at least ``variance_ratio`` of the variance.

    The covariance uses population normalisation. When there are fewer rows
    than columns the eigenpairs come from an SVD of the centred data instead
    of the D x D covariance matrix.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError(f"PCA needs at least 2 rows, got shape {x.shape}")
    if not 0.0 < variance_ratio <= 1.0:
        raise ValidationError(f"variance ratio must lie in (0, 1], got {variance_ratio}")
    n, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    if n < d:
        _, s, vt = np.linalg.svd(xc, full_matrices=False)
        evals, evecs = s * s / n, vt
    else:
        w, v = np.linalg.eigh(xc.T @ xc / n)
        order = np.argsort(w)[::-1]
        evals, evecs = w[order], v[:, order].T
    evals = np.maximum(evals, 0.0)
    if evals.size and evals[0] > 0:
        evals[evals < _RANK_RTOL * evals[0]] = 0.0
    cum = np.cumsum(evals)
    total = cum[-1] if cum.size else 0.0
    if total <= 0.0:
        m = 1
    else:
        m = int(np.searchsorted(cum, variance_ratio * total, side="left")) + 1
        m = min(m, int(np.count_nonzero(evals)))
    comps = _fix_signs(evecs[:m])
    ratio = float(cum[m - 1] / total) if total > 0 else 1.0
    logger.info("PCA: kept %d of %d components (%.4f of variance)", m, d, ratio)
    return PcaModel(mean, comps, evals[:m].copy(), ratio, float(total))


def pca_apply(model: PcaModel, v) -> np.ndarray:
    """Project a vector (or rows of a matrix) onto the retained components."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.mean.size:
        raise ValidationError(f"PCA input dimension {v.shape[-1]} does not match model dimension {model.mean.size}")
    return (v - model.mean) @ model.components.T
