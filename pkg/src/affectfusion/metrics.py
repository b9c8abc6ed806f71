"""Agreement metrics between predicted and gold emotion traces.

All moments use population normalisation (divide by N), which makes
``ccc = 2 cov / (var_x + var_y + (mean_x - mean_y)**2)`` hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from affectfusion import DIMENSIONS
from affectfusion.data.align import nearest_indices
from affectfusion.data.types import AnnotationTrack
from affectfusion.errors import ValidationError


def _pair(x, y, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise ValidationError(f"need at least {min_len} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite value in metric input")
    return x, y


def ccc(x, y) -> float:
    """Concordance correlation coefficient.

    Returns 0 when both inputs are constant with equal value (0/0).
    """
    x, y = _pair(x, y, 2)
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cov = np.mean(dx * dy)
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return 0.0
    return float(np.clip(2.0 * cov / denom, -1.0, 1.0))


def pearson(x, y) -> float:
    """Product-moment correlation; 0 if either input is constant."""
    x, y = _pair(x, y, 2)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.mean(dx * dx)), np.sqrt(np.mean(dy * dy))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.clip(np.mean(dx * dy) / (sx * sy), -1.0, 1.0))


def rmse(x, y) -> float:
    x, y = _pair(x, y, 1)
    return float(np.sqrt(np.mean((x - y) ** 2)))


@dataclass(frozen=True)
class DimensionScore:
    ccc: float
    pearson: float
    rmse: float


@dataclass(frozen=True)
class ScoreReport:
    scores: dict  # dimension name -> DimensionScore
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "dimensions": {
                d: {"ccc": s.ccc, "pearson": s.pearson, "rmse": s.rmse}
                for d, s in self.scores.items()
            },
        }

    def csv_lines(self) -> list[str]:
        """Fixed-order ``dimension,ccc,pearson,rmse,n`` lines, header first."""
        out = ["dimension,ccc,pearson,rmse,n"]
        for d in DIMENSIONS:
            s = self.scores[d]
            out.append(f"{d},{s.ccc!r},{s.pearson!r},{s.rmse!r},{self.n}")
        return out


def score_arrays(gold: np.ndarray, pred: np.ndarray) -> ScoreReport:
    """Score two (T, 3) matrices column by column."""
    gold = np.asarray(gold, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gold.shape != pred.shape or gold.ndim != 2 or gold.shape[1] != 3:
        raise ValidationError(f"score shapes differ: {gold.shape} vs {pred.shape}")
    scores = {
        d: DimensionScore(ccc(pred[:, i], gold[:, i]), pearson(pred[:, i], gold[:, i]),
                          rmse(pred[:, i], gold[:, i]))
        for i, d in enumerate(DIMENSIONS)
    }
    return ScoreReport(scores, int(gold.shape[0]))


def score_tracks(pairs) -> ScoreReport:
    """Pool (gold, prediction) track pairs and score the concatenation.

    Each prediction track is resampled onto its gold timestamps by nearest
    neighbour before pooling.
    """
    golds, preds = [], []
    for gold, pred in pairs:
        gold: AnnotationTrack
        idx = nearest_indices(pred.timestamps, gold.timestamps)
        golds.append(gold.as_matrix())
        preds.append(pred.as_matrix()[idx])
    if not golds:
        raise ValidationError("nothing to score")
    return score_arrays(np.vstack(golds), np.vstack(preds))
