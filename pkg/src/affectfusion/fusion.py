"""Late fusion of per-modality predictions by per-dimension convex weights."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from affectfusion import DIMENSIONS
from affectfusion.data.types import AnnotationTrack, PredictionTrack
from affectfusion.errors import ValidationError

MAX_GRID_POINTS = 200_000


@dataclass(frozen=True)
class FusionWeights:
    modalities: tuple[str, ...]
    weights: dict  # dimension -> (M,) array

    def __post_init__(self):
        m = len(self.modalities)
        if m < 1:
            raise ValidationError("fusion needs at least one modality")
        clean = {}
        for d in DIMENSIONS:
            if d not in self.weights:
                raise ValidationError(f"fusion weights missing dimension {d!r}")
            w = np.asarray(self.weights[d], dtype=np.float64)
            if w.shape != (m,):
                raise ValidationError(f"{d}: {w.size} weights for {m} modalities")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValidationError(f"{d}: weights must be non-negative and sum to 1")
            w.setflags(write=False)
            clean[d] = w
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "weights", clean)

    def to_json(self) -> dict:
        return {d: dict(zip(self.modalities, map(float, self.weights[d]))) for d in DIMENSIONS}

    @classmethod
    def from_json(cls, doc: dict) -> "FusionWeights":
        try:
            mods = tuple(doc[DIMENSIONS[0]].keys())
            return cls(mods, {d: [doc[d][m] for m in mods] for d in DIMENSIONS})
        except (KeyError, AttributeError, TypeError) as exc:
            raise ValidationError(f"malformed fusion weights: {exc}") from None

    @classmethod
    def uniform(cls, modalities) -> "FusionWeights":
        m = len(modalities)
        return cls(tuple(modalities), {d: np.full(m, 1.0 / m) for d in DIMENSIONS})


def fuse_predictions(tracks, w: FusionWeights) -> PredictionTrack:
    """Weighted sum of aligned prediction tracks, clamped to [-1, 1]."""
    tracks = list(tracks)
    if len(tracks) != len(w.modalities):
        raise ValidationError(f"{len(tracks)} tracks for {len(w.modalities)} fusion weights")
    ts = tracks[0].timestamps
    for t in tracks[1:]:
        if t.timestamps.shape != ts.shape or np.any(t.timestamps != ts):
            raise ValidationError("prediction tracks must share identical timestamps")
    stacked = np.stack([t.as_matrix() for t in tracks])  # (M, T, 3)
    out = np.empty(stacked.shape[1:])
    for j, d in enumerate(DIMENSIONS):
        out[:, j] = np.tensordot(w.weights[d], stacked[:, :, j], axes=1)
    return AnnotationTrack.from_matrix(ts, np.clip(out, -1.0, 1.0))


def simplex_grid(m: int, step: float = 0.05) -> np.ndarray:
    """All weight vectors of multiples of ``step`` summing to 1, in lexicographic order."""
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValidationError(f"step must divide 1 evenly, got {step}")
    if m < 1:
        raise ValidationError("need at least one modality")
    if comb(n + m - 1, m - 1) > MAX_GRID_POINTS:
        raise ValidationError(f"weight grid too large for {m} modalities at step {step}")

    def parts(remaining, slots):
        if slots == 1:
            yield (remaining,)
            return
        for first in range(remaining + 1):
            for rest in parts(remaining - first, slots - 1):
                yield (first,) + rest

    counts = np.array(list(parts(n, m)), dtype=np.float64)
    return counts / n


def _ccc_rows(fused: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """CCC of every row of ``fused`` against ``gold``, population moments."""
    mf = fused.mean(axis=1)
    mg = gold.mean()
    df = fused - mf[:, None]
    dg = gold - mg
    vf = np.mean(df * df, axis=1)
    vg = np.mean(dg * dg)
    cov = df @ dg / gold.size
    denom = vf + vg + (mf - mg) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, 2.0 * cov / denom, 0.0)
    return np.clip(out, -1.0, 1.0)


def search_weights(dev_tracks, gold: AnnotationTrack, step: float = 0.05,
                   modalities=None) -> tuple[FusionWeights, dict]:
    """Exhaustive simplex-grid search maximising dev CCC per dimension.

    Ties keep the lexicographically smallest weight vector. Returns the
    weights and the best fused CCC per dimension.
    """
    dev_tracks = list(dev_tracks)
    if not dev_tracks:
        raise ValidationError("weight search needs at least one modality")
    if len(gold) < 2:
        raise ValidationError("weight search needs at least two gold samples")
    for t in dev_tracks:
        if len(t) != len(gold):
            raise ValidationError("dev prediction tracks must be aligned to the gold track")
    modalities = tuple(modalities or (f"m{i}" for i in range(len(dev_tracks))))
    grid = simplex_grid(len(dev_tracks), step)
    best_w, best_score = {}, {}
    chunk = max(1, 2_000_000 // len(gold))
    for d in DIMENSIONS:
        preds = np.stack([t.dimension(d) for t in dev_tracks])  # (M, T)
        g = gold.dimension(d)
        scores = np.concatenate(
            [_ccc_rows(grid[s : s + chunk] @ preds, g) for s in range(0, len(grid), chunk)]
        )
        i = int(np.argmax(scores))  # first maximum is the lexicographically smallest
        best_w[d], best_score[d] = grid[i], float(scores[i])
    return FusionWeights(modalities, best_w), best_score
