"""Temporal alignment of feature tracks to label grids, and label clamping."""

from __future__ import annotations

import logging

import numpy as np

from affectfusion.data.types import AnnotationTrack, FeatureTrack
from affectfusion.errors import ValidationError

logger = logging.getLogger(__name__)


def nearest_indices(source_ts, target_ts) -> np.ndarray:
    """Index into ``source_ts`` of the nearest sample for each target time.

    Ties (equal distance) resolve to the earlier source sample.
    """
    source_ts = np.asarray(source_ts, dtype=np.float64)
    target_ts = np.asarray(target_ts, dtype=np.float64)
    if source_ts.size == 0 or target_ts.size == 0:
        raise ValidationError("cannot align empty timestamp sequences")
    right = np.searchsorted(source_ts, target_ts, side="left").clip(0, source_ts.size - 1)
    left = (right - 1).clip(0, source_ts.size - 1)
    take_right = np.abs(source_ts[right] - target_ts) < np.abs(target_ts - source_ts[left])
    idx = np.where(take_right, right, left)
    # distances can round to equal across several samples; walk back to the earliest
    while True:
        prev = np.maximum(idx - 1, 0)
        step = (idx > 0) & (np.abs(source_ts[prev] - target_ts) == np.abs(source_ts[idx] - target_ts))
        if not step.any():
            return idx
        idx = np.where(step, prev, idx)


def align_track(features: FeatureTrack, label_timestamps) -> FeatureTrack:
    """Resample ``features`` onto ``label_timestamps`` by nearest neighbour."""
    label_timestamps = np.asarray(label_timestamps, dtype=np.float64)
    if len(features) == 0:
        raise ValidationError(f"track {features.modality_id!r} is empty")
    idx = nearest_indices(features.timestamps, label_timestamps)
    return FeatureTrack(label_timestamps, features.vectors[idx], features.modality_id)


def clamp_labels(track: AnnotationTrack) -> tuple[AnnotationTrack, int]:
    """Saturate every label value into [-1, 1].

    Returns the clamped track and the number of entries that were changed.
    """
    m = track.as_matrix()
    if not np.all(np.isfinite(m)):
        raise ValidationError("annotation track contains a non-finite label value")
    clamped = np.clip(m, -1.0, 1.0)
    n = int(np.count_nonzero(clamped != m))
    if n:
        logger.info("clamped %d label value(s) into [-1, 1]", n)
    return AnnotationTrack.from_matrix(track.timestamps, clamped), n
