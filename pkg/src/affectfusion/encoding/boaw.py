"""Bag-of-audio-words histograms over fixed-length blocks of LLD frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from affectfusion.data.types import FeatureTrack
from affectfusion.encoding.kmeans import sq_distances
from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import ValidationError


@dataclass(frozen=True)
class BoawCodebook:
    codewords: np.ndarray  # (W, L)
    block_size: float = 6.0

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        if cw.ndim != 2 or cw.shape[0] < 1:
            raise ValidationError("codebook needs at least one codeword")
        if not self.block_size > 0:
            raise ValidationError(f"block size must be positive, got {self.block_size}")
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self) -> int:
        return int(self.codewords.shape[0])

    def quantize(self, frames) -> np.ndarray:
        """Nearest codeword index per frame; ties go to the lowest index."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[-1] != self.codewords.shape[1]:
            raise ValidationError(
                f"LLD dimension {frames.shape[-1]} does not match codebook dimension {self.codewords.shape[1]}"
            )
        return np.argmin(sq_distances(frames, self.codewords), axis=1)

    def to_json(self) -> dict:
        w, l = self.codewords.shape
        return {
            "format_version": 1,
            "kind": "boaw-codebook",
            "size": int(w),
            "dim": int(l),
            "block_size": float(self.block_size),
            "codewords": flat(self.codewords),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "BoawCodebook":
        check_doc(doc, "boaw-codebook")
        return cls(unflat(doc["codewords"], (doc["size"], doc["dim"])), float(doc["block_size"]))


def block_centers(track: FeatureTrack, hop: float) -> np.ndarray:
    """Regular grid of window centres spanning the track, starting at its first frame."""
    if not hop > 0:
        raise ValidationError(f"hop must be positive, got {hop}")
    t0, t1 = track.timestamps[0], track.timestamps[-1]
    n = int(np.floor((t1 - t0) / hop + 1e-9)) + 1
    return t0 + hop * np.arange(n)


def boaw_encode(
    lld_track: FeatureTrack,
    codebook: BoawCodebook,
    centers=None,
    hop: float = 1.0,
    log_tf: bool = False,
) -> tuple[FeatureTrack, np.ndarray]:
    """Count histogram of codeword assignments in each block.

    A block covers ``[c - block_size/2, c + block_size/2)`` around each
    centre; centres default to a ``hop``-spaced grid over the track. Returns
    the histogram track and a boolean mask marking empty blocks (which
    yield zero histograms).
    """
    if len(lld_track) == 0:
        raise ValidationError("cannot encode an empty LLD track")
    centers = block_centers(lld_track, hop) if centers is None else np.asarray(centers, dtype=np.float64)
    words = codebook.quantize(lld_track.vectors)
    half = codebook.block_size / 2.0
    ts = lld_track.timestamps
    lo = np.searchsorted(ts, centers - half, side="left")
    hi = np.searchsorted(ts, centers + half, side="left")
    # prefix counts per codeword make each window O(W)
    onehot = np.zeros((len(words) + 1, codebook.size))
    onehot[np.arange(1, len(words) + 1), words] = 1.0
    prefix = np.cumsum(onehot, axis=0)
    hist = prefix[hi] - prefix[lo]
    empty = hi <= lo
    if log_tf:
        hist = np.log1p(hist)
    return FeatureTrack(centers, hist, lld_track.modality_id), empty
