from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray  # (K, D)
    inertia: float
    n_iter: int = 0
    inertia_history: tuple = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def assign(self, data) -> tuple[np.ndarray, np.ndarray]:
        """Nearest centroid per row (ties to lowest index) and squared distance."""
        d2 = sq_distances(np.asarray(data, dtype=np.float64), self.centroids)
        labels = np.argmin(d2, axis=1)
        return labels, d2[np.arange(len(labels)), labels]

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "kind": "kmeans",
            "k": self.k,
            "dim": int(self.centroids.shape[1]),
            "inertia": float(self.inertia),
            "n_iter": self.n_iter,
            "centroids": flat(self.centroids),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "KMeansModel":
        check_doc(doc, "kmeans")
        c = unflat(doc["centroids"], (doc["k"], doc["dim"]))
        return cls(c, float(doc["inertia"]), int(doc.get("n_iter", 0)))


def sq_distances(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """(N, K) squared Euclidean distances, clipped at 0."""
    d2 = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = sq_distances(data, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # fewer distinct points than k; duplicates are re-seeded during Lloyd
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = data[idx]
        closest = np.minimum(closest, sq_distances(data, centers[i : i + 1])[:, 0])
    return centers


def kmeans_fit(data, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-7) -> KMeansModel:
    """Lloyd's algorithm from k-means++ seeding.

    Stops when the relative inertia improvement drops below ``tol``. A
    cluster that loses all its points is moved onto the point currently
    farthest from its centroid.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"k-means data must be N x D, got shape {x.shape}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ValidationError(f"k-means needs N >= k (N={x.shape[0]}, k={k})")
    if not np.all(np.isfinite(x)):
        raise ValidationError("k-means data contains non-finite values")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, k, rng)
    history: list[float] = []
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        d2 = sq_distances(x, centroids)
        labels = np.argmin(d2, axis=1)
        diff = x - centroids[labels]
        dist = np.einsum("ij,ij->i", diff, diff)
        inertia = float(dist.sum())
        history.append(inertia)
        if len(history) > 1:
            prev = history[-2]
            if prev <= 0.0 or (prev - inertia) / prev < tol:
                converged = True
                break
        if inertia == 0.0:
            converged = True
            break
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        new = centroids.copy()
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(dist))
            logger.debug("k-means: re-seeding empty cluster %d at point %d", j, far)
            new[j] = x[far]
            dist[far] = -1.0
        centroids = new
    if not converged:
        labels = np.argmin(sq_distances(x, centroids), axis=1)
        diff = x - centroids[labels]
        history.append(float(np.einsum("ij,ij->", diff, diff)))
    logger.info("k-means k=%d converged after %d iterations, inertia %.6g", k, it, history[-1])
    return KMeansModel(centroids, history[-1], it, tuple(history))
