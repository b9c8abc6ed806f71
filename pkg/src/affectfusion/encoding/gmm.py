"""Diagonal-covariance Gaussian mixtures fitted by EM from a k-means start."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from affectfusion.encoding.kmeans import KMeansModel
from affectfusion.encoding.modelio import check_doc, flat, unflat
from affectfusion.errors import NumericError, ValidationError

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    loglik_history: tuple = field(default=(), compare=False)
    n_iter: int = field(default=0, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim != 2 or var.shape != mu.shape or w.shape != (mu.shape[0],):
            raise ValidationError(
                f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"GMM weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if np.any(var <= 0) or not np.all(np.isfinite(var)) or not np.all(np.isfinite(mu)):
            raise ValidationError("GMM variances must be positive and all parameters finite")
        for name, a in (("weights", w), ("means", mu), ("variances", var)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def k(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "kind": "gmm",
            "k": self.k,
            "dim": self.dim,
            "n_iter": self.n_iter,
            "final_loglik": self.loglik_history[-1] if self.loglik_history else None,
            "weights": flat(self.weights),
            "means": flat(self.means),
            "variances": flat(self.variances),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GmmModel":
        check_doc(doc, "gmm")
        shape = (doc["k"], doc["dim"])
        return cls(
            unflat(doc["weights"], (doc["k"],)),
            unflat(doc["means"], shape),
            unflat(doc["variances"], shape),
            n_iter=int(doc.get("n_iter", 0)),
        )


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _check_data(model: GmmModel, data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValidationError(f"data dimension {x.shape[-1]} does not match GMM dimension {model.dim}")
    return x


def weighted_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(N, K) matrix of log w_k + log N(x_n | mu_k, diag var_k)."""
    n, d = x.shape
    k = model.k
    const = -0.5 * (d * _LOG_2PI + np.log(model.variances).sum(axis=1))
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    inv_var = 1.0 / model.variances
    out = np.empty((n, k))
    step = max(1, _CHUNK_ELEMS // max(1, k * d))
    for s in range(0, n, step):
        diff = x[s : s + step, None, :] - model.means[None, :, :]
        out[s : s + step] = -0.5 * np.einsum("nkd,kd->nk", diff * diff, inv_var)
    return out + const + logw


def responsibilities(model: GmmModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Posterior component probabilities (N, K) and per-point log density (N,)."""
    x = _check_data(model, data)
    lw = weighted_log_densities(model, x)
    lp = logsumexp(lw, axis=1)
    return np.exp(lw - lp[:, None]), lp


def gmm_loglik(model: GmmModel, data) -> float:
    """Mean per-point log density of ``data`` under the mixture."""
    _, lp = responsibilities(model, data)
    return float(lp.mean())


def init_stats_from_kmeans(data, init: KMeansModel, var_floor: float = VAR_FLOOR):
    """Hard-assignment statistics of the k-means partition.

    Weights are the fraction of points in each cluster; means and diagonal
    variances are the per-cluster sample statistics. Clusters left empty
    keep the k-means centroid, the global variance and a zero weight.
    """
    x = np.asarray(data, dtype=np.float64)
    labels, _ = init.assign(x)
    k = init.k
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    means = init.centroids.copy()
    global_var = np.maximum(x.var(axis=0), var_floor)
    variances = np.tile(global_var, (k, 1))
    for j in range(k):
        pts = x[labels == j]
        if len(pts):
            means[j] = pts.mean(axis=0)
            variances[j] = np.maximum(pts.var(axis=0), var_floor)
    return counts / counts.sum(), means, variances


def _reseed(x, lp, weights, means, variances, j, var_floor):
    worst = int(np.argmin(lp))
    means[j] = x[worst]
    variances[j] = np.maximum(x.var(axis=0), var_floor)
    weights[j] = 1.0 / len(x)
    weights /= weights.sum()


def gmm_fit_em(
    data,
    k: int,
    init: KMeansModel,
    max_iter: int = 100,
    tol: float = 1e-6,
    var_floor: float = VAR_FLOOR,
) -> GmmModel:
    """EM for a diagonal GMM initialised from a k-means partition.

    Iterates until the relative improvement of the mean log-likelihood falls
    below ``tol``. A component whose weight underflows to zero is re-seeded
    on the worst-explained point, once per component; a second collapse raises
    :class:`NumericError`.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValidationError(f"GMM data must be a non-empty N x D matrix, got shape {x.shape}")
    if init.k != k:
        raise ValidationError(f"k-means init has {init.k} centroids, expected {k}")
    if init.centroids.shape[1] != x.shape[1]:
        raise ValidationError("k-means init dimension does not match data")
    if not np.all(np.isfinite(x)):
        raise ValidationError("GMM data contains non-finite values")
    n = x.shape[0]
    weights, means, variances = init_stats_from_kmeans(x, init, var_floor)
    reseeded: set[int] = set()

    def collapse(j, lp):
        if j in reseeded:
            raise NumericError(f"GMM component {j} collapsed to zero weight after re-seeding")
        logger.warning("GMM component %d has zero weight; re-seeding", j)
        _reseed(x, lp, weights, means, variances, j, var_floor)
        reseeded.add(int(j))

    if np.any(weights == 0):
        lp0 = logsumexp(weighted_log_densities(
            GmmModel(np.full(k, 1.0 / k), means, variances), x), axis=1)
        for j in np.flatnonzero(weights == 0):
            collapse(j, lp0)

    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        model = GmmModel(weights, means, variances)
        lw = weighted_log_densities(model, x)
        lp = logsumexp(lw, axis=1)
        ll = float(lp.mean())
        history.append(ll)
        if len(history) > 1 and (ll - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        resp = np.exp(lw - lp[:, None])
        nk = resp.sum(axis=0)
        weights = nk / n
        dead = np.flatnonzero(nk <= np.finfo(np.float64).tiny * n)
        safe = np.where(nk > 0, nk, 1.0)
        means = (resp.T @ x) / safe[:, None]
        sq = np.empty_like(means)
        for j in range(k):
            diff = x - means[j]
            sq[j] = (resp[:, j] @ (diff * diff)) / safe[j]
        variances = np.maximum(sq, var_floor)
        weights = weights / weights.sum()
        for j in dead:
            collapse(j, lp)
    if not converged:
        history.append(gmm_loglik(GmmModel(weights, means, variances), x))
    logger.info("GMM k=%d: %d EM iterations, mean log-likelihood %.6f", k, it, history[-1])
    return GmmModel(weights, means, variances, tuple(history), it)
