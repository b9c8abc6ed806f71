"""Fisher vector encoding of descriptor sets under a diagonal GMM."""

from __future__ import annotations

import numpy as np

from affectfusion.data.types import DescriptorSet
from affectfusion.encoding.gmm import GmmModel, responsibilities
from affectfusion.errors import ValidationError


def fisher_encode(model: GmmModel, d: DescriptorSet | np.ndarray) -> np.ndarray:
    """Unnormalised Fisher vector of length ``2 * K * D``.

    The first ``K * D`` entries are the mean gradients and the remaining
    ``K * D`` the standard-deviation gradients, each laid out component-major.
    Per component k and dimension d, with posteriors ``g`` and
    ``u = (x - mu) / sigma``::

        G_mu    = sum_t g_t(k) * u_t           / (T * sqrt(w_k))
        G_sigma = sum_t g_t(k) * (u_t**2 - 1)  / (T * sqrt(2 * w_k))
    """
    x = d.descriptors if isinstance(d, DescriptorSet) else np.asarray(d, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("Fisher encoding needs a non-empty descriptor set")
    if x.shape[1] != model.dim:
        raise ValidationError(f"descriptor dimension {x.shape[1]} does not match GMM dimension {model.dim}")
    t = x.shape[0]
    gamma, _ = responsibilities(model, x)  # (T, K)
    sigma = np.sqrt(model.variances)
    g_mu = np.empty((model.k, model.dim))
    g_sigma = np.empty((model.k, model.dim))
    for k in range(model.k):
        u = (x - model.means[k]) / sigma[k]
        g_mu[k] = gamma[:, k] @ u
        g_sigma[k] = gamma[:, k] @ (u * u - 1.0)
    # guard against components with zero weight
    w = np.where(model.weights > 0, model.weights, np.inf)
    g_mu /= (t * np.sqrt(w))[:, None]
    g_sigma /= (t * np.sqrt(2.0 * w))[:, None]
    return np.concatenate([g_mu.ravel(), g_sigma.ravel()])


def fv_normalize(v, power: float = 0.5) -> np.ndarray:
    """Signed power transform followed by L2 normalisation."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot normalise a non-finite vector")
    out = np.sign(v) * np.abs(v) ** power
    norm = np.linalg.norm(out)
    return out / norm if norm > 0 else np.zeros_like(out)
