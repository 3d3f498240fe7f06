"""Locally weighted regression baseline.

Each local model is a linear model around its center fitted by
localizer-weighted ridge regression, independently of all other models.
Predictions blend the local predictions with normalized localizer weights.
Length-scales are fixed; there is no length-scale adaptation.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, UsageError
from .features import localizer_batch, scaled_offsets_batch

DEFAULT_RIDGE = 1e-6
NORMALIZER_EPS = 1e-12


@dataclass
class LWRModel:
    centers: np.ndarray
    scales: np.ndarray
    weights: np.ndarray
    ridge: float = DEFAULT_RIDGE

    @property
    def n_models(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def local_predictions(self, X):
        """Unblended prediction of every local model, shape (M, N)."""
        offsets = X[None, :, :] - self.centers[:, None, :]
        return self.weights[:, :1] + np.einsum("mnd,md->mn", offsets, self.weights[:, 1:])


def _broadcast_scales(scales, centers):
    scales = np.asarray(scales, dtype=float)
    scales = np.broadcast_to(scales, centers.shape).copy()
    if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
        raise UsageError("length-scales must be positive and finite")
    return scales


def lwr_fit(dataset, centers, scales, ridge=DEFAULT_RIDGE, chunk_bytes=128 * 2**20):
    """Fit every local model by weighted ridge regression over all data.

    Model m solves ``min_w sum_n eta_m(x_n) (y_n - xi_m(x_n) w)^2 + ridge |w|^2``
    with ``xi_m(x) = [1, x - c_m]``.
    """
    X, y = dataset.inputs, dataset.targets
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] < 1:
        raise UsageError("need at least one center")
    if centers.shape[1] != X.shape[1]:
        raise UsageError(f"centers have {centers.shape[1]} columns, data has {X.shape[1]}")
    if ridge < 0:
        raise UsageError("ridge must be non-negative")
    scales = _broadcast_scales(scales, centers)
    log_scales = np.log(scales)
    M, D = centers.shape
    K = D + 1
    N = X.shape[0]

    weights = np.empty((M, K))
    step = max(1, int(chunk_bytes // (8 * N * (K + D + 1))))
    for s in range(0, M, step):
        sl = slice(s, min(s + step, M))
        eta = localizer_batch(X, centers[sl], log_scales[sl])
        xi = np.ones((eta.shape[0], N, K))
        xi[:, :, 1:] = X[None, :, :] - centers[sl, None, :]
        weighted = xi * eta[:, :, None]
        gram = np.swapaxes(weighted, 1, 2) @ xi + ridge * np.eye(K)
        rhs = np.einsum("mnk,n->mk", weighted, y)
        try:
            weights[sl] = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            for m in range(gram.shape[0]):
                try:
                    weights[s + m] = np.linalg.solve(gram[m], rhs[m])
                except np.linalg.LinAlgError:
                    raise NumericalError(f"weighted normal equations of local model {s + m} are singular") from None
    return LWRModel(centers.copy(), scales, weights, float(ridge))


def lwr_predict_batch(model, X):
    """Normalized blend of local predictions.

    Returns ``(means, fallback)``; ``fallback[n]`` is True where every
    localizer was below the guard and the nearest center's model was used.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == model.dim else X[:, None]
    if X.shape[1] != model.dim:
        raise UsageError(f"inputs have {X.shape[1]} columns, model expects {model.dim}")
    log_scales = np.log(model.scales)
    eta = localizer_batch(X, model.centers, log_scales)
    local = model.local_predictions(X)
    total = eta.sum(axis=0)
    fallback = total < NORMALIZER_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.sum(eta * local, axis=0) / total
    if fallback.any():
        z = scaled_offsets_batch(X[fallback], model.centers, log_scales)
        nearest = np.argmin(np.einsum("mnd,mnd->mn", z, z), axis=0)
        means[fallback] = local[nearest, np.flatnonzero(fallback)]
        warnings.warn(f"{int(fallback.sum())} inputs are outside every receptive field; "
                      "using the nearest local model", RuntimeWarning, stacklevel=2)
    return means, fallback


def lwr_predict(model, x):
    means, fallback = lwr_predict_batch(model, np.asarray(x, dtype=float).reshape(1, -1))
    return float(means[0]), bool(fallback[0])


def lwr_place_centers(dataset, w_gen, lambda_init):
    """Greedy placement in data order: a point becomes a center when every
    existing localizer (at the fixed ``lambda_init``) is below ``w_gen`` there."""
    if not 0 < w_gen <= 1:
        raise UsageError("w_gen must satisfy 0 < w_gen <= 1")
    X = dataset.inputs
    inv_scale = 1.0 / np.broadcast_to(np.asarray(lambda_init, dtype=float), (X.shape[1],))
    # eta < w_gen  <=>  squared scaled distance > -2 log w_gen
    limit = -2.0 * np.log(w_gen)
    Z = X * inv_scale
    chosen = np.empty(X.shape[0], dtype=int)
    count = 0
    for n in range(X.shape[0]):
        if count and not np.all(np.sum((Z[chosen[:count]] - Z[n]) ** 2, axis=1) > limit):
            continue
        chosen[count] = n
        count += 1
    return X[chosen[:count]].copy()
