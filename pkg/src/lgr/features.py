"""RBF localizers and localized linear features.

A local model m is described by a center ``c`` (D,) and log length-scales
``log_lambda`` (D,), one per input dimension. Its localizer is

    eta(x) = exp(-0.5 * sum_d (x_d - c_d)**2 / lambda_d**2)

and its feature vector is ``eta(x) * [1, x_1 - c_1, ..., x_D - c_D]`` (K = D + 1).

The scalar functions validate their arguments; the batched ``*_batch`` helpers
assume validated arrays and are what the fitting code calls in its inner loops.
"""

import numpy as np

from .errors import UsageError

EXPONENT_CLAMP = -700.0
FLUSH_BELOW = 1e-300


def _check_vectors(x, center, log_lambda):
    x = np.asarray(x, dtype=float).reshape(-1)
    center = np.asarray(center, dtype=float).reshape(-1)
    log_lambda = np.asarray(log_lambda, dtype=float).reshape(-1)
    if not (x.shape == center.shape == log_lambda.shape):
        raise UsageError(
            f"dimension mismatch: x has {x.size}, center {center.size}, "
            f"log_lambda {log_lambda.size} entries"
        )
    if x.size == 0:
        raise UsageError("inputs must have at least one dimension")
    for name, arr in (("x", x), ("center", center), ("log_lambda", log_lambda)):
        if not np.all(np.isfinite(arr)):
            raise UsageError(f"{name} contains non-finite values")
    return x, center, log_lambda


def _eta_from_exponent(expo):
    eta = np.exp(np.maximum(expo, EXPONENT_CLAMP))
    return np.where(eta < FLUSH_BELOW, 0.0, eta)


def rbf_weight(x, center, log_lambda):
    """Unnormalized RBF localizer of one local model, a value in (0, 1]."""
    x, center, log_lambda = _check_vectors(x, center, log_lambda)
    z = (x - center) * np.exp(-log_lambda)
    return float(_eta_from_exponent(-0.5 * np.dot(z, z)))


def local_features(x, center, log_lambda):
    """Localized feature vector ``eta(x) * [1, x - c]`` of length D + 1."""
    x, center, log_lambda = _check_vectors(x, center, log_lambda)
    eta = rbf_weight(x, center, log_lambda)
    return eta * np.concatenate(([1.0], x - center))


def dphi_dlog_lambda(x, center, log_lambda, d):
    """Derivative of :func:`local_features` with respect to ``log_lambda[d]``.

    The length-scale only enters through the localizer, so every entry is the
    feature vector scaled by ``(x_d - c_d)**2 / lambda_d**2``.
    """
    x, center, log_lambda = _check_vectors(x, center, log_lambda)
    if not isinstance(d, (int, np.integer)) or not 0 <= d < x.size:
        raise UsageError(f"dimension index {d!r} out of range for D={x.size}")
    factor = ((x[d] - center[d]) * np.exp(-log_lambda[d])) ** 2
    return local_features(x, center, log_lambda) * factor


def scaled_offsets_batch(X, centers, log_lambdas):
    """``(x_n - c_m) / lambda_m`` for all pairs, shape (M, N, D)."""
    return (X[None, :, :] - centers[:, None, :]) * np.exp(-log_lambdas)[:, None, :]


def localizer_batch(X, centers, log_lambdas):
    """Localizer values for every (model, datum) pair, shape (M, N)."""
    z = scaled_offsets_batch(X, centers, log_lambdas)
    return _eta_from_exponent(-0.5 * np.einsum("mnd,mnd->mn", z, z))


def features_batch(X, centers, log_lambdas):
    """Localized features for every (model, datum) pair, shape (M, N, D + 1)."""
    M, N = centers.shape[0], X.shape[0]
    eta = localizer_batch(X, centers, log_lambdas)
    phi = np.empty((M, N, X.shape[1] + 1))
    phi[:, :, 0] = eta
    phi[:, :, 1:] = (X[None, :, :] - centers[:, None, :]) * eta[:, :, None]
    return phi


def log_lambda_factors_batch(X, centers, log_lambdas):
    """Per-dimension factors ``(x_d - c_d)**2 / lambda_d**2``, shape (M, N, D).

    ``dphi/dlog_lambda_d = phi * factor[..., d]``.
    """
    return scaled_offsets_batch(X, centers, log_lambdas) ** 2
