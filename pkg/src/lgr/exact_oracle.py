"""Exact Bayesian linear regression with localized features.

These routines are O(F^3) in the number of stacked features and are meant as
ground truth for the variational engine on small problems, not for fitting.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import UsageError
from .features import features_batch
from .linalg import cho_factor_spd, spd_inverse, symmetrize


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray


def _prior(prior_mean, prior_cov, F):
    prior_cov = np.asarray(prior_cov, dtype=float)
    if prior_cov.shape != (F, F):
        raise UsageError(f"prior covariance must be {F}x{F}, got {prior_cov.shape}")
    prior_mean = np.zeros(F) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    if prior_mean.shape != (F,):
        raise UsageError(f"prior mean must have length {F}")
    return prior_mean, prior_cov


def exact_posterior(features, y, prior_cov, beta, prior_mean=None):
    """Posterior over the weights of ``y = features @ w + noise``.

    Parameters
    ----------
    features : (N, F) array
    y : (N,) array
    prior_cov : (F, F) SPD array
    beta : float
        Noise precision.
    prior_mean : (F,) array, optional
        Defaults to zero.

    Returns
    -------
    GaussianPosterior
        ``cov = (S0^-1 + beta Phi^T Phi)^-1``,
        ``mean = cov (S0^-1 m0 + beta Phi^T y)``.
    """
    Phi = np.asarray(features, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if Phi.ndim != 2 or Phi.shape[0] != y.size:
        raise UsageError(f"features {Phi.shape} do not match {y.size} targets")
    if not beta > 0:
        raise UsageError("beta must be positive")
    F = Phi.shape[1]
    m0, S0 = _prior(prior_mean, prior_cov, F)

    S0_factor = cho_factor_spd(S0, "prior covariance")
    S0_inv = symmetrize(scipy.linalg.cho_solve(S0_factor, np.eye(F)))
    cov = spd_inverse(S0_inv + beta * Phi.T @ Phi, "posterior precision")
    mean = cov @ (S0_inv @ m0 + beta * Phi.T @ y)
    return GaussianPosterior(mean=mean, covariance=cov)


def exact_predict(posterior, phi_star, beta=None):
    """Predictive mean and variance at feature vector ``phi_star``.

    The variance is that of the latent function unless ``beta`` is given, in
    which case the observation noise ``1/beta`` is added.
    """
    phi_star = np.asarray(phi_star, dtype=float).reshape(-1)
    if phi_star.size != posterior.mean.size:
        raise UsageError(f"phi_star has {phi_star.size} entries, posterior {posterior.mean.size}")
    mean = float(phi_star @ posterior.mean)
    var = float(phi_star @ posterior.covariance @ phi_star)
    if beta is not None:
        var += 1.0 / beta
    return mean, var


def exact_log_evidence(features, y, prior_cov, beta, prior_mean=None):
    """log N(y; Phi m0, Phi S0 Phi^T + I/beta), the normalizer of the posterior."""
    Phi = np.asarray(features, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    N, F = Phi.shape
    m0, S0 = _prior(prior_mean, prior_cov, F)
    C = Phi @ S0 @ Phi.T + np.eye(N) / beta
    c, lower = cho_factor_spd(C, "marginal covariance")
    r = y - Phi @ m0
    alpha = scipy.linalg.cho_solve((c, lower), r)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * r @ alpha - 0.5 * logdet - 0.5 * N * np.log(2 * np.pi))


def stacked_features(X, centers, log_lambdas):
    """Feature matrix (N, M*K) with model-major column blocks."""
    phi = features_batch(np.asarray(X, float), np.asarray(centers, float), np.asarray(log_lambdas, float))
    M, N, K = phi.shape
    return np.transpose(phi, (1, 0, 2)).reshape(N, M * K)


def coupled_weight_optimum(X, y, centers, log_lambdas, alpha, beta_y, beta_f):
    """Joint solve for the fixed point of the variational weight means.

    Substituting the latent-target means into the weight-mean update gives,
    for every model m,

        A_m mu_m + beta_fm g_m Phi_m^T sum_j Phi_j mu_j = beta_fm g_m Phi_m^T y

    with ``g_m = beta_fm^-1 / (beta_y^-1 + sum_j beta_fj^-1)``. The blocks are
    assembled into one (MK, MK) system and solved densely.

    Returns
    -------
    (M*K,) array of stacked weight means, model-major.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float)
    beta_f = np.asarray(beta_f, dtype=float).reshape(-1)
    M, K = alpha.shape
    if M < 1:
        raise UsageError("need at least one local model")
    if np.any(alpha <= 0) or np.any(beta_f <= 0) or not beta_y > 0:
        raise UsageError("all precisions must be positive")

    phi = features_batch(X, np.asarray(centers, float), np.asarray(log_lambdas, float))
    b_inv = 1.0 / beta_f
    denom = 1.0 / beta_y + b_inv.sum()
    gain = beta_f * (b_inv / denom)

    lhs = np.zeros((M * K, M * K))
    rhs = np.zeros(M * K)
    for m in range(M):
        rows = slice(m * K, (m + 1) * K)
        for j in range(M):
            cols = slice(j * K, (j + 1) * K)
            lhs[rows, cols] = gain[m] * phi[m].T @ phi[j]
        lhs[rows, rows] += np.diag(alpha[m])
        rhs[rows] = gain[m] * phi[m].T @ y
    # gain is the same for every model, so the system is symmetric
    c, lower = cho_factor_spd(lhs, "coupled weight system")
    return scipy.linalg.cho_solve((c, lower), rhs)
