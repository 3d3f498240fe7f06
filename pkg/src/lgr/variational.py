"""Factorized variational EM for local Gaussian regression.

Notation used throughout (arrays are stacked over local models):

    phi      (M, N, K)  localized features of every model at every datum
    mu_f     (N, M)     latent target means
    weights  mean (M, K), cov (M, K, K)
    beta_y   scalar observation precision
    beta_f   (M,)       per-model latent precisions
    alpha    (M, K)     ARD precisions

The latent covariance is shared by all data points and is never stored as an
M x M matrix: with ``b_inv = 1/beta_f`` and ``denom = 1/beta_y + sum(b_inv)``,

    Sigma_f = diag(b_inv) - outer(b_inv, b_inv) / denom.

Every update below is an exact coordinate-wise maximizer of :func:`elbo`, so
a sweep never decreases the bound (the length-scale gradient step excepted).
"""

from dataclasses import dataclass, replace

import numpy as np

from .features import features_batch, log_lambda_factors_batch
from .linalg import spd_inverse_batch

LOG_2PI = np.log(2 * np.pi)

VAR_FLOOR = 1e-10
ALPHA_MAX = 1e6
LAMBDA_MIN = 1e-3
LAMBDA_MAX = 1e3


@dataclass
class WeightPosteriors:
    mean: np.ndarray
    cov: np.ndarray
    logdet: np.ndarray = None

    def __post_init__(self):
        if self.logdet is None:
            self.logdet = np.linalg.slogdet(self.cov)[1]

    def take(self, idx):
        return WeightPosteriors(self.mean[idx], self.cov[idx], self.logdet[idx])


@dataclass
class LatentTargets:
    mu_f: np.ndarray
    b_inv: np.ndarray
    denom: float
    noise_var: float

    @property
    def sigma_f_diag(self):
        return self.b_inv * (self.denom - self.b_inv) / self.denom

    @property
    def sum_sigma_f(self):
        """``1^T Sigma_f 1`` in O(M)."""
        S = self.b_inv.sum()
        return S * self.noise_var / self.denom

    @property
    def logdet_sigma_f(self):
        return float(np.sum(np.log(self.b_inv)) + np.log(self.noise_var / self.denom))

    def sigma_f(self):
        """Dense M x M latent covariance; only for tests and diagnostics."""
        return np.diag(self.b_inv) - np.outer(self.b_inv, self.b_inv) / self.denom

    def take(self, idx):
        return replace(self, mu_f=self.mu_f[:, idx], b_inv=self.b_inv[idx])


@dataclass
class Precisions:
    beta_y: float
    beta_f: np.ndarray
    alpha: np.ndarray

    def copy(self):
        return Precisions(float(self.beta_y), self.beta_f.copy(), self.alpha.copy())


def model_predictions(phi, mean):
    """``mu_wm^T phi_m(x_n)`` for every datum and model, shape (N, M)."""
    return np.einsum("mnk,mk->nm", phi, mean)


def _quad_forms(phi, cov):
    """``phi_m(x_n)^T Sigma_wm phi_m(x_n)``, shape (M, N)."""
    return np.einsum("mnk,mnk->mn", phi @ cov, phi)


def prior_weights(alpha):
    """Weight posteriors equal to the ARD prior, used for freshly placed models."""
    alpha = np.asarray(alpha, dtype=float)
    M, K = alpha.shape
    cov = np.zeros((M, K, K))
    idx = np.arange(K)
    cov[:, idx, idx] = 1.0 / alpha
    return WeightPosteriors(np.zeros((M, K)), cov, -np.log(alpha).sum(axis=1))


def e_step_weights(phi, latents, prec):
    """Gaussian posteriors of the local weights given the latent targets.

    ``Sigma_wm = (beta_fm Phi_m^T Phi_m + A_m)^-1`` and
    ``mu_wm = beta_fm Sigma_wm Phi_m^T E[f_m]``, each model independently.
    """
    M, N, K = phi.shape
    precision = prec.beta_f[:, None, None] * (np.swapaxes(phi, 1, 2) @ phi)
    idx = np.arange(K)
    precision[:, idx, idx] += prec.alpha
    cov, logdet = spd_inverse_batch(precision, "weight precision")
    proj = np.einsum("mnk,nm->mk", phi, latents.mu_f)
    mean = prec.beta_f[:, None] * np.einsum("mkl,ml->mk", cov, proj)
    return WeightPosteriors(mean, cov, logdet)


def e_step_latents(y, phi, weights, prec):
    """Gaussian posterior of the per-model latent targets.

    The residual of the summed model prediction is shared out among the models
    in proportion to their latent variances ``1/beta_fm``.
    """
    pred = model_predictions(phi, weights.mean)
    b_inv = 1.0 / np.asarray(prec.beta_f, dtype=float)
    noise_var = 1.0 / prec.beta_y
    denom = noise_var + b_inv.sum()
    resid = y - pred.sum(axis=1)
    mu_f = pred + np.outer(resid, b_inv / denom)
    return LatentTargets(mu_f=mu_f, b_inv=b_inv, denom=float(denom), noise_var=float(noise_var))


def m_step_beta_y(y, latents, var_floor=VAR_FLOOR):
    resid = y - latents.mu_f.sum(axis=1)
    var = np.mean(resid**2) + latents.sum_sigma_f
    return 1.0 / max(var, var_floor)


def m_step_beta_f(phi, weights, latents, var_floor=VAR_FLOOR):
    """Closed-form latent precisions for all models, shape (M,)."""
    resid = latents.mu_f - model_predictions(phi, weights.mean)
    spread = np.mean(resid**2, axis=0) + np.mean(_quad_forms(phi, weights.cov), axis=1)
    var = spread + latents.sigma_f_diag
    return 1.0 / np.maximum(var, var_floor)


def m_step_alpha(weights, alpha_max=ALPHA_MAX):
    second_moment = weights.mean**2 + np.diagonal(weights.cov, axis1=1, axis2=2)
    with np.errstate(divide="ignore"):
        alpha = 1.0 / second_moment
    return np.minimum(alpha, alpha_max)


def lambda_gradient(X, centers, log_lambdas, weights, latents, beta_f, phi=None):
    """Gradient of each model's expected latent log-likelihood w.r.t. its log length-scales.

    Only model m's own term depends on its scales, so row m of the result is
    unaffected by the scales of any other model. Shape (M, D).
    """
    if phi is None:
        phi = features_batch(X, centers, log_lambdas)
    pred = model_predictions(phi, weights.mean).T
    resid = latents.mu_f.T - pred
    sens = resid * pred - _quad_forms(phi, weights.cov)
    factors = log_lambda_factors_batch(X, centers, log_lambdas)
    return np.asarray(beta_f)[:, None] * np.einsum("mn,mnd->md", sens, factors)


def lambda_ascent_step(log_lambdas, gradient, rate, lambda_min=LAMBDA_MIN, lambda_max=LAMBDA_MAX):
    stepped = np.asarray(log_lambdas, dtype=float) + rate * np.asarray(gradient, dtype=float)
    return np.clip(stepped, np.log(lambda_min), np.log(lambda_max))


def expected_latent_loglik(phi, weights, latents, beta_f):
    """Per-model ``E_q[sum_n log N(f_nm; w_m^T phi_m^n, 1/beta_fm)]``, shape (M,)."""
    N = phi.shape[1]
    resid = latents.mu_f - model_predictions(phi, weights.mean)
    sq = np.sum(resid**2, axis=0) + _quad_forms(phi, weights.cov).sum(axis=1) + N * latents.sigma_f_diag
    return 0.5 * N * (np.log(beta_f) - LOG_2PI) - 0.5 * beta_f * sq


def _global_terms(y, latents, beta_y):
    N, M = latents.mu_f.shape
    resid = y - latents.mu_f.sum(axis=1)
    loglik = 0.5 * N * (np.log(beta_y) - LOG_2PI) - 0.5 * beta_y * (resid @ resid + N * latents.sum_sigma_f)
    entropy = 0.5 * N * (M * (1.0 + LOG_2PI) + latents.logdet_sigma_f)
    return float(loglik + entropy)


def _local_terms(phi, weights, latents, beta_f, alpha):
    K = weights.mean.shape[1]
    second_moment = weights.mean**2 + np.diagonal(weights.cov, axis1=1, axis2=2)
    log_prior = 0.5 * np.sum(np.log(alpha) - LOG_2PI - alpha * second_moment, axis=1)
    entropy = 0.5 * (K * (1.0 + LOG_2PI) + weights.logdet)
    return float(np.sum(expected_latent_loglik(phi, weights, latents, beta_f) + log_prior + entropy))


def elbo(y, phi, weights, latents, prec):
    """Variational lower bound on ``log p(y)``: expected complete log-likelihood plus entropies of q(w) and q(f)."""
    return _global_terms(y, latents, prec.beta_y) + _local_terms(phi, weights, latents, prec.beta_f, prec.alpha)


@dataclass
class SweepSettings:
    learn_lengthscales: bool = True
    learning_rate: float = 1e-2
    lambda_min: float = LAMBDA_MIN
    lambda_max: float = LAMBDA_MAX
    var_floor: float = VAR_FLOOR
    alpha_max: float = ALPHA_MAX
    update_hyperparameters: bool = True
    # divide the gradient by N so the rate is a per-datum step size
    per_datum_rate: bool = True
    max_chunk_bytes: int = 256 * 2**20


@dataclass
class SweepResult:
    weights: WeightPosteriors
    prec: Precisions
    log_lambdas: np.ndarray
    latents: LatentTargets
    elbo: float


def _model_chunks(M, N, K, D, max_bytes):
    per_model = 8 * N * (3 * K + 2 * D)
    size = max(1, int(max_bytes // max(per_model, 1)))
    return [slice(s, min(s + size, M)) for s in range(0, M, size)]


def em_sweep(X, y, centers, log_lambdas, weights, prec, settings=None):
    """One coordinate-ascent sweep over all local models.

    Order: latents, weights, beta_f, alpha, beta_y, then one length-scale
    gradient step per model. ``beta_y`` only depends on the latents, so it is
    computed before the per-model pass; this is the same as doing it last.
    The returned ``elbo`` is the bound after the closed-form updates and before
    the length-scale step. Features are built in model chunks so memory stays
    bounded for large N.
    """
    s = settings or SweepSettings()
    N, D = X.shape
    M, K = weights.mean.shape
    chunks = _model_chunks(M, N, K, D, s.max_chunk_bytes)
    cached = features_batch(X, centers, log_lambdas) if len(chunks) == 1 else None

    def chunk_phi(sl):
        return cached if cached is not None else features_batch(X, centers[sl], log_lambdas[sl])

    pred = np.empty((N, M))
    for sl in chunks:
        pred[:, sl] = model_predictions(chunk_phi(sl), weights.mean[sl])
    b_inv = 1.0 / prec.beta_f
    noise_var = 1.0 / prec.beta_y
    denom = noise_var + b_inv.sum()
    mu_f = pred + np.outer(y - pred.sum(axis=1), b_inv / denom)
    latents = LatentTargets(mu_f=mu_f, b_inv=b_inv, denom=float(denom), noise_var=float(noise_var))

    new_prec = prec.copy()
    if s.update_hyperparameters:
        new_prec.beta_y = m_step_beta_y(y, latents, s.var_floor)

    mean = np.empty((M, K))
    cov = np.empty((M, K, K))
    logdet = np.empty(M)
    new_log_lambdas = np.array(log_lambdas, dtype=float, copy=True)
    local = 0.0
    for sl in chunks:
        phi = chunk_phi(sl)
        lat = latents.take(sl)
        chunk_prec = Precisions(prec.beta_y, prec.beta_f[sl], prec.alpha[sl])
        w = e_step_weights(phi, lat, chunk_prec)
        mean[sl], cov[sl], logdet[sl] = w.mean, w.cov, w.logdet
        if s.update_hyperparameters:
            new_prec.beta_f[sl] = m_step_beta_f(phi, w, lat, s.var_floor)
            new_prec.alpha[sl] = m_step_alpha(w, s.alpha_max)
        local += _local_terms(phi, w, lat, new_prec.beta_f[sl], new_prec.alpha[sl])
        if s.learn_lengthscales:
            grad = lambda_gradient(X, centers[sl], log_lambdas[sl], w, lat, new_prec.beta_f[sl], phi=phi)
            if s.per_datum_rate:
                grad = grad / N
            new_log_lambdas[sl] = lambda_ascent_step(
                log_lambdas[sl], grad, s.learning_rate, s.lambda_min, s.lambda_max
            )

    value = _global_terms(y, latents, new_prec.beta_y) + local
    return SweepResult(
        weights=WeightPosteriors(mean, cov, logdet),
        prec=new_prec,
        log_lambdas=new_log_lambdas,
        latents=latents,
        elbo=value,
    )
