"""Incremental local Gaussian regression: placement, pruning, fitting and prediction."""

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import variational as vi
from .data import Dataset, mse, nmse
from .errors import ConfigError, EmptyModelError, UsageError
from .features import features_batch, localizer_batch

log = logging.getLogger(__name__)

LATENT_PRECISION_RATIO = 1.0


@dataclass
class FitConfig:
    """Settings of :func:`fit`. Defaults follow the cross-function protocol."""

    w_gen: float = 0.3
    prune_threshold: float = 1e3
    lambda_init: object = 0.3
    learning_rate: float = 1e-2
    convergence_iters: int = 1000
    elbo_tol: float = 1e-8
    learn_lengthscales: bool = True
    update_hyperparameters: bool = True
    per_datum_rate: bool = True
    # points placed between two E/M sweeps; 1 reproduces the per-datum loop
    batch_size: int = 1
    lambda_min: float = vi.LAMBDA_MIN
    lambda_max: float = vi.LAMBDA_MAX
    var_floor: float = vi.VAR_FLOOR
    alpha_max: float = vi.ALPHA_MAX
    seed: int = 0
    deterministic: bool = False

    def validate(self):
        problems = []
        if not 0 < self.w_gen <= 1:
            problems.append(f"w_gen={self.w_gen!r}: must satisfy 0 < w_gen <= 1")
        if not self.prune_threshold > 0:
            problems.append(f"prune_threshold={self.prune_threshold!r}: must be positive")
        lam = np.atleast_1d(np.asarray(self.lambda_init, dtype=float))
        if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            problems.append(f"lambda_init={self.lambda_init!r}: must be positive and finite")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate={self.learning_rate!r}: must be positive")
        if int(self.convergence_iters) != self.convergence_iters or self.convergence_iters < 0:
            problems.append(f"convergence_iters={self.convergence_iters!r}: must be a non-negative integer")
        if not self.elbo_tol >= 0:
            problems.append(f"elbo_tol={self.elbo_tol!r}: must be non-negative")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            problems.append(f"batch_size={self.batch_size!r}: must be a positive integer")
        if not 0 < self.lambda_min < self.lambda_max:
            problems.append("lambda_min/lambda_max: need 0 < lambda_min < lambda_max")
        if not self.var_floor > 0:
            problems.append(f"var_floor={self.var_floor!r}: must be positive")
        if not self.alpha_max > self.prune_threshold:
            problems.append("alpha_max must exceed prune_threshold")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self):
        d = asdict(self)
        lam = np.asarray(self.lambda_init, dtype=float)
        d["lambda_init"] = float(lam) if lam.ndim == 0 else lam.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"{k}: unknown key" for k in unknown])
        return cls(**d)

    def sweep_settings(self):
        return vi.SweepSettings(
            learn_lengthscales=self.learn_lengthscales,
            learning_rate=self.learning_rate,
            lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            var_floor=self.var_floor,
            alpha_max=self.alpha_max,
            update_hyperparameters=self.update_hyperparameters,
            per_datum_rate=self.per_datum_rate,
        )


@dataclass
class LocalModel:
    center: np.ndarray
    log_lambda: np.ndarray
    mu_w: np.ndarray
    sigma_w: np.ndarray
    beta_f: float
    alpha: np.ndarray

    @property
    def lengthscales(self):
        return np.exp(self.log_lambda)


@dataclass
class FitReport:
    elbo_trace: list = field(default_factory=list)
    model_count_trace: list = field(default_factory=list)
    added_trace: list = field(default_factory=list)
    pruned_trace: list = field(default_factory=list)
    final_mse: float = None
    final_nmse: float = None
    sweeps_run: int = 0
    converged: bool = False
    fit_seconds: float = None

    def to_dict(self, include_timing=True):
        d = asdict(self)
        if not include_timing:
            d.pop("fit_seconds")
        return d


class LGRModel:
    """A collection of local linear models sharing an observation precision.

    Per-model quantities are stored stacked along the first axis; use
    :meth:`local_models` for a per-model view.
    """

    def __init__(self, dim, config=None, beta_y=1.0):
        if dim < 1:
            raise UsageError("dim must be at least 1")
        self.dim = int(dim)
        self.config = config or FitConfig()
        self.beta_y = float(beta_y)
        K = self.dim + 1
        self.centers = np.empty((0, self.dim))
        self.log_lambdas = np.empty((0, self.dim))
        self.weights = vi.WeightPosteriors(np.empty((0, K)), np.empty((0, K, K)), np.empty(0))
        self.beta_f = np.empty(0)
        self.alpha = np.empty((0, K))

    @property
    def n_models(self):
        return self.centers.shape[0]

    @property
    def precisions(self):
        return vi.Precisions(self.beta_y, self.beta_f, self.alpha)

    def local_models(self):
        return [
            LocalModel(
                self.centers[m].copy(),
                self.log_lambdas[m].copy(),
                self.weights.mean[m].copy(),
                self.weights.cov[m].copy(),
                float(self.beta_f[m]),
                self.alpha[m].copy(),
            )
            for m in range(self.n_models)
        ]

    def initial_log_lambda(self):
        lam = np.broadcast_to(np.asarray(self.config.lambda_init, dtype=float), (self.dim,))
        return np.log(lam)

    def add_model(self, center):
        K = self.dim + 1
        fresh = vi.prior_weights(np.ones((1, K)))
        self.centers = np.vstack([self.centers, np.asarray(center, dtype=float)[None]])
        self.log_lambdas = np.vstack([self.log_lambdas, self.initial_log_lambda()[None]])
        self.weights = vi.WeightPosteriors(
            np.concatenate([self.weights.mean, fresh.mean]),
            np.concatenate([self.weights.cov, fresh.cov]),
            np.concatenate([self.weights.logdet, fresh.logdet]),
        )
        self.beta_f = np.append(self.beta_f, LATENT_PRECISION_RATIO * self.beta_y)
        self.alpha = np.vstack([self.alpha, np.ones((1, K))])

    def keep(self, mask):
        """A copy holding only the models selected by boolean ``mask``."""
        out = LGRModel(self.dim, self.config, self.beta_y)
        out.centers = self.centers[mask]
        out.log_lambdas = self.log_lambdas[mask]
        out.weights = self.weights.take(mask)
        out.beta_f = self.beta_f[mask]
        out.alpha = self.alpha[mask]
        return out

    def copy(self):
        return self.keep(np.ones(self.n_models, dtype=bool))

    def apply_sweep(self, result):
        self.weights = result.weights
        self.beta_y = float(result.prec.beta_y)
        self.beta_f = result.prec.beta_f
        self.alpha = result.prec.alpha
        self.log_lambdas = result.log_lambdas

    def predict(self, x):
        """Predictive mean and variance at a single input."""
        x = np.asarray(x, dtype=float).reshape(-1)
        mean, var = self.predict_batch(x[None, :])
        return float(mean[0]), float(var[0])

    def predict_batch(self, X, chunk_bytes=128 * 2**20):
        """Predictive means and variances, shape (N*,) each.

        The variance is ``1/beta_y + sum_m 1/beta_fm + sum_m phi_m^T Sigma_wm phi_m``;
        the middle term does not depend on x, so it grows with the model count
        even far from the data.
        """
        if self.n_models == 0:
            raise EmptyModelError("model has no local models; fit it first")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size == self.dim else X[:, None]
        if X.shape[1] != self.dim:
            raise UsageError(f"inputs have {X.shape[1]} columns, model expects {self.dim}")
        if not np.all(np.isfinite(X)):
            raise UsageError("inputs contain non-finite values")
        M, K = self.weights.mean.shape
        rows = max(1, int(chunk_bytes // (8 * M * (K * K + 2 * K + self.dim))))
        mean = np.empty(X.shape[0])
        quad = np.empty(X.shape[0])
        # explicit broadcast-and-sum instead of BLAS/einsum so that every row's
        # result is bitwise independent of how many rows are predicted together
        for s in range(0, X.shape[0], rows):
            phi = features_batch(X[s : s + rows], self.centers, self.log_lambdas)
            mean[s : s + rows] = _sum_models((phi * self.weights.mean[:, None, :]).sum(axis=2))
            proj = (phi[:, :, :, None] * self.weights.cov[:, None, :, :]).sum(axis=2)
            quad[s : s + rows] = _sum_models((proj * phi).sum(axis=2))
        var = 1.0 / self.beta_y + np.sum(1.0 / self.beta_f) + quad
        return mean, var


def _sum_models(values):
    """Sum an (M, N) array over models with a per-row reduction that ignores N."""
    return np.ascontiguousarray(values.T).sum(axis=1)


def maybe_add_model(model, x):
    """Place a model at ``x`` unless some existing localizer reaches ``w_gen`` there.

    Returns True if a model was added.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.dim or not np.all(np.isfinite(x)):
        raise UsageError("x must be a finite vector of the model's dimension")
    if model.n_models > 0:
        eta = localizer_batch(x[None, :], model.centers, model.log_lambdas)[:, 0]
        if np.any(eta >= model.config.w_gen):
            return False
    model.add_model(x)
    return True


def prune(model):
    """Drop every local model whose ARD precisions all exceed the threshold.

    The last remaining model is never removed (the one with the smallest
    minimum precision is kept), so a fitted model can always predict.
    """
    dead = np.all(model.alpha > model.config.prune_threshold, axis=1)
    if not dead.any():
        return model
    if dead.all():
        dead[np.argmin(model.alpha.min(axis=1))] = False
    return model.keep(~dead)


def _initial_beta_y(y):
    var = float(np.var(y))
    return 1.0 / var if var > 0 else 1.0


def fit(dataset, config=None, on_prune=None):
    """Fit a local Gaussian regression model.

    Data points are visited in order. Each one may place a new local model;
    after every ``batch_size`` points one E/M sweep runs over all points seen
    so far and exhausted models are pruned. Then up to ``convergence_iters``
    further sweeps run on the full data, stopping once the relative change of
    the bound drops below ``elbo_tol``.

    ``on_prune(before, after, n_seen)``, if given, is called with copies of the
    model just before and after every sweep that removed local models.

    Returns
    -------
    (LGRModel, FitReport)
    """
    if not isinstance(dataset, Dataset):
        dataset = Dataset(*dataset)
    config = (config or FitConfig()).validate()
    dataset.check_finite()
    X, y = dataset.inputs, dataset.targets
    N, D = X.shape
    if N < 1:
        raise UsageError("dataset is empty")
    if np.asarray(config.lambda_init).size not in (1, D):
        raise ConfigError([f"lambda_init: expected a scalar or {D} values"])

    started = time.perf_counter()
    settings = config.sweep_settings()
    model = LGRModel(D, config, beta_y=_initial_beta_y(y))
    report = FitReport()

    def sweep(n_seen, added):
        nonlocal model
        result = vi.em_sweep(X[:n_seen], y[:n_seen], model.centers, model.log_lambdas,
                             model.weights, model.precisions, settings)
        model.apply_sweep(result)
        before = model.n_models
        pruned_model = prune(model)
        if on_prune is not None and pruned_model is not model:
            on_prune(model.copy(), pruned_model.copy(), n_seen)
        model = pruned_model
        report.elbo_trace.append(result.elbo)
        report.model_count_trace.append(model.n_models)
        report.added_trace.append(added)
        report.pruned_trace.append(before - model.n_models)
        report.sweeps_run += 1
        return result.elbo, before != model.n_models

    added = 0
    for n in range(N):
        added += maybe_add_model(model, X[n])
        if (n + 1) % config.batch_size == 0 or n == N - 1:
            sweep(n + 1, added)
            added = 0
    log.debug("data pass done: %d models after %d sweeps", model.n_models, report.sweeps_run)

    previous = report.elbo_trace[-1]
    for it in range(config.convergence_iters):
        value, pruned = sweep(N, 0)
        if not pruned and abs(value - previous) <= config.elbo_tol * max(abs(value), 1.0):
            report.converged = True
            break
        previous = value

    means, _ = model.predict_batch(X)
    report.final_mse = mse(means, y)
    try:
        report.final_nmse = nmse(means, y)
    except UsageError:
        report.final_nmse = None
    report.fit_seconds = time.perf_counter() - started
    log.info("fit: %d models, %d sweeps, train nMSE %s", model.n_models, report.sweeps_run, report.final_nmse)
    return model, report
