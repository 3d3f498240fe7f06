"""Cholesky helpers with symmetrization and a single jitter retry."""

import numpy as np
import scipy.linalg

from .errors import NumericalError

JITTER_SCALE = 1e-10


def symmetrize(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def cho_factor_spd(A, what="matrix"):
    """Cholesky factor of a symmetric positive-definite matrix.

    On failure a jitter of ``1e-10 * trace / F`` is added to the diagonal once;
    a second failure raises :class:`NumericalError` with the condition number.
    """
    A = symmetrize(np.asarray(A, dtype=float))
    try:
        return scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        pass
    F = A.shape[0]
    jitter = JITTER_SCALE * np.trace(A) / F
    try:
        return scipy.linalg.cho_factor(A + jitter * np.eye(F), lower=True)
    except (np.linalg.LinAlgError, ValueError):
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(A) if np.all(np.isfinite(A)) else np.inf
        raise NumericalError(
            f"{what} is not positive definite (size {F}, condition number {cond:.3e})"
        ) from None


def spd_inverse(A, what="matrix"):
    factor = cho_factor_spd(A, what)
    return symmetrize(scipy.linalg.cho_solve(factor, np.eye(A.shape[0])))


def spd_inverse_batch(P, what="precision matrix"):
    """Inverse and log-determinant of a stack (M, K, K) of SPD matrices.

    Returns ``(inverse, logdet_of_inverse)``. The error message names the first
    failing index so callers can report which local model broke.
    """
    P = symmetrize(P)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        L = np.empty_like(P)
        for m in range(P.shape[0]):
            try:
                L[m] = np.linalg.cholesky(P[m])
            except np.linalg.LinAlgError:
                jitter = JITTER_SCALE * np.trace(P[m]) / P.shape[-1]
                try:
                    L[m] = np.linalg.cholesky(P[m] + jitter * np.eye(P.shape[-1]))
                except np.linalg.LinAlgError:
                    raise NumericalError(f"{what} of local model {m} is not positive definite") from None
    eye = np.broadcast_to(np.eye(P.shape[-1]), P.shape)
    L_inv = np.linalg.solve(L, eye)
    inv = np.swapaxes(L_inv, -1, -2) @ L_inv
    logdet_inv = -2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    return symmetrize(inv), logdet_inv
