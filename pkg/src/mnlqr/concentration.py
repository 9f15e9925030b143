"""Hoeffding-type confidence radii for matrix and vector sums."""
import math

import numpy as np

from .errors import InvalidDelta, NormBoundViolated
from .symm import sym_matrix


def _check_delta(delta):
    if not (0.0 < delta < 1.0):
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta!r}")


def _gnorm(gammas):
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(g < 0):
        raise ValueError("per-term bounds must be nonnegative")
    return float(np.linalg.norm(g))


def matrix_hoeffding_radius(gammas, d, delta):
    """Spectral-norm radius ``||gamma||_2 sqrt(2 ln(2d/delta))``.

    For independent zero-mean symmetric d-by-d terms with ``X_i^2 <= gamma_i^2 I``
    the sum exceeds this radius in spectral norm with probability at most delta.
    """
    _check_delta(delta)
    return _gnorm(gammas) * math.sqrt(2.0 * math.log(2.0 * d / delta))


def vector_hoeffding_radius(gammas, delta):
    """Euclidean radius ``||gamma||_2 (2 + sqrt(2 ln(1/delta)))``."""
    _check_delta(delta)
    return _gnorm(gammas) * (2.0 + math.sqrt(2.0 * math.log(1.0 / delta)))


def direct_moment_bound(samples, r_w, delta):
    """Sample second moment of directly observed disturbances and its radius.

    Parameters
    ----------
    samples : array_like, shape (N, nw)
    r_w : float
        Almost-sure bound on ``||w||_2``; checked on every sample.
    delta : float

    Returns
    -------
    W_hat : ndarray
        ``(1/N) sum w_i w_i^T``.
    beta : float
        ``r_w^2 sqrt(2 ln(2 nw/delta) / N)``.
    """
    _check_delta(delta)
    w = np.atleast_2d(np.asarray(samples, dtype=float))
    N, nw = w.shape
    if N < 1:
        raise ValueError("need at least one sample")
    norms = np.linalg.norm(w, axis=1)
    bad = np.flatnonzero(norms > r_w * (1 + 1e-12))
    if bad.size:
        i = int(bad[0])
        raise NormBoundViolated(i, norms[i], r_w)
    W_hat = sym_matrix(w.T @ w / N)
    beta = r_w ** 2 * math.sqrt(2.0 * math.log(2.0 * nw / delta) / N)
    return W_hat, beta
