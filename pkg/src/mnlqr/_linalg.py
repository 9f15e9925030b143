"""Rank decisions and pseudo-inverses shared by the model and identification code."""
import numpy as np

# relative singular value cutoff used for every rank decision
TAU = 1e-10


def numerical_rank(A, tau=TAU):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tau * s[0]))


def pinv(A, tau=TAU):
    return np.linalg.pinv(np.atleast_2d(np.asarray(A, dtype=float)), rcond=tau)


def psd_pinv(G, tau=TAU):
    """Pseudo-inverse of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues at or below ``tau * lambda_max`` are treated as zero.
    Returns the pseudo-inverse and the retained rank.
    """
    lam, U = np.linalg.eigh(0.5 * (G + G.T))
    top = lam[-1] if lam.size else 0.0
    if top <= 0:
        return np.zeros_like(G), 0
    keep = lam > tau * top
    Uk = U[:, keep]
    return (Uk / lam[keep]) @ Uk.T, int(keep.sum())
