"""Vectorization of symmetric matrices and the symmetrized Kronecker product.

Ordering convention: ``svec`` walks the lower triangle column by column,
diagonal entry first, and scales strictly-lower entries by sqrt(2) so that
``svec(X) @ svec(Y) == trace(X @ Y)``.  ``vec`` is column-major.  All
other modules rely on these two orderings.

Symmetric matrices are carried as plain ``(d, d)`` numpy arrays;
`sym_matrix` is the validating constructor.
"""
import math
from functools import lru_cache

import numpy as np

from .errors import LengthNotTriangular, ShapeMismatch

SQRT2 = math.sqrt(2.0)
ASYM_TOL = 1e-9


def sd(d):
    """Dimension of the svec coordinates of a d-by-d symmetric matrix."""
    return d * (d + 1) // 2


def tri_dim(n):
    """Return d with sd(d) == n, or raise `LengthNotTriangular`."""
    d = int((math.isqrt(8 * n + 1) - 1) // 2)
    if n < 1 or sd(d) != n:
        raise LengthNotTriangular(f"length {n} is not d(d+1)/2 for an integer d")
    return d


def vec(X):
    """Column-major vectorization."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def sym_matrix(X, tol=ASYM_TOL):
    """Validate and symmetrize a square matrix.

    Parameters
    ----------
    X : array_like
        Square matrix, or a scalar for the 1x1 case.
    tol : float
        Allowed asymmetry relative to ``max(1, max|X|)``.

    Returns
    -------
    ndarray
        ``(X + X.T) / 2``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {X.shape}")
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if X.size and np.max(np.abs(X - X.T)) > tol * scale:
        raise ShapeMismatch("matrix is not symmetric within tolerance")
    return 0.5 * (X + X.T)


@lru_cache(maxsize=64)
def _tril_index(d):
    # rows and cols of the lower triangle in svec order
    cols, rows = [], []
    for j in range(d):
        for i in range(j, d):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, SQRT2)
    for a in (rows, cols, scale):
        a.setflags(write=False)
    return rows, cols, scale


def svec(X):
    """Symmetric vectorization of a symmetric matrix (or a stack of them).

    >>> svec(np.array([[1.0, 2.0], [2.0, 3.0]]))
    array([1.        , 2.82842712, 3.        ])
    """
    X = np.asarray(X, dtype=float)
    rows, cols, scale = _tril_index(X.shape[-1])
    return X[..., rows, cols] * scale


def unsvec(v):
    """Inverse of `svec`; accepts a vector or a stack of vectors."""
    v = np.asarray(v, dtype=float)
    d = tri_dim(v.shape[-1])
    rows, cols, scale = _tril_index(d)
    X = np.zeros(v.shape[:-1] + (d, d))
    vals = v / scale
    X[..., rows, cols] = vals
    X[..., cols, rows] = vals
    return X


@lru_cache(maxsize=64)
def _qd(d):
    rows, cols, scale = _tril_index(d)
    Q = np.zeros((sd(d), d * d))
    k = np.arange(sd(d))
    off = rows != cols
    Q[k, rows + cols * d] = np.where(off, 1.0 / SQRT2, 1.0)
    Q[k[off], cols[off] + rows[off] * d] = 1.0 / SQRT2
    Q.setflags(write=False)
    return Q


def qd_matrix(d):
    """The ``sd(d) x d**2`` matrix with ``svec(X) == Q_d @ vec(X)``."""
    if d < 1:
        raise ValueError("d must be positive")
    return _qd(d).copy()


def skron(V, U):
    """Symmetrized Kronecker product ``V (*) U``.

    Satisfies ``svec(Z X Z^T) == skron(Z, Z) @ svec(X)``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if V.shape != U.shape:
        raise ShapeMismatch(f"skron operands differ in shape: {V.shape} vs {U.shape}")
    m, n = V.shape
    K = np.kron(U, V)
    if U is not V:
        K = 0.5 * (K + np.kron(V, U))
    return _qd(m) @ K @ _qd(n).T
