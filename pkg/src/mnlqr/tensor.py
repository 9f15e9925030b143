"""Dense third-order tensor algebra.

A tensor is a numpy array of shape ``(q1, q2, q3)``; entry ``T[i, j, k]``
is the ``(i, j)`` entry of the k-th frontal slice.  Modes are numbered
1, 2, 3 as in the usual matricization notation.

Matricization follows the column-major convention: row ``i`` of the
n-mode matricization is ``vec`` of the i-th slice along mode n, where
the slice keeps the other two axes in their original order.  Concretely

    T_(1)[i, j + q2*k] = T[i, j, k]
    T_(2)[j, i + q1*k] = T[i, j, k]
    T_(3)[k, i + q1*j] = T[i, j, k]

which is a Fortran-order reshape after moving axis n to the front.
"""
import numpy as np

from .errors import InvalidMode, ShapeMismatch
from .symm import _qd


def _axis(n):
    if n not in (1, 2, 3):
        raise InvalidMode(f"mode must be 1, 2 or 3, got {n!r}")
    return n - 1


def as_tensor(T):
    T = np.asarray(T, dtype=float)
    if T.ndim != 3:
        raise ShapeMismatch(f"expected a third-order tensor, got ndim={T.ndim}")
    return T


def matricize(T, n):
    """n-mode matricization ``T_(n)``."""
    ax = _axis(n)
    T = as_tensor(T)
    return np.moveaxis(T, ax, 0).reshape(T.shape[ax], -1, order="F")


def fold(Mat, n, shape):
    """Inverse of `matricize` for a tensor of the given shape."""
    ax = _axis(n)
    Mat = np.asarray(Mat, dtype=float)
    moved = (shape[ax],) + tuple(s for i, s in enumerate(shape) if i != ax)
    if Mat.shape != (moved[0], moved[1] * moved[2]):
        raise ShapeMismatch(f"cannot fold {Mat.shape} into mode-{n} of {shape}")
    return np.moveaxis(Mat.reshape(moved, order="F"), 0, ax)


def mode_product(T, X, n):
    """Mode-n product ``T x_n X``; satisfies ``(T x_n X)_(n) == X @ T_(n)``."""
    ax = _axis(n)
    T = as_tensor(T)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[1] != T.shape[ax]:
        raise ShapeMismatch(
            f"mode-{n} product needs {T.shape[ax]} columns, got shape {X.shape}")
    return np.moveaxis(np.tensordot(X, T, axes=(1, ax)), 0, ax)


def mode_vec_product(T, x, n):
    """Mode-n vector product, a matrix over the two remaining modes."""
    ax = _axis(n)
    T = as_tensor(T)
    x = np.asarray(x, dtype=float)
    if x.shape != (T.shape[ax],):
        raise ShapeMismatch(
            f"mode-{n} vector product needs length {T.shape[ax]}, got {x.shape}")
    return np.tensordot(T, x, axes=(ax, 0))


def tucker(T, X1=None, X2=None, X3=None):
    """Tucker operator ``[[T; X1, X2, X3]]``.

    Matrix arguments act by mode products.  A 1-D argument of length q_n
    is treated as a row vector and its axis is removed from the result,
    so that e.g. ``tucker(M, None, z, w)`` is the vector ``A(w) x + B(w) u``.
    ``None`` stands for the identity.
    """
    T = as_tensor(T)
    drop = []
    for n, X in enumerate((X1, X2, X3), start=1):
        if X is None:
            continue
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            drop.append(n - 1)
            X = X[None, :]
        T = mode_product(T, X, n)
    if drop:
        T = T.squeeze(axis=tuple(drop))
    return T[()] if T.ndim == 0 else T


def tensor_kron(T):
    """Tensor Kronecker product ``T (x) T``.

    The slice along mode 1 at index ``i + q1*j`` is ``kron(T[j], T[i])``;
    every mode pairs indices the same way, so the entry at
    ``(i + q1*j, b + q2*a, d + q3*c)`` is ``T[i, b, d] * T[j, a, c]``.
    """
    T = as_tensor(T)
    q1, q2, q3 = T.shape
    E = np.einsum("ibd,jac->ijbadc", T, T)
    return E.reshape(q1 * q1, q2 * q2, q3 * q3, order="F")


def tensor_skron(T):
    """Symmetrized tensor Kronecker product ``T (*) T``.

    Compressed to svec coordinates in every mode; satisfies
    ``tucker(T, p, z, w)**2 == tucker(T (*) T, svec(pp'), svec(zz'), svec(ww'))``.
    """
    T = as_tensor(T)
    q1, q2, q3 = T.shape
    return tucker(tensor_kron(T), _qd(q1), _qd(q2), _qd(q3))


def flattening_norm_ub(T):
    """Upper bound ``min_n ||T_(n)||_2`` on the tensor spectral norm."""
    return min(np.linalg.norm(matricize(T, n), 2) for n in (1, 2, 3))


def tensor_spectral_norm_lb(T, iters=100, restarts=8, seed=0):
    """Lower bound on ``sup |[[T; x, z, w]]|`` over unit vectors.

    Alternating maximization: with two of the vectors fixed the optimal
    third one is the normalized contraction.  The best value over
    `restarts` random starts is returned, so the result is nondecreasing
    in `restarts` for a fixed seed.
    """
    if iters < 1 or restarts < 1:
        raise ValueError("iters and restarts must be positive")
    T = as_tensor(T)
    rng = np.random.default_rng(seed)
    best = 0.0

    def unit(v):
        nv = np.linalg.norm(v)
        return v / nv if nv > 0 else v

    for _ in range(restarts):
        x, z, w = (unit(rng.standard_normal(q)) for q in T.shape)
        val = 0.0
        for _ in range(iters):
            x = unit(np.einsum("ijk,j,k->i", T, z, w))
            z = unit(np.einsum("ijk,i,k->j", T, x, w))
            w = np.einsum("ijk,i,j->k", T, x, z)
            new = float(np.linalg.norm(w))
            w = unit(w)
            if abs(new - val) <= 1e-15 * max(new, 1.0):
                val = new
                break
            val = new
        best = max(best, val)
    return best
