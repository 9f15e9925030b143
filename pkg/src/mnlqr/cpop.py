"""Linear operators on symmetric matrices, completely positive ones in particular.

An operator ``S : Sym(n) -> Sym(m)`` is stored through its matrix in svec
coordinates, ``svec(S(X)) == op_matrix @ svec(X)``.  Because svec is an
isometry, the adjoint is represented by ``op_matrix.T``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (EmptyModeList, NotCpConstructed, NotPd, NotPsd,
                     NotSquare, ShapeMismatch, Unstable)
from .symm import sd, skron, svec, sym_matrix, tri_dim, unsvec
from .tensor import as_tensor, mode_vec_product, tensor_skron

PSD_TOL = 1e-9
STAB_TOL = 1e-9


def psd_check(X, what="matrix", tol=PSD_TOL):
    """Return the eigenvalues of symmetric `X`; raise `NotPsd` if it is not PSD.

    The test is ``eigmin >= -tol * max(1, eigmax)``.
    """
    ev = np.linalg.eigvalsh(sym_matrix(X))
    if ev[0] < -tol * max(1.0, ev[-1]):
        raise NotPsd(ev[0], what)
    return ev


def is_psd(X, tol=PSD_TOL):
    ev = np.linalg.eigvalsh(sym_matrix(X))
    return bool(ev[0] >= -tol * max(1.0, ev[-1]))


@dataclass(frozen=True, eq=False)
class CpOperator:
    """Linear map on symmetric matrices in svec coordinates.

    Attributes
    ----------
    in_dim, out_dim : int
        Maps ``Sym(in_dim)`` to ``Sym(out_dim)``.
    op_matrix : ndarray, shape (sd(out_dim), sd(in_dim))
    cp : bool
        True when the operator was built from modes or from a mode tensor
        with a PSD parameter, which makes `op_norm` exact.
    """

    in_dim: int
    out_dim: int
    op_matrix: np.ndarray
    cp: bool = False

    def __post_init__(self):
        A = np.array(self.op_matrix, dtype=float)
        if A.shape != (sd(self.out_dim), sd(self.in_dim)):
            raise ShapeMismatch(
                f"op_matrix shape {A.shape} does not map Sym({self.in_dim}) "
                f"to Sym({self.out_dim})")
        A.setflags(write=False)
        object.__setattr__(self, "op_matrix", A)

    @classmethod
    def from_matrix(cls, op_matrix, in_dim=None, out_dim=None):
        """Wrap a raw svec-coordinate matrix (not flagged CP)."""
        op_matrix = np.atleast_2d(np.asarray(op_matrix, dtype=float))
        out_dim = out_dim or tri_dim(op_matrix.shape[0])
        in_dim = in_dim or tri_dim(op_matrix.shape[1])
        return cls(in_dim, out_dim, op_matrix, cp=False)

    def __call__(self, X):
        return apply(self, X)


def identity_operator(n):
    return CpOperator(n, n, np.eye(sd(n)), cp=True)


def cp_from_modes(modes):
    """CP operator ``X -> sum_i A_i X A_i^T``."""
    modes = [np.atleast_2d(np.asarray(A, dtype=float)) for A in modes]
    if not modes:
        raise EmptyModeList("at least one mode is required")
    shape = modes[0].shape
    for A in modes:
        if A.shape != shape:
            raise ShapeMismatch(f"modes differ in shape: {shape} vs {A.shape}")
    S = sum(skron(A, A) for A in modes)
    return CpOperator(shape[1], shape[0], S, cp=True)


def cp_from_tensor(A, W, check_psd=True):
    """CP operator ``X -> A_(1) (W kron X) A_(1)^T`` of a mode tensor.

    Parameters
    ----------
    A : ndarray, shape (m, n, r)
        Mode tensor, slices ``A[:, :, k]`` are the modes.
    W : ndarray, shape (r, r)
        Symmetric weight; must be PSD unless `check_psd` is False, in
        which case the result is a plain (not necessarily CP) operator.
    """
    A = as_tensor(A)
    W = sym_matrix(W)
    m, n, r = A.shape
    if W.shape != (r, r):
        raise ShapeMismatch(f"W must be {r}x{r}, got {W.shape}")
    cp = True
    if check_psd:
        psd_check(W, "W")
    else:
        cp = is_psd(W)
    S = mode_vec_product(tensor_skron(A), svec(W), 3)
    return CpOperator(n, m, S, cp=cp)


def _check_in(op, X, dim):
    X = sym_matrix(X)
    if X.shape != (dim, dim):
        raise ShapeMismatch(f"expected a {dim}x{dim} matrix, got {X.shape}")
    return X


def apply(op, X):
    """``S(X)``."""
    X = _check_in(op, X, op.in_dim)
    return unsvec(op.op_matrix @ svec(X))


def adjoint_apply(op, P):
    """``S*(P)``, defined by ``tr[S(X) P] == tr[X S*(P)]``."""
    P = _check_in(op, P, op.out_dim)
    return unsvec(op.op_matrix.T @ svec(P))


def adjoint(op):
    return CpOperator(op.out_dim, op.in_dim, op.op_matrix.T, cp=op.cp)


def compose(outer, inner):
    """Operator ``X -> outer(inner(X))``."""
    if outer.in_dim != inner.out_dim:
        raise ShapeMismatch("operators are not composable")
    return CpOperator(inner.in_dim, outer.out_dim, outer.op_matrix @ inner.op_matrix,
                      cp=outer.cp and inner.cp)


def op_norm(op):
    """Induced spectral norm, exact for CP operators: ``||S(I)||_2``."""
    if not op.cp:
        raise NotCpConstructed("op_norm needs a CP-constructed operator; use op_norm_bound")
    return float(np.linalg.norm(apply(op, np.eye(op.in_dim)), 2))


def op_norm_bound(op):
    """Upper bound ``sqrt(m) * ||op_matrix||_2`` valid for any operator."""
    return float(np.sqrt(op.out_dim) * np.linalg.norm(op.op_matrix, 2))


def spectral_radius(op):
    if op.in_dim != op.out_dim:
        raise NotSquare(f"operator maps Sym({op.in_dim}) to Sym({op.out_dim})")
    return float(np.max(np.abs(np.linalg.eigvals(op.op_matrix))))


def outer_spectral_radius(modes):
    """``sqrt(rho(sum_i A_i kron A_i))`` for square modes."""
    modes = [np.atleast_2d(np.asarray(A, dtype=float)) for A in modes]
    if not modes:
        raise EmptyModeList("at least one mode is required")
    n = modes[0].shape[0]
    for A in modes:
        if A.shape != (n, n):
            raise ShapeMismatch("modes must be square and of equal size")
    K = sum(np.kron(A, A) for A in modes)
    return float(np.sqrt(np.max(np.abs(np.linalg.eigvals(K)))))


def is_mss(op, tol=STAB_TOL):
    """Mean-square stability test ``rho(S) < 1 - tol``."""
    return spectral_radius(op) < 1.0 - tol


def lyapunov_solve(op, H, tol=STAB_TOL):
    """Solve ``P - S*(P) == H`` for a stable operator and ``H > 0``.

    The solution satisfies ``tr[P X] == tr[H sum_t S^t(X)]``.
    """
    rho = spectral_radius(op)
    if rho >= 1.0 - tol:
        raise Unstable(rho)
    H = _check_in(op, H, op.in_dim)
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 0:
        raise NotPd(ev[0], "H")
    return _lyap(op.op_matrix, H)


def _lyap(S, H):
    A = np.eye(S.shape[0]) - S.T
    return unsvec(scipy.linalg.solve(A, svec(H)))
