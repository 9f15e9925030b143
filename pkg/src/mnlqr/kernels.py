"""Dispatch for the per-sample kernels.

The compiled extension ``mnlqr._kernels`` is used when it was built;
otherwise, or when the environment variable ``MNLQR_PURE_PYTHON`` is set
to a non-empty value, the numpy implementation is used.  Both return the
same values up to rounding.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("MNLQR_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def svec_outer_rows(Z, backend=None):
    """Matrix whose i-th row is ``svec(z_i z_i^T)``."""
    impl = _pick(backend)
    return impl.svec_outer_rows(np.ascontiguousarray(Z, dtype=float))


def sample_op_norms(G, T, S, backend=None):
    """``||G @ C_i^T C_i||_2`` for every row of S, ``C_i = T x_2 S[i]``.

    Parameters
    ----------
    G : ndarray, shape (p, p)
    T : ndarray, shape (a, b, p)
    S : ndarray, shape (N, b)
    """
    impl = _pick(backend)
    return impl.sample_op_norms(np.ascontiguousarray(G, dtype=float),
                                np.ascontiguousarray(T, dtype=float),
                                np.ascontiguousarray(S, dtype=float))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
