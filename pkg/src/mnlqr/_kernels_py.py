"""Pure numpy versions of the per-sample kernels."""
import numpy as np

from .symm import svec

CHUNK = 4096


def svec_outer_rows(Z):
    Z = np.asarray(Z, dtype=float)
    return svec(Z[:, :, None] * Z[:, None, :])


def sample_op_norms(G, T, S):
    """Spectral norms of ``G @ C_i^T C_i`` with ``C_i = sum_b S[i, b] T[:, b, :]``."""
    G = np.asarray(G, dtype=float)
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    out = np.empty(S.shape[0])
    for lo in range(0, S.shape[0], CHUNK):
        C = np.einsum("abc,nb->nac", T, S[lo:lo + CHUNK])
        Wm = np.einsum("nac,nae->nce", C, C)
        out[lo:lo + CHUNK] = np.linalg.norm(G @ Wm, ord=2, axis=(1, 2))
    return out
