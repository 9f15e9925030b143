"""Mode tensors and the second-moment dynamics they induce.

The system is ``x+ = A(w) x + B(w) u`` with ``A(w) = sum_k w_k A_k`` and
likewise for B.  The mode tensor ``M`` has frontal slices
``M[:, :, k] = [A_k, B_k]``, so that ``x+ = [[M; I, z, w]]`` with
``z = (x, u)``.  Given ``W = E[w w^T]`` the map from ``Z = E[z z^T]`` to
``E[x+ x+^T]`` is the CP operator ``M_(1) (W kron Z) M_(1)^T``.

For a structured model the first slice is the known deterministic part
and disturbances are written ``w = (1, w_tilde)``.
"""
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._linalg import TAU, numerical_rank, pinv
from .cpop import CpOperator, is_psd, psd_check
from .errors import DimensionMismatch, ModelNotEquivalent, ShapeMismatch
from .symm import skron, svec, sym_matrix, unsvec
from .tensor import as_tensor, fold, matricize, mode_vec_product, tensor_skron


@dataclass(frozen=True, eq=False)
class ModeTensor:
    """Mode tensor of shape ``(nx, nx + nu, nw)``."""

    tensor: np.ndarray
    nu: int
    structured: bool = False

    def __post_init__(self):
        T = np.array(as_tensor(self.tensor), dtype=float)
        nx, nz, nw = T.shape
        if self.nu < 0 or nz != nx + self.nu:
            raise DimensionMismatch(f"tensor shape {T.shape} inconsistent with nu={self.nu}")
        if self.structured and nw < 1:
            raise DimensionMismatch("a structured model needs a deterministic slice")
        T.setflags(write=False)
        object.__setattr__(self, "tensor", T)

    @property
    def nx(self):
        return self.tensor.shape[0]

    @property
    def nz(self):
        return self.tensor.shape[1]

    @property
    def nw(self):
        return self.tensor.shape[2]

    @property
    def A(self):
        """``tensor[:, :nx, :]``, the state modes."""
        return self.tensor[:, :self.nx, :]

    @property
    def B(self):
        """``tensor[:, nx:, :]``, the input modes."""
        return self.tensor[:, self.nx:, :]

    def modes(self):
        """List of ``(A_k, B_k)`` pairs."""
        return [(self.tensor[:, :self.nx, k], self.tensor[:, self.nx:, k])
                for k in range(self.nw)]

    @cached_property
    def skron_tensor(self):
        """``M (*) M``, shape ``(sd(nx), sd(nz), sd(nw))``."""
        S = tensor_skron(self.tensor)
        S.setflags(write=False)
        return S

    @property
    def mode3(self):
        return matricize(self.tensor, 3)

    @property
    def deterministic(self):
        """``[A_1, B_1]`` of a structured model."""
        return self.tensor[:, :, 0]

    def tilde(self):
        """Random part of a structured model as an unstructured tensor."""
        return self._tilde

    @cached_property
    def _tilde(self):
        return ModeTensor(self.tensor[:, :, 1:], self.nu, structured=False)

    @classmethod
    def from_modes(cls, A_list, B_list=None, structured=False):
        A_list = [np.atleast_2d(np.asarray(A, dtype=float)) for A in A_list]
        nx = A_list[0].shape[0]
        if B_list is None:
            B_list = [np.zeros((nx, 0))] * len(A_list)
        B_list = [np.asarray(B, dtype=float).reshape(nx, -1) for B in B_list]
        if len(B_list) != len(A_list):
            raise DimensionMismatch("need as many B modes as A modes")
        T = np.stack([np.hstack([A, B]) for A, B in zip(A_list, B_list)], axis=2)
        return cls(T, B_list[0].shape[1], structured)

    @classmethod
    def from_mode3(cls, nx, nu, M3, structured=False):
        M3 = np.atleast_2d(np.asarray(M3, dtype=float))
        return cls(fold(M3, 3, (nx, nx + nu, M3.shape[0])), nu, structured)

    def to_json(self):
        return {"nx": self.nx, "nu": self.nu, "nw": self.nw,
                "structured": bool(self.structured),
                "mode3_matrix": self.mode3.tolist()}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        keys = {"nx", "nu", "nw", "structured", "mode3_matrix"}
        if set(obj) - keys or {"nx", "nu", "mode3_matrix"} - set(obj):
            raise ShapeMismatch(f"mode tensor JSON needs keys {sorted(keys)}")
        m = cls.from_mode3(int(obj["nx"]), int(obj["nu"]), obj["mode3_matrix"],
                           bool(obj.get("structured", False)))
        if "nw" in obj and int(obj["nw"]) != m.nw:
            raise DimensionMismatch(f"nw={obj['nw']} but mode3_matrix has {m.nw} rows")
        return m


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True modes together with the true disturbance moments."""

    v_tensor: ModeTensor
    v_moment: np.ndarray
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        V = sym_matrix(self.v_moment)
        if V.shape != (self.v_tensor.nw,) * 2:
            raise DimensionMismatch("v_moment does not match the number of modes")
        psd_check(V, "v_moment")
        object.__setattr__(self, "v_moment", V)
        if self.mean is not None:
            object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))


def model_free_basis(nx, nu):
    """Mode tensor whose 3-mode matricization is the identity."""
    nz = nx + nu
    return ModeTensor.from_mode3(nx, nu, np.eye(nx * nz))


def _equiv_mats(M, V):
    if (M.nx, M.nz) != (V.nx, V.nz):
        raise DimensionMismatch(
            f"models differ in (nx, nz): {(M.nx, M.nz)} vs {(V.nx, V.nz)}")
    if M.structured:
        if not V.structured:
            raise DimensionMismatch("structured model needs a structured truth")
        return M.tilde().mode3, V.tilde().mode3
    return M.mode3, V.mode3


def check_model_equivalence(M, V, tau=TAU):
    """Test ``rk(M_(3)) == rk([M_(3); V_(3)]) == nw``.

    Structured models are tested on their random parts, and their
    deterministic slices must agree.

    Returns
    -------
    ok : bool
    report : dict
        Ranks used in the decision.
    """
    M3, V3 = _equiv_mats(M, V)
    r_m = numerical_rank(M3, tau)
    r_mv = numerical_rank(np.vstack([M3, V3]), tau)
    nw = M3.shape[0]
    ok = r_m == r_mv == nw
    report = {"rank_M3": r_m, "rank_stacked": r_mv, "nw": nw}
    if M.structured:
        same = np.allclose(M.deterministic, V.deterministic, rtol=0, atol=1e-12)
        report["deterministic_match"] = bool(same)
        ok = ok and same
    return bool(ok), report


def translation_matrix(M, V):
    """Matrix ``T`` with ``w = T v`` mapping true disturbances into the basis of M."""
    ok, rep = check_model_equivalence(M, V)
    if not ok:
        raise ModelNotEquivalent(f"model cannot represent the truth: {rep}")
    M3, V3 = _equiv_mats(M, V)
    T = pinv(M3.T) @ V3.T
    if M.structured:
        out = np.zeros((M.nw, V.nw))
        out[0, 0] = 1.0
        out[1:, 1:] = T
        return out
    return T


def translate_disturbance(M, V, v):
    return translation_matrix(M, V) @ np.asarray(v, dtype=float)


def translate_second_moment(M, V, Vmat):
    """``W = pinv(M_(3)^T) V_(3)^T Vmat V_(3) pinv(M_(3))``."""
    Vmat = sym_matrix(Vmat)
    psd_check(Vmat, "Vmat")
    T = translation_matrix(M, V)
    return sym_matrix(T @ Vmat @ T.T, tol=1e-6)


def moment_dynamics(M, W):
    """Operator ``Z -> M_(1) (W kron Z) M_(1)^T`` from Sym(nz) to Sym(nx)."""
    W = sym_matrix(W)
    if W.shape != (M.nw, M.nw):
        raise DimensionMismatch(f"W must be {M.nw}x{M.nw}, got {W.shape}")
    E = mode_vec_product(M.skron_tensor, svec(W), 3)
    return CpOperator(M.nz, M.nx, E, cp=is_psd(W))


def lift_gain(K, nx):
    """``[I; K]`` for a gain of shape (nu, nx)."""
    K = np.asarray(K, dtype=float).reshape(-1, nx)
    return np.vstack([np.eye(nx), K])


def closed_loop(M, W, K):
    """Operator ``X -> E(W; [I; K] X [I, K^T])`` on Sym(nx)."""
    K = np.asarray(K, dtype=float)
    if K.size != M.nu * M.nx:
        raise DimensionMismatch(f"K must be {M.nu}x{M.nx}")
    E = moment_dynamics(M, W)
    L = lift_gain(K, M.nx)
    return CpOperator(M.nx, M.nx, E.op_matrix @ skron(L, L), cp=E.cp)


def adjoint_blocks(M, W, P):
    """Blocks ``F*, H*, G*`` of the adjoint moment dynamics applied to P.

    ``E*(P) = [[F*, H*^T], [H*, G*]]`` partitioned at nx, with
    ``F* = A_(2) (W kron P) A_(2)^T`` etc.
    """
    P = sym_matrix(P)
    if P.shape != (M.nx, M.nx):
        raise DimensionMismatch(f"P must be {M.nx}x{M.nx}")
    E = moment_dynamics(M, W)
    S = unsvec(E.op_matrix.T @ svec(P))
    nx = M.nx
    return S[:nx, :nx], S[nx:, :nx], S[nx:, nx:]


def step(M, z, w):
    """One transition ``x+ = [[M; I, z, w]]``."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.shape != (M.nz,) or w.shape != (M.nw,):
        raise DimensionMismatch(f"need z of length {M.nz} and w of length {M.nw}")
    return np.einsum("ijk,j,k->i", M.tensor, z, w)


def step_batch(M, Z, Wd):
    """Vectorized `step` over rows of ``Z`` (N, nz) and ``Wd`` (N, nw)."""
    return np.einsum("ijk,nj,nk->ni", M.tensor, Z, Wd)
