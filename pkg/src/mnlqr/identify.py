"""Least-squares identification of disturbance moments from state transitions.

Squaring the measurement model ``x+ = [[M; I, z, w]]`` in svec
coordinates gives ``x+ (*) x+ = [[M (*) M; z (*) z, w (*) w]]``, which is
linear in ``svec(w w^T)``.  Stacking N transitions and solving by least
squares yields ``W_hat``; the sensitivity of the estimate to each
sample gives the data-dependent radius ``beta_W``.

All sums over samples are accumulated in the small ``sd(nw)`` space, so
memory does not grow with N beyond the data itself.
"""
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ._linalg import TAU, numerical_rank, psd_pinv
from .concentration import (_check_delta, direct_moment_bound,
                            matrix_hoeffding_radius, vector_hoeffding_radius)
from .errors import (DimensionMismatch, InconsistentMeasurement,
                     InsufficientSamples, NotObservable, NotStructured,
                     RankDeficientData, SampleCountBelowThreshold)
from .kernels import sample_op_norms, svec_outer_rows
from .cpop import psd_check
from .model import moment_dynamics
from .symm import sd, svec, sym_matrix, unsvec
from .tensor import flattening_norm_ub, matricize

CSV_VERSION = "mnlqr-dataset v1"


class Generation(str, Enum):
    REPEATED_INIT = "repeated_init"
    ROLLOUT = "rollout"
    SINGLE_TRAJECTORY = "single_trajectory"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Transitions ``(z_i, x_next_i)`` with metadata.

    Attributes
    ----------
    z : ndarray, shape (N, nz)
    x_next : ndarray, shape (N, nx)
    r_w : float
        Almost-sure bound on the norm of the (random part of the)
        disturbance in the model basis.
    r_z : float or None
    generation : Generation
    T : int or None
        Rollout length for rollout data.
    seed : int or None
    """

    z: np.ndarray
    x_next: np.ndarray
    r_w: float
    r_z: float = None
    generation: Generation = Generation.REPEATED_INIT
    T: int = None
    seed: int = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float, ndmin=2)
        x = np.array(self.x_next, dtype=float, ndmin=2)
        if z.size == 0:
            z = z.reshape(0, z.shape[-1] if z.ndim == 2 else 0)
        if x.size == 0:
            x = x.reshape(0, x.shape[-1] if x.ndim == 2 else 0)
        if z.ndim != 2 or x.ndim != 2 or z.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"z {z.shape} and x_next {x.shape} do not pair up")
        for a in (z, x):
            a.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x_next", x)
        object.__setattr__(self, "generation", Generation(self.generation))

    @property
    def N(self):
        return self.z.shape[0]

    @property
    def certified(self):
        """Whether the i.i.d. assumption behind the radii holds."""
        return self.generation != Generation.SINGLE_TRAJECTORY

    def to_csv(self, path):
        """Write ``path`` and the metadata sidecar ``path + '.json'``."""
        path = Path(path)
        nz, nx = self.z.shape[1], self.x_next.shape[1]
        header = ["i"] + [f"z_{k}" for k in range(nz)] + [f"xnext_{k}" for k in range(nx)]
        rows = np.hstack([np.arange(self.N)[:, None], self.z, self.x_next])
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for r in rows:
                f.write(str(int(r[0])) + "," + ",".join(repr(float(v)) for v in r[1:]) + "\n")
        meta = {"format": CSV_VERSION, "r_w": self.r_w, "r_z": self.r_z,
                "generation": self.generation.value, "T": self.T, "seed": self.seed,
                "nz": nz, "nx": nx}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        with open(path) as f:
            header = f.readline().strip().split(",")
        nz = sum(h.startswith("z_") for h in header)
        nx = sum(h.startswith("xnext_") for h in header)
        if header[0] != "i" or nz + nx + 1 != len(header):
            raise DimensionMismatch(f"unexpected dataset header in {path}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        data = data.reshape(-1, len(header))
        return cls(data[:, 1:1 + nz], data[:, 1 + nz:], meta["r_w"], meta.get("r_z"),
                   meta.get("generation", "repeated_init"), meta.get("T"), meta.get("seed"))


@dataclass(frozen=True)
class StructuredPart:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    beta_mu: float
    beta_sigma: float
    zeta_mu: float = float("nan")


@dataclass(frozen=True, eq=False)
class AmbiguitySet:
    """Interval ``[W_hat - beta_w I, W_hat + beta_w I]`` (plus mean data if structured).

    For a structured model ``w_hat`` is the estimate of ``E[w~ w~^T]``
    for the random part ``w~`` of the disturbance.
    """

    w_hat: np.ndarray
    beta_w: float
    delta: float
    certified: bool = True
    structured: StructuredPart = None
    zeta_w: float = float("nan")

    def __post_init__(self):
        if self.beta_w < 0:
            raise ValueError("beta_w must be nonnegative")
        object.__setattr__(self, "w_hat", sym_matrix(self.w_hat))
        s = self.structured
        if s is not None:
            want = self.beta_w + s.beta_mu * (s.beta_mu + 2 * np.linalg.norm(s.mu_hat))
            if not math.isclose(s.beta_sigma, want, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError("beta_sigma inconsistent with beta_w and beta_mu")

    @property
    def w_lower(self):
        return self.w_hat - self.beta_w * np.eye(self.w_hat.shape[0])

    @property
    def w_upper(self):
        return self.w_hat + self.beta_w * np.eye(self.w_hat.shape[0])

    def to_json(self):
        out = {"w_hat": self.w_hat.tolist(), "beta_w": self.beta_w, "delta": self.delta,
               "certified": bool(self.certified), "zeta_w": _num(self.zeta_w)}
        s = self.structured
        if s is not None:
            out["structured"] = {"mu_hat": np.asarray(s.mu_hat).tolist(),
                                 "sigma_hat": np.asarray(s.sigma_hat).tolist(),
                                 "beta_mu": s.beta_mu, "beta_sigma": s.beta_sigma,
                                 "zeta_mu": _num(s.zeta_mu)}
        return out

    @classmethod
    def from_json(cls, obj):
        s = obj.get("structured")
        if s is not None:
            s = StructuredPart(np.array(s["mu_hat"], dtype=float),
                               np.array(s["sigma_hat"], dtype=float),
                               float(s["beta_mu"]), float(s["beta_sigma"]),
                               _nan(s.get("zeta_mu")))
        return cls(np.array(obj["w_hat"], dtype=float), float(obj["beta_w"]),
                   float(obj["delta"]), bool(obj.get("certified", True)), s,
                   _nan(obj.get("zeta_w")))


def _num(x):
    # JSON has no NaN
    return None if x is None or math.isnan(x) else float(x)


def _nan(x):
    return float("nan") if x is None else float(x)


def trivial_ambiguity(nw, r_w, delta=0.0):
    """Prior-only set ``W_hat = 0, beta = r_w^2``; holds with certainty."""
    return AmbiguitySet(np.zeros((nw, nw)), r_w ** 2, delta, True)


def structured_moment(mu, sigma):
    """``E[w w^T]`` for ``w = (1, w~)`` with mean mu and covariance sigma."""
    mu = np.asarray(mu, dtype=float)
    v = np.concatenate([[1.0], mu])
    W = np.outer(v, v)
    W[1:, 1:] += sym_matrix(sigma)
    return W


# regression targets

def _regression_parts(M, data):
    """Tensor, regressor rows and response rows of the moment regression.

    For a structured model the known deterministic part is removed first
    and the random part ``M~`` is used.
    """
    if data.z.shape[1] != M.nz or data.x_next.shape[1] != M.nx:
        raise DimensionMismatch(
            f"data has (nz, nx) = {data.z.shape[1], data.x_next.shape[1]}, "
            f"model has {(M.nz, M.nx)}")
    if M.structured:
        y = data.x_next - data.z @ M.deterministic.T
        return M.tilde(), y
    return M, data.x_next


def _check_rank(S, need, what):
    if S.shape[0] < need:
        raise InsufficientSamples(f"need at least {need} samples, got {S.shape[0]}")
    r = numerical_rank(S)
    if r < need:
        raise RankDeficientData(f"{what} have rank {r} < {need}")


def _gram(T, S):
    """``sum_i C_i^T C_i`` with ``C_i = T x_2 S[i]``, via ``T_(3) (S^T S kron I) T_(3)^T``."""
    R = S.T @ S
    return np.einsum("abc,bd,ade->ce", T, R, T, optimize=True)


def _rhs(T, S, Y):
    """``sum_i C_i^T y_i``."""
    return np.einsum("abc,ba->c", T, S.T @ Y, optimize=True)


@dataclass
class _Fit:
    theta: np.ndarray
    gram_pinv: np.ndarray
    rank: int
    tensor: np.ndarray
    regressors: np.ndarray = field(repr=False)


def _moment_fit(M, data):
    Mr, y = _regression_parts(M, data)
    S = svec_outer_rows(data.z)
    _check_rank(S, sd(M.nz), "regressors z(*)z")
    Wt = Mr.skron_tensor
    G, rank = psd_pinv(_gram(Wt, S))
    theta = G @ _rhs(Wt, S, svec_outer_rows(y))
    return _Fit(theta, G, rank, Wt, S), Mr.nw


def build_regression(M, data):
    """Stacked least-squares problem ``Z_N svec(W) ~ Y_N``.

    Block i of ``Z_N`` is ``(M (*) M) x_2 (z_i (*) z_i)`` and block i of
    ``Y_N`` is ``svec(x_{i+1} x_{i+1}^T)``.  This materializes the full
    matrices and is meant for inspection and small problems; the
    estimators below never form it.
    """
    Mr, y = _regression_parts(M, data)
    if data.N < 1:
        raise InsufficientSamples("need at least one sample")
    S = svec_outer_rows(data.z)
    Wt = Mr.skron_tensor
    Z = np.einsum("abc,nb->nac", Wt, S).reshape(-1, Wt.shape[2])
    Y = svec_outer_rows(y).reshape(-1)
    return Z, Y


def ls_second_moment(M, data):
    """Least-squares estimate ``svec(W_hat) = pinv(Z_N) Y_N``.

    The estimate is not projected onto the PSD cone.  Only its component
    in the row space of ``(M (*) M)_(3)`` is identified; the rest is set
    to zero, which leaves the estimated moment dynamics unaffected.
    """
    fit, _ = _moment_fit(M, data)
    return unsvec(fit.theta)


def _zeta_w_from_fit(fit, nw):
    norms = sample_op_norms(fit.gram_pinv, fit.tensor, fit.regressors)
    return math.sqrt(nw) * norms


def zeta_w(M, data):
    """Sensitivity ``zeta_W = sqrt(sum_i (sqrt(nw) ||H_i||_2)^2)``.

    ``H_i = pinv(sum_j W(z_j z_j^T)) W(z_i z_i^T)`` where
    ``W(Z) = W_(3) ((Z (*) Z) kron I) W_(3)^T`` and ``W = M (*) M``.
    """
    fit, nw = _moment_fit(M, data)
    return float(np.linalg.norm(_zeta_w_from_fit(fit, nw)))


def second_moment_ambiguity(M, data, delta):
    """Least-squares moment estimate with radius ``r_w^2 zeta_W sqrt(2 ln(2 nw/delta))``."""
    _check_delta(delta)
    fit, nw = _moment_fit(M, data)
    bounds = _zeta_w_from_fit(fit, nw)
    beta = matrix_hoeffding_radius(data.r_w ** 2 * bounds, nw, delta)
    return AmbiguitySet(unsvec(fit.theta), beta, delta, certified=data.certified,
                        zeta_w=float(np.linalg.norm(bounds)))


def kurtosis_matrix(Z, r_z):
    """Sample estimate of ``E[(z (*) z)(z (*) z)^T] / r_z^4``."""
    S = svec_outer_rows(Z)
    return S.T @ S / (S.shape[0] * r_z ** 4)


def _bound_constants(M, kurtosis, delta):
    _check_delta(delta)
    Mr = M.tilde() if M.structured else M
    Wt = Mr.skron_tensor
    kurt = sym_matrix(kurtosis, tol=1e-8)
    if kurt.shape != (Wt.shape[1],) * 2:
        raise DimensionMismatch(f"kurtosis must be {Wt.shape[1]}x{Wt.shape[1]}")
    psd_check(kurt, "kurtosis")
    W3 = matricize(Wt, 3)
    d_w = numerical_rank(W3)
    Gk = W3 @ np.kron(kurt, np.eye(Wt.shape[0])) @ W3.T
    gamma = float(np.linalg.eigvalsh(Gk)[::-1][d_w - 1])
    tau = math.sqrt(2.0 * math.log(2.0 * d_w / delta))
    wn2 = flattening_norm_ub(Wt) ** 2
    return gamma, tau, wn2, Mr.nw


def sample_count_threshold(M, kurtosis, delta):
    """Sample count above which `predicted_zeta_w` is finite."""
    gamma, tau, wn2, _ = _bound_constants(M, kurtosis, delta)
    return (wn2 * tau / gamma) ** 2 if gamma > 0 else math.inf


def predicted_zeta_w(M, kurtosis, N, delta):
    """A priori high-probability bound on ``zeta_W``.

    ``sqrt(nw) ||W||^2 / (sqrt(N) gamma_W - ||W||^2 tau_W)`` with
    ``gamma_W`` the ``d_W``-th largest eigenvalue of
    ``W_(3) (kurtosis kron I) W_(3)^T``, ``d_W = rank W_(3)`` and
    ``tau_W = sqrt(2 ln(2 d_W / delta))``.  The tensor norm ``||W||`` is
    replaced by the smallest flattening norm, an upper bound, so the
    result remains a valid bound.
    """
    gamma, tau, wn2, nw = _bound_constants(M, kurtosis, delta)
    n_min = (wn2 * tau / gamma) ** 2 if gamma > 0 else math.inf
    if not N > n_min:
        raise SampleCountBelowThreshold(f"bound needs N > {n_min:.4g}, got {N}")
    return math.sqrt(nw) * wn2 / (math.sqrt(N) * gamma - wn2 * tau)


# directly observable disturbances

def noise_observable(M, z_probe=None, reps=10, rng=None):
    """Randomized check that ``M x_2 z`` has full column rank for generic z.

    Samples `reps` points from the unit ball (plus `z_probe` when given).
    For a structured model the random part is checked.
    """
    Mr = M.tilde() if M.structured else M
    if Mr.nx < Mr.nw:
        return False
    rng = np.random.default_rng(rng)
    d = rng.standard_normal((reps, M.nz))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    probes = list(d * rng.random((reps, 1)) ** (1.0 / M.nz))
    if z_probe is not None:
        probes.append(np.asarray(z_probe, dtype=float))
    for z in probes:
        if numerical_rank(np.einsum("ijk,j->ik", Mr.tensor, z)) < Mr.nw:
            return False
    return True


def recover_disturbances(M, data, rtol=1e-8):
    """Solve ``x_{i+1} = (M x_2 z_i) w_i`` for every transition.

    Returns an array of shape (N, nw); for a structured model the first
    coordinate is the constant 1.
    """
    Mr, y = _regression_parts(M, data)
    A = np.einsum("ijk,nj->nik", Mr.tensor, data.z)
    w = np.einsum("nki,ni->nk", np.linalg.pinv(A, rcond=TAU), y)
    resid = np.linalg.norm(np.einsum("nik,nk->ni", A, w) - y, axis=1)
    scale = np.linalg.norm(y, axis=1)
    s = np.linalg.svd(A, compute_uv=False)
    top = s[:, :1]
    rank = np.sum(s > TAU * np.where(top > 0, top, np.inf), axis=1)
    for i in range(data.N):
        if resid[i] > rtol * scale[i] + 1e-14:
            raise InconsistentMeasurement(i, resid[i])
        if rank[i] < Mr.nw:
            raise NotObservable(i)
    if M.structured:
        w = np.hstack([np.ones((data.N, 1)), w])
    return w


def direct_ambiguity(M, data, delta):
    """Ambiguity set from recovered disturbances and the direct-sample radius."""
    w = recover_disturbances(M, data)
    if M.structured:
        w = w[:, 1:]
    W_hat, beta = direct_moment_bound(w, data.r_w, delta)
    return AmbiguitySet(W_hat, beta, delta, certified=data.certified)


# structured model: mean and covariance of the random part

def _mean_fit(M, data):
    if not M.structured:
        raise NotStructured("mean estimation needs a structured model")
    Mr, y = _regression_parts(M, data)
    _check_rank(data.z, M.nz, "states z")
    T = Mr.tensor
    G, rank = psd_pinv(_gram(T, data.z))
    mu = G @ _rhs(T, data.z, y)
    return mu, G, T


def ls_mean(M, data):
    """Least-squares mean ``mu_hat = pinv(Z^mu) Y^mu`` of the random disturbance part."""
    return _mean_fit(M, data)[0]


def mean_ambiguity(M, data, delta):
    """Mean estimate with radius ``r_w zeta_mu (2 + sqrt(2 ln(1/delta)))``.

    Returns
    -------
    mu_hat, beta_mu, zeta_mu
    """
    _check_delta(delta)
    mu, G, T = _mean_fit(M, data)
    norms = sample_op_norms(G, T, data.z)
    beta = vector_hoeffding_radius(data.r_w * norms, delta)
    return mu, beta, float(np.linalg.norm(norms))


def structured_ambiguity(M, data, delta=0.05, delta_mu=None, delta_w=None):
    """Structured set with ``Sigma_hat = W~_hat - mu mu^T``.

    Without explicit ``delta_mu``/``delta_w`` the confidence budget is
    split evenly; the set holds with probability at least
    ``1 - delta_mu - delta_w``.
    """
    if not M.structured:
        raise NotStructured("structured_ambiguity needs a structured model")
    if delta_mu is None:
        delta_mu = delta / 2
    if delta_w is None:
        delta_w = delta / 2
    mu, beta_mu, zeta_mu = mean_ambiguity(M, data, delta_mu)
    amb = second_moment_ambiguity(M, data, delta_w)
    sigma = amb.w_hat - np.outer(mu, mu)
    beta_sigma = amb.beta_w + beta_mu * (beta_mu + 2 * np.linalg.norm(mu))
    part = StructuredPart(mu, sigma, beta_mu, beta_sigma, zeta_mu)
    return AmbiguitySet(amb.w_hat, amb.beta_w, delta_mu + delta_w, amb.certified,
                        part, amb.zeta_w)


def operator_relative_error(M, W_hat, W_true):
    """``||E_hat - E*||_2 / ||E*||_2`` on the svec-coordinate matrices."""
    E_hat = moment_dynamics(M, W_hat).op_matrix
    E_true = moment_dynamics(M, W_true).op_matrix
    return float(np.linalg.norm(E_hat - E_true, 2) / np.linalg.norm(E_true, 2))
