"""LQR synthesis for multiplicative-noise systems by Riccati value iteration.

The generalized Riccati map is

    R(P) = Q + F*(P) - H*(P)^T (R + G*(P))^{-1} H*(P)

where ``[[F*, H*^T], [H*, G*]] = E*(W; P)`` is the adjoint moment
dynamics.  Iterating from ``P = 0`` gives a nondecreasing sequence that
converges exactly when a mean-square stabilizing gain exists; the
distributionally robust controller is the one computed at the upper end
``W_hat + beta I`` of the ambiguity interval.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cpop import STAB_TOL, _lyap, psd_check, spectral_radius
from .errors import (DimensionMismatch, Diverged, NotConverged, NotPd,
                     SingularInnerMatrix, UnstableClosedLoop, WBarNotPsd)
from .identify import structured_moment
from .model import closed_loop, lift_gain, moment_dynamics
from .symm import svec, sym_matrix, unsvec

TOL = 1e-10
MAX_ITER = 10_000
BLOWUP = 1e12


@dataclass(frozen=True, eq=False)
class LqrSpec:
    """Stage cost ``x^T Q x + u^T R u`` and initial second moment ``X0``."""

    Q: np.ndarray
    R: np.ndarray
    X0: np.ndarray

    def __post_init__(self):
        for name, pd in (("Q", True), ("R", True), ("X0", False)):
            X = sym_matrix(getattr(self, name))
            ev = np.linalg.eigvalsh(X)
            if pd and ev[0] <= 0:
                raise NotPd(ev[0], name)
            if not pd:
                psd_check(X, name)
            object.__setattr__(self, name, X)
        if self.X0.shape != self.Q.shape:
            raise DimensionMismatch("X0 and Q differ in size")

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["Q"], dtype=float), np.array(obj["R"], dtype=float),
                   np.array(obj["X0"], dtype=float))


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    P: np.ndarray
    K: np.ndarray
    value: float
    iterations: int
    residual: float
    rho_closed_loop: float

    def to_json(self):
        return {"P": self.P.tolist(), "K": self.K.tolist(), "value": self.value,
                "iterations": self.iterations, "residual": self.residual,
                "rho_closed_loop": self.rho_closed_loop}


def _check_dims(M, spec):
    if spec.Q.shape != (M.nx, M.nx) or spec.R.shape != (M.nu, M.nu):
        raise DimensionMismatch("cost matrices do not match the model dimensions")


class _Riccati:
    """Riccati map for fixed (M, W) with the adjoint matrix precomputed."""

    def __init__(self, M, W, spec):
        _check_dims(M, spec)
        self.nx = M.nx
        self.Et = moment_dynamics(M, W).op_matrix.T
        self.spec = spec

    def blocks(self, P):
        S = unsvec(self.Et @ svec(P))
        nx = self.nx
        return S[:nx, :nx], S[nx:, :nx], S[nx:, nx:]

    def gain_and_value(self, P):
        F, H, G = self.blocks(P)
        inner = self.spec.R + G
        try:
            cf = scipy.linalg.cho_factor(inner)
        except np.linalg.LinAlgError as exc:
            raise SingularInnerMatrix("R + G*(P) is not positive definite") from exc
        if np.min(np.abs(np.diag(cf[0]))) ** 2 <= 1e-14 * np.max(np.abs(inner)):
            raise SingularInnerMatrix("R + G*(P) is numerically singular")
        K = -scipy.linalg.cho_solve(cf, H)
        Pn = self.spec.Q + F + H.T @ K
        return K, 0.5 * (Pn + Pn.T)

    def __call__(self, P):
        return self.gain_and_value(P)[1]


def riccati_apply(M, W, spec, P):
    """One application of the generalized Riccati map."""
    P = sym_matrix(P)
    if P.shape != (M.nx, M.nx):
        raise DimensionMismatch(f"P must be {M.nx}x{M.nx}")
    return _Riccati(M, W, spec)(P)


def riccati_gain(M, W, spec, P):
    """``K = -(R + G*(P))^{-1} H*(P)``."""
    return _Riccati(M, W, spec).gain_and_value(sym_matrix(P))[0]


def value_iteration(M, W, spec):
    """Yield ``P_1, P_2, ...`` with ``P_{k+1} = R(P_k)`` and ``P_0 = 0``."""
    ric = _Riccati(M, W, spec)
    P = np.zeros((M.nx, M.nx))
    while True:
        P = ric(P)
        yield P


def riccati_fixed_point(M, W, spec, tol=TOL, max_iter=MAX_ITER):
    """Optimal controller of the multiplicative-noise LQR problem with moment W.

    Raises
    ------
    Diverged
        The iterates exceed ``1e12 ||Q||_F``: no stabilizing gain exists.
    NotConverged
        `max_iter` iterations without meeting the relative tolerance.
    """
    W = sym_matrix(W)
    psd_check(W, "W")
    ric = _Riccati(M, W, spec)
    cap = BLOWUP * np.linalg.norm(spec.Q)
    P = np.zeros((M.nx, M.nx))
    for k in range(1, max_iter + 1):
        Pn = ric(P)
        if not np.all(np.isfinite(Pn)) or np.linalg.norm(Pn) > cap:
            raise Diverged(f"Riccati iterates exceeded {cap:.3g} after {k} steps; "
                           "no mean-square stabilizing controller")
        done = np.linalg.norm(Pn - P) <= tol * np.linalg.norm(P)
        P = Pn
        if done:
            break
    else:
        raise NotConverged(f"no convergence within {max_iter} iterations")
    K, RP = ric.gain_and_value(P)
    rho = spectral_radius(closed_loop(M, W, K))
    if rho >= 1.0 - STAB_TOL:
        raise Diverged(f"fixed point does not stabilize (rho = {rho:.6g})")
    return SynthesisResult(P, K, float(np.trace(P @ spec.X0)), k,
                           float(np.linalg.norm(RP - P)), rho)


def dr_synthesize(M, amb, spec, tol=TOL, max_iter=MAX_ITER):
    """Distributionally robust controller for the ambiguity interval of `amb`.

    Runs the Riccati iteration at ``W_bar = W_hat + beta_w I``; the gain
    stabilizes every moment in ``[W_hat - beta_w I, W_bar]``.
    """
    if M.structured:
        raise DimensionMismatch("use structured_ce_synthesize for structured models")
    W_bar = amb.w_upper
    ev = np.linalg.eigvalsh(W_bar)
    if ev[0] < -1e-9 * max(1.0, ev[-1]):
        raise WBarNotPsd(ev[0])
    try:
        return riccati_fixed_point(M, W_bar, spec, tol, max_iter)
    except Diverged as exc:
        raise Diverged(f"ambiguity set too large to stabilize: {exc}") from exc


def structured_ce_synthesize(M, amb, spec, tol=TOL, max_iter=MAX_ITER):
    """Certainty-equivalent controller from a structured ambiguity set."""
    s = amb.structured
    if s is None:
        raise DimensionMismatch("ambiguity set has no structured part")
    W = structured_moment(s.mu_hat, s.sigma_hat)
    ev = np.linalg.eigvalsh(W)
    if ev[0] < 0:
        # covariance estimate slightly indefinite: clip before synthesis
        lam, U = np.linalg.eigh(W)
        W = (U * np.maximum(lam, 0.0)) @ U.T
    return riccati_fixed_point(M, W, spec, tol, max_iter)


def closed_loop_cost(M, W_true, K, spec):
    """``tr[P X0]`` where ``P - E_K*(P) = Q + K^T R K``.

    Raises `UnstableClosedLoop` when the cost is infinite.
    """
    _check_dims(M, spec)
    K = np.asarray(K, dtype=float).reshape(M.nu, M.nx)
    op = closed_loop(M, W_true, K)
    rho = spectral_radius(op)
    if rho >= 1.0 - STAB_TOL:
        raise UnstableClosedLoop(rho)
    L = lift_gain(K, M.nx)
    Hc = L.T @ scipy.linalg.block_diag(spec.Q, spec.R) @ L
    P = _lyap(op.op_matrix, 0.5 * (Hc + Hc.T))
    return float(np.trace(P @ spec.X0))


def relative_suboptimality(M, W_true, K, spec, optimal=None):
    """``(J(K) - J(K*)) / J(K*)`` on the true moment dynamics.

    `optimal` may carry a precomputed `SynthesisResult` for ``W_true``.
    """
    if optimal is None:
        optimal = riccati_fixed_point(M, W_true, spec)
    j_opt = closed_loop_cost(M, W_true, optimal.K, spec)
    return (closed_loop_cost(M, W_true, K, spec) - j_opt) / j_opt
