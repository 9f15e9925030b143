"""Disturbance samplers and dataset generation.

Random streams are numpy ``Generator`` objects; parallel repeats should
each receive their own stream, e.g. from ``SeedSequence.spawn``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, TrajectoryBlowup
from .identify import Dataset, Generation
from .model import step_batch

STATE_CAP = 1e8


def sample_ball(center, radius, rng, size=None):
    """Uniform samples from the solid Euclidean ball.

    Direction is uniform on the sphere and the radius is ``r u^(1/n)``.
    Returns one vector, or an array of shape ``(size, n)``.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    n = center.shape[0]
    m = 1 if size is None else int(size)
    d = rng.standard_normal((m, n))
    nd = np.linalg.norm(d, axis=1, keepdims=True)
    nd[nd == 0] = 1.0
    r = radius * rng.random((m, 1)) ** (1.0 / n)
    out = center + d / nd * r
    return out[0] if size is None else out


@dataclass(frozen=True)
class UniformBall:
    """Uniform distribution on ``{w : ||w - center|| <= radius}``."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self):
        return len(self.center)

    @property
    def norm_bound(self):
        return float(np.linalg.norm(self.center) + self.radius)

    @property
    def mean(self):
        return np.array(self.center)

    def second_moment(self):
        c = np.array(self.center)
        return self.radius ** 2 / (self.dim + 2) * np.eye(self.dim) + np.outer(c, c)

    def sample(self, rng, size=None):
        return sample_ball(np.array(self.center), self.radius, rng, size)


@dataclass(frozen=True)
class FixedFirstCoordEllipsoid:
    """``w = (1, w~)`` with w~ uniform on an axis-aligned, possibly degenerate ellipsoid.

    ``scales`` are the target diagonal of ``E[w w^T]``; ``scales[0]``
    must be 1.
    """

    scales: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in np.atleast_1d(self.scales))
        if len(s) < 1 or s[0] != 1.0 or min(s) < 0:
            raise ValueError("scales must start with 1 and be nonnegative")
        object.__setattr__(self, "scales", s)

    @property
    def dim(self):
        return len(self.scales)

    @property
    def norm_bound(self):
        # bound on the random part
        k = self.dim - 1
        return float(np.sqrt((k + 2) * max(self.scales[1:], default=0.0)))

    def second_moment(self):
        return np.diag(self.scales)

    def sample(self, rng, size=None):
        k = self.dim - 1
        m = 1 if size is None else int(size)
        u = sample_ball(np.zeros(k), 1.0, rng, m) if k else np.zeros((m, 0))
        w = np.hstack([np.ones((m, 1)), u * np.sqrt((k + 2) * np.array(self.scales[1:]))])
        return w[0] if size is None else w


def _check(M, sampler):
    if sampler.dim != M.nw:
        raise DimensionMismatch(f"sampler dimension {sampler.dim} != nw {M.nw}")


def gen_repeated_init(M_truth, sampler, z_sampler, N, rng, r_w=None, seed=None):
    """N independent one-step transitions from random initial points.

    Parameters
    ----------
    M_truth : ModeTensor
        Tensor the samples of `sampler` are expressed in.
    sampler : object with ``sample(rng, size)``
    z_sampler : callable ``(rng, N) -> (N, nz)`` or None
        Defaults to the uniform unit ball.
    r_w : float, optional
        Norm bound stored in the dataset; defaults to ``sampler.norm_bound``.
    """
    _check(M_truth, sampler)
    if z_sampler is None:
        Z = sample_ball(np.zeros(M_truth.nz), 1.0, rng, N)
        r_z = 1.0
    else:
        Z = np.asarray(z_sampler(rng, N), dtype=float).reshape(N, M_truth.nz)
        r_z = None
    W = sampler.sample(rng, N).reshape(N, M_truth.nw)
    X = step_batch(M_truth, Z, W)
    return Dataset(Z, X, sampler.norm_bound if r_w is None else r_w, r_z,
                   Generation.REPEATED_INIT, None, seed)


def _excite(x, K_exc, delta_radius, nu, rng, n):
    u = x @ np.asarray(K_exc, dtype=float).reshape(nu, -1).T
    if delta_radius > 0:
        u = u + sample_ball(np.zeros(nu), delta_radius, rng, n)
    return u


def gen_rollout(M_truth, sampler, x0, K_exc, delta_radius, T, N, rng, r_w=None, seed=None):
    """N independent rollouts of length T; keeps ``((x_{T-1}, u_{T-1}), x_T)``.

    Inputs are ``u_t = K_exc x_t + delta_t`` with delta_t uniform in a ball.
    """
    if T < 2:
        raise ValueError("rollout length T must be at least 2")
    _check(M_truth, sampler)
    nx, nu = M_truth.nx, M_truth.nu
    x = np.tile(np.asarray(x0, dtype=float).reshape(1, nx), (N, 1))
    for _ in range(T):
        u = _excite(x, K_exc, delta_radius, nu, rng, N)
        z = np.hstack([x, u])
        x = step_batch(M_truth, z, sampler.sample(rng, N).reshape(N, -1))
        if N and np.max(np.abs(x)) > STATE_CAP:
            raise TrajectoryBlowup(f"state magnitude exceeded {STATE_CAP:g}")
    return Dataset(z, x, sampler.norm_bound if r_w is None else r_w, None,
                   Generation.ROLLOUT, T, seed)


def gen_single_trajectory(M_truth, sampler, x0, K_exc, delta_radius, N, rng, r_w=None, seed=None):
    """Consecutive transitions of one trajectory of length N."""
    if N < 1:
        raise ValueError("N must be positive")
    _check(M_truth, sampler)
    nx, nu = M_truth.nx, M_truth.nu
    x = np.asarray(x0, dtype=float).reshape(1, nx)
    Z = np.empty((N, M_truth.nz))
    X = np.empty((N, nx))
    for t in range(N):
        u = _excite(x, K_exc, delta_radius, nu, rng, 1)
        Z[t] = np.hstack([x, u])[0]
        x = step_batch(M_truth, Z[t:t + 1], sampler.sample(rng, 1).reshape(1, -1))
        if np.max(np.abs(x)) > STATE_CAP:
            raise TrajectoryBlowup(f"state magnitude exceeded {STATE_CAP:g} at t={t}")
        X[t] = x[0]
    return Dataset(Z, X, sampler.norm_bound if r_w is None else r_w, None,
                   Generation.SINGLE_TRAJECTORY, N, seed)


@dataclass(frozen=True)
class WithUnitFirst:
    """``w = (1, w~)`` with w~ drawn from `inner`, for structured models."""

    inner: object

    @property
    def dim(self):
        return self.inner.dim + 1

    @property
    def norm_bound(self):
        # radii of the structured estimators refer to the random part
        return self.inner.norm_bound

    @property
    def mean(self):
        return np.concatenate([[1.0], self.inner.mean])

    def second_moment(self):
        mu = self.inner.mean
        W = np.empty((self.dim, self.dim))
        W[0, 0] = 1.0
        W[0, 1:] = W[1:, 0] = mu
        W[1:, 1:] = self.inner.second_moment()
        return W

    def sample(self, rng, size=None):
        w = self.inner.sample(rng, 1 if size is None else size).reshape(-1, self.inner.dim)
        w = np.hstack([np.ones((w.shape[0], 1)), w])
        return w[0] if size is None else w
