import math

import numpy as np
import pytest

from mnlqr.cpop import apply
from mnlqr.errors import (DimensionMismatch, InconsistentMeasurement, InsufficientSamples,
                          InvalidDelta, NotObservable, NotStructured, RankDeficientData,
                          SampleCountBelowThreshold)
from mnlqr.experiments import cell_rng, example_config, generate, parse_config
from mnlqr.identify import (AmbiguitySet, Dataset, Generation, StructuredPart,
                            build_regression, direct_ambiguity, kurtosis_matrix, ls_mean,
                            ls_second_moment, mean_ambiguity, noise_observable,
                            operator_relative_error, predicted_zeta_w, recover_disturbances,
                            sample_count_threshold, second_moment_ambiguity,
                            structured_ambiguity, structured_moment, trivial_ambiguity, zeta_w)
from mnlqr.model import ModeTensor, model_free_basis, moment_dynamics, step_batch
from mnlqr.simulate import UniformBall, gen_repeated_init, gen_single_trajectory, sample_ball
from mnlqr.symm import sd, svec, unsvec
from mnlqr.tensor import matricize

SCALAR = ModeTensor(np.ones((1, 1, 1)), nu=0)


def scalar_data(z, w):
    z = np.asarray(z, dtype=float)[:, None]
    return Dataset(z, z * np.asarray(w, dtype=float)[:, None], r_w=max(1.0, np.abs(w).max()))


def dense_zeta(M, data):
    """zeta_W from the stacked regression matrix, one block at a time."""
    Z, _ = build_regression(M, data)
    p = sd(M.nx)
    blocks = [Z[i * p:(i + 1) * p] for i in range(data.N)]
    G = np.linalg.pinv(Z.T @ Z, rcond=1e-10, hermitian=True)
    H = [G @ (C.T @ C) for C in blocks]
    return math.sqrt(sum((math.sqrt(M.nw) * np.linalg.norm(h, 2)) ** 2 for h in H)), H


def toy_exp(**kw):
    cfg = example_config("toy")
    cfg.update(kw)
    return parse_config(cfg)


# regression assembly

def test_scalar_regression():
    d = scalar_data([0.5, -2.0, 1.5], [0.3, 0.1, -0.2])
    Z, Y = build_regression(SCALAR, d)
    np.testing.assert_allclose(Z[:, 0], d.z[:, 0] ** 2)
    np.testing.assert_allclose(Y, d.x_next[:, 0] ** 2)


def test_scalar_constant_disturbance():
    c = 0.7
    d = scalar_data([0.5, -2.0, 1.5, 0.2], [c] * 4)
    Z, Y = build_regression(SCALAR, d)
    np.testing.assert_allclose(Y, c ** 2 * Z @ np.ones(1))
    np.testing.assert_allclose(ls_second_moment(SCALAR, d), [[c ** 2]], rtol=1e-14)


def test_stacked_form_equals_blocks(example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0), 1.0), None, 7, rng)
    Z, Y = build_regression(example_v, d)
    S = np.array([svec(np.outer(z, z)) for z in d.z])
    W3 = matricize(example_v.skron_tensor, 3)
    np.testing.assert_allclose(Z, np.kron(S, np.eye(3)) @ W3.T, atol=1e-12)
    np.testing.assert_allclose(Y, np.concatenate([svec(np.outer(x, x)) for x in d.x_next]), atol=1e-14)


def test_ls_matches_dense_pinv(example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0.1), 0.25), None, 300, rng)
    Z, Y = build_regression(example_v, d)
    np.testing.assert_allclose(svec(ls_second_moment(example_v, d)),
                               np.linalg.pinv(Z, rcond=1e-10) @ Y, atol=1e-10)


def test_errors(example_v, rng):
    with pytest.raises(InsufficientSamples):
        ls_second_moment(example_v, Dataset(np.ones((2, 3)), np.ones((2, 2)), 1.0))
    z = np.tile([1.0, 0.0, 0.0], (20, 1))
    with pytest.raises(RankDeficientData):
        ls_second_moment(example_v, Dataset(z, np.ones((20, 2)), 1.0))
    with pytest.raises(DimensionMismatch):
        ls_second_moment(example_v, Dataset(np.ones((20, 2)), np.ones((20, 2)), 1.0))


def test_ls_equals_direct_when_observable_constant(rng):
    # nx >= nw, so disturbances are recoverable from each transition
    M = ModeTensor(rng.standard_normal((3, 4, 2)), nu=1)
    w = np.array([0.2, -0.1])
    z = sample_ball(np.zeros(4), 1.0, rng, 50)
    d = Dataset(z, step_batch(M, z, np.tile(w, (50, 1))), r_w=0.5)
    np.testing.assert_allclose(ls_second_moment(M, d), direct_ambiguity(M, d, 0.05).w_hat, atol=1e-8)


def test_ls_and_direct_agree_statistically(rng):
    M = ModeTensor(rng.standard_normal((3, 4, 2)), nu=1)
    ball = UniformBall((0.1, 0.2), 0.3)
    d = gen_repeated_init(M, ball, None, 5000, rng)
    W = ball.second_moment()
    assert np.linalg.norm(ls_second_moment(M, d) - W, 2) < 0.02
    assert np.linalg.norm(direct_ambiguity(M, d, 0.05).w_hat - W, 2) < 0.02


# sensitivity zeta_W

def test_zeta_single_scalar_sample():
    assert zeta_w(SCALAR, scalar_data([0.8], [0.1])) == pytest.approx(1.0, rel=1e-14)


def test_zeta_matches_dense(example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0.1), 0.25), None, 60, rng)
    ref, _ = dense_zeta(example_v, d)
    assert zeta_w(example_v, d) == pytest.approx(ref, rel=1e-9)


def test_sum_of_h_is_projector(rng):
    M = model_free_basis(2, 1)
    d = gen_repeated_init(M, UniformBall(np.zeros(6), 0.3), None, 40, rng)
    _, H = dense_zeta(M, d)
    W3 = matricize(M.skron_tensor, 3)
    proj = np.linalg.pinv(W3.T, rcond=1e-10) @ W3.T
    np.testing.assert_allclose(sum(H), proj, atol=1e-9)


def test_zeta_rate_toy():
    exp = toy_exp()
    ratios = []
    for rep in range(5):
        z1 = zeta_w(exp.model, generate(exp, 500, cell_rng(3, 0, rep)))
        z4 = zeta_w(exp.model, generate(exp, 2000, cell_rng(3, 1, rep)))
        ratios.append(z4 / z1)
    assert 0.4 <= np.median(ratios) <= 0.65


def test_zeta_independent_of_noise(example_v, rng):
    z = sample_ball(np.zeros(3), 1.0, rng, 80)
    ball = UniformBall((0, 0, 0.1), 0.25)
    d1 = Dataset(z, step_batch(example_v, z, ball.sample(rng, 80)), 0.35)
    d2 = Dataset(z, step_batch(example_v, z, ball.sample(rng, 80)), 0.35)
    a1, a2 = second_moment_ambiguity(example_v, d1, 0.05), second_moment_ambiguity(example_v, d2, 0.05)
    assert a1.zeta_w == a2.zeta_w and a1.beta_w == a2.beta_w
    assert not np.allclose(a1.w_hat, a2.w_hat)


def test_beta_formula(example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0.1), 0.25), None, 100, rng, r_w=0.35)
    amb = second_moment_ambiguity(example_v, d, 0.05)
    assert amb.beta_w == pytest.approx(0.35 ** 2 * amb.zeta_w * math.sqrt(2 * math.log(2 * 3 / 0.05)),
                                       rel=1e-12)
    with pytest.raises(InvalidDelta):
        second_moment_ambiguity(example_v, d, 1.5)


def test_ambiguity_validation():
    assert AmbiguitySet(np.eye(2), 0.0, 0.1).beta_w == 0.0
    with pytest.raises(ValueError):
        AmbiguitySet(np.eye(2), -1.0, 0.1)
    part = StructuredPart(np.array([0.1]), np.eye(1), 0.2, 0.5)
    with pytest.raises(ValueError):
        AmbiguitySet(np.eye(1), 0.1, 0.1, structured=part)
    zero_mu = StructuredPart(np.array([0.3]), np.eye(1), 0.0, 0.1)
    assert AmbiguitySet(np.eye(1), 0.1, 0.1, structured=zero_mu).structured.beta_sigma == 0.1


def test_ambiguity_json_roundtrip():
    part = StructuredPart(np.array([0.1, 0.0]), np.eye(2), 0.2, 0.3 + 0.2 * (0.2 + 0.2))
    amb = AmbiguitySet(np.eye(2), 0.3, 0.05, True, part, 1.5)
    back = AmbiguitySet.from_json(amb.to_json())
    np.testing.assert_array_equal(back.w_hat, amb.w_hat)
    assert back.structured.beta_sigma == pytest.approx(part.beta_sigma)
    assert math.isnan(AmbiguitySet.from_json(AmbiguitySet(np.eye(1), 0.1, 0.1).to_json()).zeta_w)


def test_interval_contains_true_operator():
    exp = toy_exp()
    rng = np.random.default_rng(17)
    Zs = []
    for _ in range(50):
        G = rng.standard_normal((3, 3))
        Zs.append(G @ G.T)
    E_true = moment_dynamics(exp.model, exp.w_true)
    fails = 0
    for rep in range(300):
        amb = second_moment_ambiguity(exp.model, generate(exp, 200, cell_rng(5, 0, rep)), 0.05)
        hi, lo = moment_dynamics(exp.model, amb.w_upper), moment_dynamics(exp.model, amb.w_lower)
        for Z in Zs:
            t = apply(E_true, Z)
            if (np.linalg.eigvalsh(apply(hi, Z) - t)[0] < -1e-10
                    or np.linalg.eigvalsh(t - apply(lo, Z))[0] < -1e-10):
                fails += 1
                break
    assert fails / 300 <= 0.05 + 0.03


def test_trivial_ambiguity():
    amb = trivial_ambiguity(3, 0.35)
    np.testing.assert_allclose(amb.w_upper, 0.35 ** 2 * np.eye(3))


def test_operator_relative_error(example_v):
    W = np.eye(3)
    assert operator_relative_error(example_v, W, W) == 0.0
    assert operator_relative_error(example_v, 1.1 * W, W) == pytest.approx(0.1)


# kernel of the moment parametrization

def test_bias_lies_in_kernel(rng):
    V = toy_exp().truth
    MF = model_free_basis(2, 1)
    v = np.array([0.1, -0.2, 0.15])
    z = sample_ball(np.zeros(3), 1.0, rng, 100)
    d = Dataset(z, step_batch(V, z, np.tile(v, (100, 1))), r_w=1.0)
    w = V.mode3.T @ v  # model-free coordinates are vec([A(v), B(v)])
    W_true = np.outer(w, w)
    W_hat = ls_second_moment(MF, d)
    assert np.linalg.norm(W_hat - W_true) > 1e-3
    diff = moment_dynamics(MF, W_hat).op_matrix - moment_dynamics(MF, W_true).op_matrix
    assert np.abs(diff).max() <= 1e-9


# a priori sensitivity bound

def test_predicted_zeta_threshold_and_bound():
    exp = toy_exp()
    d = generate(exp, 20000, cell_rng(9, 0, 0))
    K = kurtosis_matrix(d.z, 1.0)
    n0 = sample_count_threshold(exp.model, K, 0.05)
    assert 1e3 < n0 < math.inf
    with pytest.raises(SampleCountBelowThreshold):
        predicted_zeta_w(exp.model, K, int(n0 / 2), 0.05)
    N = int(n0 * 1.1)
    bound = predicted_zeta_w(exp.model, K, N, 0.05)
    assert 0 < bound < math.inf
    hits = [zeta_w(exp.model, generate(exp, N, cell_rng(9, 1, r))) <= bound for r in range(30)]
    assert np.mean(hits) >= 1 - 0.05 - 0.03


def test_kurtosis_scale_invariance(rng):
    exp = toy_exp()
    z = sample_ball(np.zeros(3), 1.0, rng, 5000)
    K1, K2 = kurtosis_matrix(z, 1.0), kurtosis_matrix(2 * z, 2.0)
    np.testing.assert_allclose(K1, K2, atol=1e-14)
    assert sample_count_threshold(exp.model, K1, 0.05) == pytest.approx(
        sample_count_threshold(exp.model, K2, 0.05), rel=1e-10)


# observable disturbances

def test_noise_observable(example_v, rng):
    M1 = ModeTensor(rng.standard_normal((2, 3, 1)), nu=1)
    assert noise_observable(M1, rng=0)
    assert not noise_observable(model_free_basis(2, 1), rng=0)
    T = rng.standard_normal((3, 4, 2))
    T[2] = 0.0
    T[1] = T[0]
    assert not noise_observable(ModeTensor(T, nu=1), rng=0)


def test_recover_disturbances_roundtrip(rng):
    M = ModeTensor(rng.standard_normal((3, 4, 2)), nu=1)
    z = sample_ball(np.zeros(4), 1.0, rng, 30)
    w = rng.standard_normal((30, 2))
    d = Dataset(z, step_batch(M, z, w), r_w=5.0)
    np.testing.assert_allclose(recover_disturbances(M, d), w, atol=1e-10)


def test_recover_disturbances_errors(rng):
    M = ModeTensor(rng.standard_normal((3, 4, 2)), nu=1)
    z = np.zeros((1, 4))
    with pytest.raises(InconsistentMeasurement) as ei:
        recover_disturbances(M, Dataset(z, np.ones((1, 3)), 1.0))
    assert ei.value.index == 0
    with pytest.raises(NotObservable):
        recover_disturbances(M, Dataset(z, np.zeros((1, 3)), 1.0))


# structured prior

def structured_exp():
    return parse_config(example_config("structured"))


def test_ls_mean_constant_disturbance(rng):
    exp = structured_exp()
    M = exp.model
    mu = np.array([0.01, -0.02, 0.03])
    z = sample_ball(np.zeros(3), 1.0, rng, 50)
    w = np.tile(np.concatenate([[1.0], mu]), (50, 1))
    d = Dataset(z, step_batch(M, z, w), r_w=0.05)
    np.testing.assert_allclose(ls_mean(M, d), mu, atol=1e-12)


def test_mean_needs_structure(example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0), 1.0), None, 20, rng)
    with pytest.raises(NotStructured):
        ls_mean(example_v, d)
    with pytest.raises(NotStructured):
        structured_ambiguity(example_v, d, 0.05)


def test_mean_and_covariance_coverage():
    exp = structured_exp()
    M = exp.model
    mu_true = exp.mu_true
    sigma_true = exp.w_true - np.outer(mu_true, mu_true)
    mu_fail = sig_fail = 0
    reps = 200
    for r in range(reps):
        d = generate(exp, 300, cell_rng(11, 0, r))
        amb = structured_ambiguity(M, d, 0.1)
        s = amb.structured
        mu_fail += np.linalg.norm(s.mu_hat - mu_true) > s.beta_mu
        sig_fail += np.linalg.norm(sigma_true - s.sigma_hat, 2) > s.beta_sigma
    assert mu_fail / reps <= 0.05 + 0.02
    assert sig_fail / reps <= 0.1 + 0.03


def test_structured_set_fields():
    exp = structured_exp()
    d = generate(exp, 500, cell_rng(0, 0, 0))
    amb = structured_ambiguity(exp.model, d, 0.1)
    s = amb.structured
    np.testing.assert_allclose(s.sigma_hat, amb.w_hat - np.outer(s.mu_hat, s.mu_hat))
    assert amb.delta == pytest.approx(0.1)
    mu, beta_mu, zeta_mu = mean_ambiguity(exp.model, d, 0.05)
    assert s.beta_mu == pytest.approx(beta_mu)
    assert beta_mu == pytest.approx(d.r_w * zeta_mu * (2 + math.sqrt(2 * math.log(20))))
    W = structured_moment(s.mu_hat, s.sigma_hat)
    assert W[0, 0] == 1.0
    np.testing.assert_allclose(W[1:, 1:], amb.w_hat, atol=1e-15)


# datasets

def test_dataset_csv_roundtrip(tmp_path, example_v, rng):
    d = gen_repeated_init(example_v, UniformBall((0, 0, 0.1), 0.25), None, 12, rng, seed=4)
    p = tmp_path / "d.csv"
    d.to_csv(p)
    assert p.read_text().splitlines()[0] == "i,z_0,z_1,z_2,xnext_0,xnext_1"
    back = Dataset.from_csv(p)
    np.testing.assert_array_equal(back.z, d.z)
    np.testing.assert_array_equal(back.x_next, d.x_next)
    assert (back.r_w, back.seed, back.generation) == (d.r_w, 4, Generation.REPEATED_INIT)


def test_single_trajectory_not_certified(example_v, rng):
    M = toy_exp().truth
    d = gen_single_trajectory(M, UniformBall((0, 0, 0.1), 0.25), [1.0, 1.0], [[-0.5, -0.2]], 1.0,
                              50, rng)
    assert not d.certified
    assert not second_moment_ambiguity(M, d, 0.05).certified
