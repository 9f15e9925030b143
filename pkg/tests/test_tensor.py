import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mnlqr.errors import InvalidMode, ShapeMismatch
from mnlqr.symm import qd_matrix, svec
from mnlqr.tensor import (flattening_norm_ub, fold, matricize, mode_product,
                          mode_vec_product, tensor_kron, tensor_skron,
                          tensor_spectral_norm_lb, tucker)


def test_matricize_example_mode3(example_v):
    np.testing.assert_array_equal(matricize(example_v.tensor, 3),
                                  [[2, 1, 0, 0, 0, 0], [0, 0, 3, 0, 0, 0], [0, 0, 0, 1, 0, 2]])


def test_matricize_example_mode1(example_v):
    np.testing.assert_array_equal(matricize(example_v.tensor, 1),
                                  [[2, 0, 0, 0, 3, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0, 0, 1, 2]])


def test_matricize_zero():
    for n in (1, 2, 3):
        np.testing.assert_array_equal(matricize(np.zeros((2, 2, 2)), n), np.zeros((2, 4)))


def test_matricize_index_map(rng):
    T = rng.standard_normal((2, 3, 4))
    q1, q2, _ = T.shape
    T1, T2, T3 = (matricize(T, n) for n in (1, 2, 3))
    for i, j, k in itertools.product(*map(range, T.shape)):
        assert T1[i, j + q2 * k] == T[i, j, k]
        assert T2[j, i + q1 * k] == T[i, j, k]
        assert T3[k, i + q1 * j] == T[i, j, k]


def test_invalid_mode(rng):
    with pytest.raises(InvalidMode):
        matricize(np.zeros((2, 2, 2)), 4)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fold_roundtrip(rng, n):
    T = rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(fold(matricize(T, n), n, T.shape), T)


def test_mode_product_identity_and_formula(rng):
    T = rng.standard_normal((2, 3, 2))
    for n in (1, 2, 3):
        np.testing.assert_allclose(mode_product(T, np.eye(T.shape[n - 1]), n), T, atol=0)
    X = rng.standard_normal((4, 3))
    Y = mode_product(T, X, 2)
    brute = np.zeros((2, 4, 2))
    for i, j, k in itertools.product(range(2), range(4), range(2)):
        brute[i, j, k] = sum(X[j, l] * T[i, l, k] for l in range(3))
    np.testing.assert_allclose(Y, brute, atol=1e-14)


def test_mode_product_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        mode_product(np.zeros((2, 3, 2)), np.eye(2), 2)


@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([1, 2, 3]))
def test_mode_product_matricization(seed, n):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((2, 3, 4))
    X = rng.standard_normal((3, T.shape[n - 1]))
    np.testing.assert_allclose(matricize(mode_product(T, X, n), n), X @ matricize(T, n),
                               atol=1e-13)


def test_mode_vec_product_example(example_v):
    np.testing.assert_array_equal(mode_vec_product(example_v.tensor, [1, 0, 0], 3),
                                  [[2, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(mode_vec_product(example_v.tensor, [0, 0, 0], 3),
                                  np.zeros((2, 3)))


def test_mode_vec_product_one_hot(rng):
    T = rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(mode_vec_product(T, np.eye(3)[1], 2), T[:, 1, :])
    with pytest.raises(ShapeMismatch):
        mode_vec_product(T, np.ones(2), 2)


def test_tucker_identity_and_example(rng, example_v):
    T = rng.standard_normal((2, 3, 2))
    np.testing.assert_allclose(tucker(T, np.eye(2), np.eye(3), np.eye(2)), T)
    np.testing.assert_array_equal(tucker(example_v.tensor, None, [1, 0, 0], [1, 0, 0]), [2, 1])


def test_tucker_scalar_result(rng):
    T = rng.standard_normal((2, 3, 4))
    x, z, w = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal(4)
    val = tucker(T, x, z, w)
    assert np.ndim(val) == 0
    assert abs(val - np.einsum("ijk,i,j,k->", T, x, z, w)) <= 1e-13


@pytest.mark.property
@given(seed=st.integers(0, 2**32 - 1))
def test_kronunfold_identity(seed):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((2, 3, 2))
    X = [rng.standard_normal((2, 2)), rng.standard_normal((3, 3)), rng.standard_normal((2, 2))]
    Y = tucker(T, *X)
    others = {1: (2, 1), 2: (2, 0), 3: (1, 0)}
    for n in (1, 2, 3):
        j, i = others[n]
        rhs = X[n - 1] @ matricize(T, n) @ np.kron(X[j], X[i]).T
        assert np.max(np.abs(matricize(Y, n) - rhs)) <= 1e-12 * max(1, np.abs(rhs).max())


@given(seed=st.integers(0, 2**32 - 1), perm=st.permutations([1, 2, 3]))
def test_tucker_order_invariance(seed, perm):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((2, 3, 4))
    X = {1: rng.standard_normal((3, 2)), 2: rng.standard_normal((2, 3)), 3: rng.standard_normal((2, 4))}
    Y = T
    for n in perm:
        Y = mode_product(Y, X[n], n)
    np.testing.assert_allclose(Y, tucker(T, X[1], X[2], X[3]), atol=1e-12)


def test_tensor_kron_slice_definition(rng):
    # [T (x) T] slice along mode 1 at i + q1*j is kron(T[j], T[i])
    T = rng.standard_normal((2, 3, 2))
    K = tensor_kron(T)
    q1 = T.shape[0]
    for i, j in itertools.product(range(q1), repeat=2):
        np.testing.assert_allclose(K[i + q1 * j], np.kron(T[j], T[i]), atol=1e-15)


def test_tensor_skron_scalar():
    np.testing.assert_allclose(tensor_skron(np.full((1, 1, 1), 3.0)), [[[9.0]]])


@given(seed=st.integers(0, 2**32 - 1))
def test_tensor_skron_bilinear_form(seed):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((2, 3, 2))
    p, z, w = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal(2)
    lhs = tucker(T, p, z, w) ** 2
    rhs = tucker(tensor_skron(T), svec(np.outer(p, p)), svec(np.outer(z, z)), svec(np.outer(w, w)))
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))


def _skron_mat(X):
    m, n = X.shape
    return qd_matrix(m) @ np.kron(X, X) @ qd_matrix(n).T


@pytest.mark.property
@given(seed=st.integers(0, 2**32 - 1))
def test_tensor_kron_lemma(seed):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((2, 2, 2))
    X = [rng.standard_normal((2, 2)) for _ in range(3)]
    lhs = tensor_skron(tucker(T, *X))
    rhs = tucker(tensor_skron(T), *[_skron_mat(x) for x in X])
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * max(1, np.abs(rhs).max())


def test_spectral_norm_rank_one(rng):
    u, v, s = (x / np.linalg.norm(x) for x in rng.standard_normal((3, 3)))
    T = 2.5 * np.einsum("i,j,k->ijk", u, v, s)
    assert abs(tensor_spectral_norm_lb(T) - 2.5) <= 1e-6


def test_spectral_norm_zero_and_dominance(rng):
    assert tensor_spectral_norm_lb(np.zeros((2, 2, 2))) == 0.0
    for _ in range(5):
        T = rng.standard_normal((3, 4, 2))
        lb = tensor_spectral_norm_lb(T, iters=50, restarts=4)
        assert lb <= np.linalg.norm(matricize(T, 1), 2) + 1e-12
        assert lb <= flattening_norm_ub(T) + 1e-12


def test_spectral_norm_monotone_in_restarts(rng):
    T = rng.standard_normal((3, 3, 3))
    vals = [tensor_spectral_norm_lb(T, iters=20, restarts=r, seed=7) for r in (1, 2, 4, 8)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
