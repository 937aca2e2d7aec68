import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dctattn.dense import MulCounter, jacobi_eigh, matmul, softmax_rows, trunc_normal_init, unitary_dft


def test_matmul_identity():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(matmul(a, np.eye(3)), a)


def test_matmul_counts_rows_cols_inner():
    c = MulCounter()
    matmul(np.ones((2, 3)), np.ones((3, 4)), c)
    assert c.count == 24


def test_matmul_batched_count():
    c = MulCounter()
    out = matmul(np.ones((5, 2, 3)), np.ones((3, 4)), c)
    assert out.shape == (5, 2, 4)
    assert c.count == 5 * 24


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError, match="inner dims 3 != 2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_counter_merge_and_negative():
    assert MulCounter(3).merge(MulCounter(4)).count == 7
    with pytest.raises(ValueError):
        MulCounter().add(-1)


def test_softmax_example():
    out = softmax_rows(np.array([[0.0, np.log(2.0)]]))
    assert np.allclose(out, [[1 / 3, 2 / 3]], atol=1e-15)


def test_softmax_large_inputs_finite():
    out = softmax_rows(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.all(np.isfinite(out))
    assert np.allclose(out, [[0.5, 0.5, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(-50, 50), st.integers(0, 2**31))
def test_softmax_rows_sum_and_shift(rows, cols, shift, seed):
    m = np.random.default_rng(seed).standard_normal((rows, cols)) * 5
    s = softmax_rows(m)
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.allclose(softmax_rows(m + shift), s, atol=1e-12)


def test_trunc_normal_deterministic_and_bounded():
    a = trunc_normal_init(64, 64, 0.02, seed=7)
    b = trunc_normal_init(64, 64, 0.02, seed=7)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a)) <= 0.04


def test_trunc_normal_moments():
    std = 0.02
    a = trunc_normal_init(200, 200, std, seed=3).ravel()
    # variance of N(0, s) truncated at +-2s is about 0.774 s^2
    se = np.sqrt(0.774) * std / np.sqrt(a.size)
    assert abs(a.mean()) < 5 * se
    assert a.std() == pytest.approx(np.sqrt(0.774) * std, rel=0.02)


def test_trunc_normal_rejects_bad_std():
    with pytest.raises(ValueError):
        trunc_normal_init(2, 2, 0.0)


@pytest.mark.parametrize("c", [1, 2, 3, 8, 17])
def test_unitary_dft(c):
    f = unitary_dft(c)
    assert np.allclose(f @ f.conj().T, np.eye(c), atol=1e-12)
    assert np.allclose(f * np.sqrt(c), np.fft.fft(np.eye(c)), atol=1e-12)


def test_jacobi_diagonal_input():
    w, v = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    assert np.array_equal(w, [3.0, 2.0, 1.0])
    assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]])


def test_jacobi_two_by_two():
    w, v = jacobi_eigh(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(w, [3.0, 1.0], atol=1e-14)
    assert np.allclose(np.abs(v[:, 0]), [np.sqrt(0.5)] * 2, atol=1e-14)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31))
def test_jacobi_reconstructs_and_matches_eigh(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    s = a + a.T
    w, v = jacobi_eigh(s)
    scale = max(np.linalg.norm(s), 1.0)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-12)
    assert np.max(np.abs(v @ np.diag(w) @ v.T - s)) < 1e-11 * scale
    assert np.allclose(w, np.sort(np.linalg.eigvalsh(s))[::-1], atol=1e-11 * scale)
