import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedgwc.errors import DomainError
from fedgwc.linalg import eig_residuals, jacobi_eigh


def sym(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    return np.triu(A) + np.triu(A, 1).T


@given(st.integers(1, 25), st.integers(0, 2**31))
def test_eigenvalues_match_lapack(n, seed):
    A = sym(n, seed)
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A)[::-1], atol=1e-10 * max(1.0, np.abs(w).max()))
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-11)


@pytest.mark.parametrize("n", [10, 60, 200])
def test_residuals_are_small(n):
    A = sym(n, n)
    w, V = jacobi_eigh(A)
    assert eig_residuals(A, w, V).max() <= 1e-9 * np.abs(w).max()


def test_sign_convention_and_determinism():
    A = sym(12, 4)
    w1, V1 = jacobi_eigh(A)
    w2, V2 = jacobi_eigh(A.copy())
    assert np.array_equal(w1, w2) and np.array_equal(V1, V2)
    pivots = V1[np.argmax(np.abs(V1), axis=0), np.arange(12)]
    assert np.all(pivots > 0)


def test_two_by_two():
    w, V = jacobi_eigh([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(w, [3.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(V[:, 0]), [2**-0.5, 2**-0.5], atol=1e-14)


def test_diagonal_input_is_returned_sorted():
    w, V = jacobi_eigh(np.diag([1.0, 5.0, 3.0]))
    np.testing.assert_array_equal(w, [5.0, 3.0, 1.0])
    np.testing.assert_array_equal(np.abs(V), [[0, 0, 1], [1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("A", [np.zeros((2, 3)), np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])])
def test_rejects_non_square_and_non_symmetric(A):
    with pytest.raises(DomainError):
        jacobi_eigh(A)
