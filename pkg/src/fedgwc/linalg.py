"""Cyclic Jacobi eigendecomposition for real symmetric matrices."""

import numba
import numpy as np

from .errors import DomainError


@numba.njit(cache=True)
def _jacobi_sweeps(A, V, tol, max_sweeps):
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += A[i, j] * A[i, j]
    scale = np.sqrt(scale)
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        if np.sqrt(2.0 * off) <= tol * scale:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    return sweeps


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Eigenvalues and eigenvectors of a symmetric matrix.

    Eigenvalues are returned in descending order (ties keep their
    diagonal position). Each eigenvector is signed so that its entry of
    largest magnitude is positive, making the output reproducible.

    >>> w, V = jacobi_eigh([[2.0, 1.0], [1.0, 2.0]])
    >>> np.round(w, 12).tolist()
    [3.0, 1.0]
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise DomainError("matrix is not symmetric")
    n = A.shape[0]
    V = np.eye(n)
    if n > 1:
        _jacobi_sweeps(A, V, tol, max_sweeps)
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order]
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(n)])
    signs[signs == 0] = 1.0
    return w, V * signs


def eig_residuals(A, w, V) -> np.ndarray:
    """``||A v_i - w_i v_i||`` for every returned pair."""
    A = np.asarray(A, dtype=np.float64)
    return np.linalg.norm(A @ V - V * w, axis=0)
