"""Spectral clustering of the affinity matrix with Davies-Bouldin selection
of the number of clusters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError
from .interaction import AffinityMatrix, build_affinity
from .linalg import jacobi_eigh


@dataclass
class ClusteringOutcome:
    """Result of one clustering attempt on a cluster.

    ``labels`` maps client id to a cluster index; with ``n_cl == 1`` every
    client maps to 0. ``db_scores`` holds the Davies-Bouldin value of every
    candidate tried and ``rejected`` the candidates dropped by the
    minimum-size guard.
    """

    labels: dict
    n_cl: int
    db_scores: dict = field(default_factory=dict)
    rejected: list = field(default_factory=list)

    @property
    def split(self) -> bool:
        return self.n_cl > 1

    def groups(self, clients) -> list:
        """Member lists per cluster index, preserving the order of ``clients``."""
        out = [[] for _ in range(self.n_cl)]
        for c in clients:
            out[self.labels[c]].append(c)
        return out

    def to_record(self) -> dict:
        return {
            "n_cl": self.n_cl,
            "labels": {str(c): int(l) for c, l in self.labels.items()},
            "db_scores": {str(n): float(v) for n, v in sorted(self.db_scores.items())},
            "rejected": sorted(int(n) for n in self.rejected),
        }


def _as_matrix(W) -> np.ndarray:
    return W.W if isinstance(W, AffinityMatrix) else np.asarray(W, dtype=np.float64)


def canonical_labels(labels) -> np.ndarray:
    """Renumber labels in order of first appearance."""
    labels = np.asarray(labels)
    mapping = {}
    for l in labels:
        if l not in mapping:
            mapping[l] = len(mapping)
    return np.array([mapping[l] for l in labels], dtype=np.intp)


def kmeans(X, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding.

    Stops after ``max_iter`` iterations or once the relative inertia change
    drops below ``tol``. Nearest-centroid ties go to the lowest index; an
    emptied cluster is re-seeded with the point farthest from its centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))

    inertia = np.inf
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist, axis=1)
        best = dist[np.arange(n), labels]
        for c in range(k):
            if not np.any(labels == c):
                far = int(np.argmax(best))
                labels[far] = c
                best[far] = 0.0
        new_inertia = float(best.sum())
        centers = np.stack([X[labels == c].mean(axis=0) for c in range(k)])
        if np.isfinite(inertia) and abs(inertia - new_inertia) <= tol * max(inertia, 1e-300):
            break
        inertia = new_inertia
    return labels


def normalized_affinity(W) -> np.ndarray:
    """``D^{-1/2} W D^{-1/2}`` with D the degree diagonal."""
    W = _as_matrix(W)
    deg = W.sum(axis=1)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    M = W * inv[:, None] * inv[None, :]
    # exact symmetry for the eigensolver
    return np.triu(M) + np.triu(M, 1).T


def spectral_embedding(W, n: int, eig=None) -> np.ndarray:
    """Leading ``n`` eigenvectors of the normalized affinity, rows scaled to
    unit length (zero rows stay zero)."""
    if eig is None:
        eig = jacobi_eigh(normalized_affinity(W))
    _, V = eig
    U = V[:, :n].copy()
    norms = np.linalg.norm(U, axis=1)
    nz = norms > 0
    U[nz] /= norms[nz, None]
    return U


def spectral_clustering(W, n: int, seed: int, eig=None) -> np.ndarray:
    """Ng-Jordan-Weiss spectral clustering into ``n`` groups.

    ``eig`` may carry a precomputed decomposition of the normalized
    affinity, so several values of ``n`` can share one eigensolve.
    """
    M = _as_matrix(W)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"affinity must be square, got {M.shape}")
    if not np.array_equal(M, M.T):
        raise DomainError("affinity matrix is not symmetric")
    if not 2 <= n < M.shape[0]:
        raise DomainError(f"number of clusters must satisfy 2 <= n < {M.shape[0]}, got {n}")
    U = spectral_embedding(M, n, eig=eig)
    return canonical_labels(kmeans(U, n, seed))


def euclidean(a, b) -> np.ndarray:
    return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)


def davies_bouldin(features, labels, distance: Callable = euclidean) -> float:
    """Mean over clusters of the worst ``(S_i + S_j) / D_ij`` ratio.

    ``S_i`` is the mean distance of members to their centroid and ``D_ij``
    the distance between centroids. Coincident centroids give ``inf``.
    ``distance(a, b)`` must broadcast over the last axis.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if X.shape[0] != labels.shape[0]:
        raise ShapeError(f"{X.shape[0]} feature rows but {labels.shape[0]} labels")
    ids = np.unique(labels)
    if ids.size < 2:
        raise DomainError("Davies-Bouldin needs at least 2 clusters")
    centroids = np.stack([X[labels == c].mean(axis=0) for c in ids])
    spread = np.array([np.mean(distance(X[labels == c], centroids[i])) for i, c in enumerate(ids)])
    worst = np.zeros(ids.size)
    for i in range(ids.size):
        ratios = []
        for j in range(ids.size):
            if i == j:
                continue
            dij = float(distance(centroids[i], centroids[j]))
            ratios.append(np.inf if dij == 0 else (spread[i] + spread[j]) / dij)
        worst[i] = max(ratios)
    return float(worst.mean())


def fedgw_cluster(state, beta: float, n_max: int = 5, seed: int = 0, k_min: int = 1) -> ClusteringOutcome:
    """Decide whether and how to split the clients of an interaction state.

    Tries n = 2..min(n_max, K-1) clusters; candidates with a group smaller
    than ``k_min`` are rejected. The split with the lowest Davies-Bouldin
    score (lowest n on ties) is kept unless that score exceeds 1.
    """
    clients = list(state.clients)
    K = len(clients)
    if n_max < 2:
        raise DomainError(f"n_max must be at least 2, got {n_max}")
    aff = build_affinity(state, beta)
    W = aff.W
    eig = jacobi_eigh(normalized_affinity(W))

    db_scores, rejected, candidates = {}, [], {}
    for n in range(2, min(n_max, K - 1) + 1):
        labels = spectral_clustering(W, n, seed, eig=eig)
        db_scores[n] = davies_bouldin(W, labels)
        if np.bincount(labels, minlength=n).min() < k_min:
            rejected.append(n)
        else:
            candidates[n] = labels

    no_split = ClusteringOutcome(labels={c: 0 for c in clients}, n_cl=1, db_scores=db_scores, rejected=rejected)
    if not candidates:
        return no_split
    best = min(candidates, key=lambda n: (db_scores[n], n))
    if db_scores[best] > 1.0:
        return no_split
    labels = candidates[best]
    return ClusteringOutcome(
        labels={c: int(l) for c, l in zip(clients, labels)},
        n_cl=best,
        db_scores=db_scores,
        rejected=rejected,
    )
