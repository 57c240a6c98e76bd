"""Clustering and classification metrics.

The Wasserstein-adjusted scores compare clients through their class
histograms sorted in decreasing order. Between two such ranked vectors the
p-Wasserstein distance of the underlying empirical measures has the closed
form ``(mean |a_(i) - b_(i)|^p)^(1/p)``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .clustering import davies_bouldin
from .errors import DomainError, ShapeError


def ranked(hist) -> np.ndarray:
    """Class frequencies sorted in decreasing order."""
    return np.sort(np.asarray(hist, dtype=np.float64), axis=-1)[..., ::-1]


def wasserstein_distance(a, b, p: int = 2) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"histograms must be 1-D of equal length, got {a.shape} and {b.shape}")
    if p < 1:
        raise DomainError(f"p must be at least 1, got {p}")
    return float(np.mean(np.abs(ranked(a) - ranked(b)) ** p) ** (1.0 / p))


def _ranked_distance(x, y):
    # x, y already ranked; broadcasts over leading axes like clustering.euclidean
    return np.sqrt(np.mean((np.asarray(x) - np.asarray(y)) ** 2, axis=-1))


def pairwise_wasserstein(hists, p: int = 2) -> np.ndarray:
    R = ranked(np.asarray(hists, dtype=np.float64))
    diff = np.abs(R[:, None, :] - R[None, :, :]) ** p
    return np.mean(diff, axis=2) ** (1.0 / p)


def _align(histograms, labels):
    """Accept dicts keyed by client or aligned sequences."""
    if isinstance(histograms, dict):
        keys = list(histograms)
        H = np.stack([np.asarray(histograms[k], dtype=np.float64) for k in keys])
        if isinstance(labels, dict):
            L = np.array([labels[k] for k in keys])
        else:
            L = np.asarray(labels)
    else:
        H = np.asarray(histograms, dtype=np.float64)
        L = np.array([labels[k] for k in range(len(H))]) if isinstance(labels, dict) else np.asarray(labels)
    if H.shape[0] != L.shape[0]:
        raise ShapeError(f"{H.shape[0]} histograms but {L.shape[0]} labels")
    return H, L


def silhouette_from_distances(D, labels) -> float:
    """Mean silhouette; singletons and zero-spread points score 0."""
    D = np.asarray(D, dtype=np.float64)
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if ids.size < 2:
        raise DomainError("silhouette needs at least 2 clusters")
    scores = np.zeros(labels.size)
    for i in range(labels.size):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == c].mean() for c in ids if c != labels[i])
        top = max(a, b)
        scores[i] = 0.0 if top == 0 else (b - a) / top
    return float(scores.mean())


def was_score(histograms, labels) -> float:
    """Silhouette score under the ranked-histogram Wasserstein distance."""
    H, L = _align(histograms, labels)
    return silhouette_from_distances(pairwise_wasserstein(H), L)


def wadb_score(histograms, labels) -> float:
    """Davies-Bouldin score on ranked histograms with the Wasserstein distance."""
    H, L = _align(histograms, labels)
    return davies_bouldin(ranked(H), L, distance=_ranked_distance)


def rand_index(labels_a, labels_b) -> float:
    """Fraction of client pairs on which two partitions agree."""
    if isinstance(labels_a, dict):
        if set(labels_a) != set(labels_b):
            raise ShapeError("partitions cover different clients")
        keys = sorted(labels_a, key=repr)
        a = [labels_a[k] for k in keys]
        b = [labels_b[k] for k in keys]
    else:
        a, b = list(labels_a), list(labels_b)
        if len(a) != len(b):
            raise ShapeError("partitions have different sizes")
    n = len(a)
    if n < 2:
        return 1.0
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in combinations(range(n), 2))
    return agree / (n * (n - 1) / 2)


def balanced_accuracy(predictions, labels, C: int = None) -> float:
    """Mean recall over the classes present in ``labels``."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if labels.size == 0 or predictions.shape != labels.shape:
        raise ShapeError("predictions and labels must be non-empty and aligned")
    present = np.unique(labels)
    if C is not None and present.max() >= C:
        raise DomainError(f"label {present.max()} out of range for {C} classes")
    return float(np.mean([np.mean(predictions[labels == c] == c) for c in present]))


def federation_balanced_accuracy(per_client) -> float:
    """Unweighted mean of client-level balanced accuracies."""
    values = list(per_client.values()) if isinstance(per_client, dict) else list(per_client)
    return float(np.mean(values))
