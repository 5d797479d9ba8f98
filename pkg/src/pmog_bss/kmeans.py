"""1-D k-means with k-means++ seeding, used to initialize the mixture fit."""

from __future__ import annotations

import numpy as np


def kmeans_plusplus_seed(u: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick k starting centers from the points ``u`` by D^2 weighting."""
    n = u.size
    centers = np.empty(k)
    centers[0] = u[rng.integers(n)]
    d2 = (u - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = u[rng.integers(n)]
            continue
        r = rng.uniform(0.0, total)
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centers[j] = u[idx]
        d2 = np.minimum(d2, (u - centers[j]) ** 2)
    return centers


def kmeans_1d(
    u: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 50,
    plusplus_seeding: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm on scalars; returns (centers, labels).

    Empty clusters are reseeded to the point currently farthest from its
    center, which keeps all k clusters alive on degenerate data.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if k < 1:
        raise ValueError("need k >= 1")
    if n < 1:
        raise ValueError("need at least one point")
    if plusplus_seeding:
        centers = kmeans_plusplus_seed(u, k, rng)
    else:
        centers = u[rng.choice(n, size=k, replace=n < k)]

    labels = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        dist = np.abs(u[None, :] - centers[:, None])
        new_labels = np.argmin(dist, axis=0)
        for j in range(k):
            mask = new_labels == j
            if np.any(mask):
                centers[j] = u[mask].mean()
            else:
                gaps = np.abs(u - centers[new_labels])
                far = int(np.argmax(gaps))
                centers[j] = u[far]
                new_labels[far] = j
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return centers, labels
