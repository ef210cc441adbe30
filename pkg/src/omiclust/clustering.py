"""K-means, partition container, and partition agreement metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .util import derive_seed


@dataclass(frozen=True)
class Partition:
    """Cluster labels for n samples, values in 1..K."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValidationError("labels must be 1-d")
        if self.K < 1 or lab.size < self.K:
            raise ValidationError(
                f"need at least K={self.K} samples, got {lab.size}"
            )
        if lab.size and (lab.min() < 1 or lab.max() > self.K):
            raise ValidationError(f"labels must lie in 1..{self.K}")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.labels.size


def _as_labels(part):
    if isinstance(part, Partition):
        return part.labels
    return np.asarray(part, dtype=np.int64).ravel()


def _farthest_first(points, K, rng):
    """Maximin seeding: random first center, then repeated farthest point."""
    n = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        centers[k] = points[int(np.argmax(d2))]
        d2 = np.minimum(d2, np.sum((points - centers[k]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter=100):
    """Iterate assignment/update from given centers; returns labels 0..K-1."""
    n = points.shape[0]
    K = centers.shape[0]
    sq = np.sum(points * points, axis=1)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = sq[:, None] - 2.0 * points @ centers.T + np.sum(centers * centers, axis=1)
        new = np.argmin(d2, axis=1)
        own = d2[np.arange(n), new]
        # an empty cluster takes over the farthest point whose current
        # cluster can spare it (>= 2 members), so no steal empties another
        for k in range(K):
            if np.any(new == k):
                continue
            sizes = np.bincount(new, minlength=K)
            donors = np.flatnonzero(sizes[new] > 1)
            j = int(donors[np.argmax(own[donors])])
            new[j] = k
            own[j] = 0.0
        if np.array_equal(new, labels):
            break
        labels = new
        for k in range(K):
            centers[k] = points[labels == k].mean(axis=0)
    d2 = sq[:, None] - 2.0 * points @ centers.T + np.sum(centers * centers, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centers, inertia


def kmeans_fit(points, K, restarts=20, seed=0):
    """Best-of-restarts K-means.

    Each restart gets its own derived seed for the maximin initialization;
    the restart with the lowest within-cluster sum of squares wins and exact
    ties keep the lowest restart index.

    Returns:
        (Partition, centers) for the winning restart.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if K < 1 or n < K:
        raise ValidationError(f"kmeans needs n >= K >= 1, got n={n}, K={K}")
    if not np.all(np.isfinite(points)):
        raise ValidationError("kmeans input contains non-finite values")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, r))
        centers0 = _farthest_first(points, K, rng)
        labels, centers, inertia = _lloyd(points, centers0)
        if best is None or inertia < best[0]:
            best = (inertia, labels, centers)
    _, labels, centers = best
    return Partition(labels=labels + 1, K=K), centers


def kmeans(points, K, restarts=20, seed=0):
    """Cluster rows of `points` into K groups; see kmeans_fit."""
    return kmeans_fit(points, K, restarts=restarts, seed=seed)[0]


def assign_to_centers(points, centers):
    """Nearest-center labels (1-based) for rows of `points`."""
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)
    )
    return Partition(labels=np.argmin(d2, axis=1) + 1, K=centers.shape[0])


def _contingency(a, b):
    au, ai = np.unique(a, return_inverse=True)
    bu, bi = np.unique(b, return_inverse=True)
    table = np.zeros((au.size, bu.size), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adjusted_rand_index(a, b):
    """Chance-corrected pair-counting agreement between two partitions.

    When the correction denominator is exactly zero (both partitions
    trivial), returns 1.0 if the two groupings are identical and 0.0
    otherwise.
    """
    a = _as_labels(a)
    b = _as_labels(b)
    if a.size != b.size:
        raise ValidationError(f"partition sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValidationError("empty partitions")
    table = _contingency(a, b)
    nij = np.sum(table * (table - 1)) / 2.0
    ai = table.sum(axis=1)
    bj = table.sum(axis=0)
    ra = np.sum(ai * (ai - 1)) / 2.0
    rb = np.sum(bj * (bj - 1)) / 2.0
    npairs = a.size * (a.size - 1) / 2.0
    expected = ra * rb / npairs if npairs else 0.0
    maximum = 0.5 * (ra + rb)
    denom = maximum - expected
    if denom == 0.0:
        same = np.all((table > 0).sum(axis=1) == 1) and np.all(
            (table > 0).sum(axis=0) == 1
        )
        return 1.0 if same else 0.0
    return float((nij - expected) / denom)


def misclassification_rate(pred, truth):
    """Error rate after the best one-to-one matching of cluster labels.

    The contingency table is padded to square with empty labels when the
    two partitions use different K, then matched by the assignment solver.
    """
    pred = _as_labels(pred)
    truth = _as_labels(truth)
    if pred.size != truth.size:
        raise ValidationError(f"partition sizes differ: {pred.size} vs {truth.size}")
    table = _contingency(pred, truth)
    m = max(table.shape)
    padded = np.zeros((m, m), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-padded)
    matched = padded[rows, cols].sum()
    return float(1.0 - matched / pred.size)
