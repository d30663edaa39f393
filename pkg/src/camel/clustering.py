"""Deterministic Lloyd k-means with k-means++ seeding.

Points may be a dense array or a scipy sparse matrix (rows are points), which
lets the solver cluster the zero-padded columns of X~ without densifying them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_CHUNK = 8192


@dataclass(frozen=True)
class KMeansResult:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: tuple = ()

    @property
    def n_nonempty(self) -> int:
        return int(np.count_nonzero(np.bincount(self.assignment, minlength=len(self.centroids))))


def _row_sq_norms(points) -> np.ndarray:
    if sp.issparse(points):
        return np.asarray(points.multiply(points).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", points, points)


def _sq_distances(points, centroids, x_sq=None, c_sq=None) -> np.ndarray:
    """Squared distances, rows = points, columns = centroids (inactive centroids give inf)."""
    if x_sq is None:
        x_sq = _row_sq_norms(points)
    active = np.all(np.isfinite(centroids), axis=1)
    C = np.where(active[:, None], centroids, 0.0)
    if c_sq is None:
        c_sq = np.einsum("ij,ij->i", C, C)
    d = np.asarray(points @ C.T)
    d *= -2.0
    d += x_sq[:, None]
    d += c_sq[None, :]
    np.maximum(d, 0.0, out=d)
    d[:, ~active] = np.inf
    return d


def assign_to_centroids(points, centroids, x_sq=None):
    """Nearest-centroid ids and squared distances; ties go to the lowest index.

    Rows of ``centroids`` containing non-finite values are treated as inactive.
    """
    centroids = np.asarray(centroids, dtype=float)
    n = points.shape[0]
    if points.shape[1] != centroids.shape[1]:
        raise ValueError("points and centroids differ in dimension")
    if x_sq is None:
        x_sq = _row_sq_norms(points)
    active = np.all(np.isfinite(centroids), axis=1)
    C = np.where(active[:, None], centroids, 0.0)
    c_sq = np.einsum("ij,ij->i", C, C)
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = _sq_distances(points[start:stop], centroids, x_sq[start:stop], c_sq)
        labels[start:stop] = np.argmin(d, axis=1)
        dist[start:stop] = d[np.arange(stop - start), labels[start:stop]]
    return labels, dist


def _exact_inertia(points, centroids, labels) -> float:
    # direct differences, so inertia is not polluted by the norm expansion
    total = 0.0
    for start in range(0, points.shape[0], _CHUNK):
        stop = min(start + _CHUNK, points.shape[0])
        block = points[start:stop]
        block = block.toarray() if sp.issparse(block) else block
        diff = block - centroids[labels[start:stop]]
        total += float(np.einsum("ij,ij->", diff, diff))
    return total


def cluster_means(points, labels, k, previous=None) -> np.ndarray:
    """Means of each cluster; empty clusters keep their ``previous`` row (or NaN)."""
    n, d = points.shape
    onehot = sp.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(k, n))
    sums = onehot @ points
    sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
    counts = np.bincount(labels, minlength=k)
    out = np.full((k, d), np.nan) if previous is None else np.array(previous, dtype=float)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def kmeans_plusplus(points, k, rng, x_sq=None) -> np.ndarray:
    n = points.shape[0]
    if x_sq is None:
        x_sq = _row_sq_norms(points)

    def row(i):
        r = points[i]
        return r.toarray().ravel() if sp.issparse(r) else np.array(r, dtype=float)

    centers = np.empty((k, points.shape[1]))
    centers[0] = row(rng.integers(n))
    closest = _sq_distances(points, centers[:1], x_sq).ravel()
    for c in range(1, k):
        total = closest.sum()
        if not total > 0:
            raise ValueError(f"cannot seed {k} distinct centroids: only {c} distinct points")
        idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        while closest[idx] <= 0:  # guard against landing on a zero-weight point
            idx = (idx + 1) % n
        centers[c] = row(idx)
        d = _sq_distances(points, centers[c:c + 1], x_sq).ravel()
        np.minimum(closest, d, out=closest)
    return centers


def kmeans(points, k, seed=0, max_iter=100, tol=1e-10, init=None) -> KMeansResult:
    """Lloyd iterations from k-means++ seeds, or from ``init`` centroids if given.

    Stops when no assignment changes, when the relative inertia decrement is
    at most ``tol``, or after ``max_iter`` assignment steps. The returned
    centroids are the ones the final assignment was made against.
    """
    if not sp.issparse(points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise ValueError("points must be a 2-D array")
    else:
        points = sp.csr_matrix(points, dtype=float)
    n = points.shape[0]
    if n < 1 or k < 1:
        raise ValueError("need at least one point and one cluster")
    if k > n:
        raise ValueError(f"K={k} exceeds the number of points N={n}")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    x_sq = _row_sq_norms(points)
    if init is None:
        centroids = kmeans_plusplus(points, k, np.random.default_rng(seed), x_sq)
    else:
        centroids = np.array(init, dtype=float)
        if centroids.shape != (k, points.shape[1]):
            raise ValueError("init must be a K x d array")

    labels = None
    history = []
    it = 0
    while True:
        new_labels, _ = assign_to_centroids(points, centroids, x_sq)
        it += 1
        inertia = _exact_inertia(points, centroids, new_labels)
        changed = labels is None or np.any(new_labels != labels)
        labels = new_labels
        history.append(inertia)
        if not changed or it >= max_iter:
            break
        if len(history) > 1 and history[-2] - inertia <= tol * history[-2]:
            break
        centroids = cluster_means(points, labels, k, previous=centroids)
    labels.setflags(write=False)
    return KMeansResult(labels, centroids, history[-1], it, tuple(history))
