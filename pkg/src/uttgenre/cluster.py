"""
Seeded K-means with k-means++ initialization and restarts.

Points are z-scored per dimension before any distance is computed; the
scaling is kept on the result so callers can map centroids back to feature
units. Lloyd iterations stop when the largest centroid shift falls below
``tol`` or no assignment changes. Emptied clusters are reseeded with the
point farthest from its current centroid.

All arithmetic runs in fixed order inside compiled kernels, so a given
``(points, K, seed, config)`` always produces the same assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np


_ALGORITHMS = ("hamerly", "lloyd")


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 10
    tol: float = 1e-6
    max_iter: int = 300
    standardize: bool = True
    algorithm: str = "hamerly"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class Clustering:
    K: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    seed: int
    n_iter: int
    converged: bool
    center: np.ndarray
    scale: np.ndarray
    traces: tuple = field(default=(), repr=False)

    @property
    def centroids_unscaled(self):
        return self.centroids * self.scale + self.center

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.K)

    def assignments(self, ids):
        return {i: int(c) for i, c in zip(ids, self.labels)}


@numba.njit(cache=True)
def _kmeanspp(X, K, first, uniforms):
    n, d = X.shape
    C = np.empty((K, d))
    d2 = np.empty(n)
    for j in range(d):
        C[0, j] = X[first, j]
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = X[i, j] - C[0, j]
            s += t * t
        d2[i] = s
    for k in range(1, K):
        total = 0.0
        for i in range(n):
            total += d2[i]
        target = uniforms[k] * total
        idx = n - 1
        if total > 0.0:
            acc = 0.0
            for i in range(n):
                acc += d2[i]
                if acc > target:
                    idx = i
                    break
        else:
            idx = int(uniforms[k] * n) % n
        for j in range(d):
            C[k, j] = X[idx, j]
        for i in range(n):
            s = 0.0
            for j in range(d):
                t = X[i, j] - C[k, j]
                s += t * t
            if s < d2[i]:
                d2[i] = s
    return C


@numba.njit(cache=True)
def _lloyd(X, C, max_iter, tol):
    n, d = X.shape
    K = C.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    dist = np.empty(n)
    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros((K, d))
    trace = np.empty(max_iter)
    it = 0
    converged = False
    while it < max_iter:
        changed = 0
        for i in range(n):
            best = np.inf
            bk = 0
            for k in range(K):
                s = 0.0
                for j in range(d):
                    t = X[i, j] - C[k, j]
                    s += t * t
                if s < best:
                    best = s
                    bk = k
            if labels[i] != bk:
                changed += 1
                labels[i] = bk
            dist[i] = best
        counts[:] = 0
        for i in range(n):
            counts[labels[i]] += 1
        changed += _repair_empty(X, C, labels, counts, dist)
        inertia = 0.0
        for i in range(n):
            inertia += dist[i]
        trace[it] = inertia
        sums[:, :] = 0.0
        for i in range(n):
            for j in range(d):
                sums[labels[i], j] += X[i, j]
        shift = 0.0
        for k in range(K):
            s = 0.0
            for j in range(d):
                v = sums[k, j] / counts[k]
                t = v - C[k, j]
                s += t * t
                C[k, j] = v
            if s > shift:
                shift = s
        it += 1
        if changed == 0 or np.sqrt(shift) < tol:
            converged = True
            break
    inertia = 0.0
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = X[i, j] - C[labels[i], j]
            s += t * t
        inertia += s
    return labels, C, inertia, trace[:it], it, converged


@numba.njit(cache=True)
def _repair_empty(X, C, labels, counts, dist):
    """Reseed each empty cluster with the point farthest from its centroid."""
    n, d = X.shape
    K = C.shape[0]
    moved = 0
    for k in range(K):
        if counts[k] == 0:
            far = -1
            fd = -1.0
            for i in range(n):
                if counts[labels[i]] > 1 and dist[i] > fd:
                    fd = dist[i]
                    far = i
            counts[labels[far]] -= 1
            labels[far] = k
            counts[k] = 1
            dist[far] = 0.0
            for j in range(d):
                C[k, j] = X[far, j]
            moved += 1
    return moved


@numba.njit(cache=True)
def _hamerly(X, C, max_iter, tol):
    """
    Lloyd iterations with Hamerly's lower bounds, fused into one pass per iteration.

    The exact distance to the assigned centroid is computed for every point
    anyway (it feeds the inertia trace), so only the lower bound on the
    second-closest centroid is maintained. A point skips the full search
    when its assigned distance is strictly below both that bound and half
    the gap to the assigned centroid's nearest neighbour. The assignment
    therefore matches plain Lloyd (nearest centroid, lowest index on exact
    ties).
    """
    n, d = X.shape
    K = C.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    lower = np.zeros(n)
    sqd = np.empty(n)
    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros((K, d))
    half = np.empty(K)
    move = np.zeros(K)
    trace = np.empty(max_iter)
    m1 = 0.0
    m2 = 0.0
    r1 = -1
    it = 0
    converged = False
    while it < max_iter:
        first = it == 0
        for k in range(K):
            best = np.inf
            for k2 in range(K):
                if k2 != k:
                    s = 0.0
                    for j in range(d):
                        t = C[k, j] - C[k2, j]
                        s += t * t
                    if s < best:
                        best = s
            half[k] = 0.5 * np.sqrt(best)
        counts[:] = 0
        sums[:, :] = 0.0
        inertia = 0.0
        changed = 0
        for i in range(n):
            a = labels[i]
            search = first
            s = 0.0
            if not first:
                lower[i] -= m2 if a == r1 else m1
                for j in range(d):
                    t = X[i, j] - C[a, j]
                    s += t * t
                bound = max(half[a], lower[i])
                search = not (bound > 0.0 and s < bound * bound)
            if search:
                b1 = np.inf
                b2 = np.inf
                bk = 0
                for k in range(K):
                    q = 0.0
                    for j in range(d):
                        t = X[i, j] - C[k, j]
                        q += t * t
                    if q < b1:
                        b2 = b1
                        b1 = q
                        bk = k
                    elif q < b2:
                        b2 = q
                if first or bk != a:
                    changed += 1
                labels[i] = bk
                a = bk
                s = b1
                lower[i] = np.sqrt(b2)
            sqd[i] = s
            inertia += s
            counts[a] += 1
            for j in range(d):
                sums[a, j] += X[i, j]
        repaired = 0
        for k in range(K):
            if counts[k] == 0:
                repaired = _repair_empty(X, C, labels, counts, sqd)
                break
        if repaired:
            changed += repaired
            inertia = 0.0
            sums[:, :] = 0.0
            for i in range(n):
                inertia += sqd[i]
                lower[i] = 0.0
                for j in range(d):
                    sums[labels[i], j] += X[i, j]
        trace[it] = inertia
        shift = 0.0
        m1 = 0.0
        m2 = 0.0
        r1 = -1
        for k in range(K):
            s = 0.0
            for j in range(d):
                v = sums[k, j] / counts[k]
                t = v - C[k, j]
                s += t * t
                C[k, j] = v
            move[k] = np.sqrt(s)
            if s > shift:
                shift = s
            if move[k] > m1:
                m2 = m1
                m1 = move[k]
                r1 = k
            elif move[k] > m2:
                m2 = move[k]
        it += 1
        if changed == 0 or np.sqrt(shift) < tol:
            converged = True
            break
    inertia = 0.0
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = X[i, j] - C[labels[i], j]
            s += t * t
        inertia += s
    return labels, C, inertia, trace[:it], it, converged


def scale_points(points, standardize=True):
    X = np.ascontiguousarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not standardize:
        return X, np.zeros(X.shape[1]), np.ones(X.shape[1])
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return np.ascontiguousarray((X - center) / scale), center, scale


def kmeans(points, K, seed=0, config=None):
    """
    Cluster ``points`` into ``K`` groups.

    Parameters
    ----------
    points : array-like, shape (n, d)
    K : int
    seed : int
        Seeds the k-means++ draws of every restart.
    config : KMeansConfig, optional

    Returns
    -------
    Clustering
        The restart with the lowest inertia (earliest restart on ties).
        ``traces`` holds the per-iteration inertia of every restart.
    """
    config = config or KMeansConfig()
    X, center, scale = scale_points(points, config.standardize)
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    if not np.isfinite(X).all():
        raise ValueError("non-finite coordinates")
    rng = np.random.default_rng(seed)
    best = None
    traces = []
    for _ in range(config.restarts):
        first = int(rng.integers(n))
        uniforms = rng.random(K)
        C0 = _kmeanspp(X, K, first, uniforms)
        run = _hamerly if config.algorithm == "hamerly" else _lloyd
        labels, C, inertia, trace, n_iter, conv = run(X, C0, config.max_iter, config.tol)
        traces.append(trace.copy())
        if best is None or inertia < best[2]:
            best = (labels, C, inertia, n_iter, conv)
    labels, C, inertia, n_iter, conv = best
    return Clustering(K=K, labels=labels, centroids=C, inertia=float(inertia),
                      seed=seed, n_iter=int(n_iter), converged=bool(conv),
                      center=center, scale=scale, traces=tuple(traces))
