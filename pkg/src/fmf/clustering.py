"""Replicated k-means++ for hour embeddings and household profiles."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InputError, InvariantError
from .factorization import truncated_svd

log = logging.getLogger(__name__)

MAX_ITER = 300
SHIFT_TOL = 1e-9
# Relative slack for the per-iteration WCSS check; the assignment step uses the
# expanded ||x||^2 - 2x.c + ||c||^2 form, which can mis-order exact near-ties.
_MONOTONE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class HourClustering:
    assignments: np.ndarray
    centroids: np.ndarray
    wcss: float
    n_iter: int = 0
    trace: tuple = ()
    replicate_wcss: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def r(self) -> int:
        return self.centroids.shape[0]

    @property
    def member_lists(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignments == k) for k in range(self.r)]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.r)


@dataclass(frozen=True, eq=False)
class HouseholdClustering:
    assignments: np.ndarray
    k: int
    embedding: np.ndarray | None = None

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == c)


def exact_wcss(X, labels, centroids) -> float:
    diff = X - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _seed_plus_plus(X, r, rng):
    """D^2-weighted seeding of Arthur and Vassilvitskii."""
    m = X.shape[0]
    centers = np.empty((r, X.shape[1]))
    idx = int(rng.integers(m))
    centers[0] = X[idx]
    closest = np.einsum("ij,ij->i", X - X[idx], X - X[idx])
    for k in range(1, r):
        cum = np.cumsum(closest)
        total = cum[-1]
        if total <= 0:
            raise InvariantError("k-means++ ran out of distinct points while seeding")
        u = rng.random() * total
        idx = int(np.searchsorted(cum, u, side="right"))
        if idx >= m or closest[idx] == 0:
            idx = int(np.flatnonzero(closest > 0)[-1])
        centers[k] = X[idx]
        diff = X - X[idx]
        np.minimum(closest, np.einsum("ij,ij->i", diff, diff), out=closest)
    return centers


def _repair_empty(X, labels, centroids, counts):
    """Move each empty centroid onto the point farthest from its own centroid."""
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centroids
    diff = X - centroids[labels]
    far = np.einsum("ij,ij->i", diff, diff)
    for k in empty:
        i = int(np.argmax(far))
        centroids[k] = X[i]
        far[i] = -1.0
    return centroids


def _lloyd(X, x_sq, centers, max_iter, tol, check):
    r = centers.shape[0]
    C = centers.copy()
    labels, _ = kernels.nearest_centroid(X, C, x_sq)
    wcss = exact_wcss(X, labels, C)
    trace = [wcss]
    it = 0
    for it in range(1, max_iter + 1):
        sums, counts = kernels.centroid_sums(X, labels, r)
        new_c = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], C)
        new_c = _repair_empty(X, labels, new_c, counts)
        shift = float(np.sqrt(np.max(np.einsum("ij,ij->i", new_c - C, new_c - C))))
        C = new_c
        labels, _ = kernels.nearest_centroid(X, C, x_sq)
        new_wcss = exact_wcss(X, labels, C)
        if check and new_wcss > wcss * (1.0 + _MONOTONE_RTOL) + 1e-300:
            raise InvariantError(f"Lloyd iteration {it} increased WCSS from {wcss!r} to {new_wcss!r}")
        wcss = new_wcss
        trace.append(wcss)
        if shift < tol and np.all(np.bincount(labels, minlength=r) > 0):
            break
    counts = np.bincount(labels, minlength=r)
    if np.any(counts == 0):
        # Only reachable when max_iter is exhausted right after a cluster emptied.
        diff = X - C[labels]
        far = np.einsum("ij,ij->i", diff, diff)
        for k in np.flatnonzero(counts == 0):
            donors = np.bincount(labels, minlength=r) > 1
            cand = np.where(donors[labels], far, -1.0)
            i = int(np.argmax(cand))
            labels[i] = k
            far[i] = -1.0
        sums, counts = kernels.centroid_sums(X, labels, r)
        C = sums / counts[:, None]
        wcss = exact_wcss(X, labels, C)
        trace.append(wcss)
    return labels, C, wcss, it, trace


def n_distinct(points) -> int:
    return int(np.unique(np.asarray(points), axis=0).shape[0])


def kmeans_pp(
    points,
    r: int,
    replicates: int = 1000,
    seed: int = 0,
    max_iter: int = MAX_ITER,
    tol: float = SHIFT_TOL,
    check_monotone: bool = True,
) -> HourClustering:
    """Best (minimum WCSS) of ``replicates`` k-means++ runs.

    Replicate ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so
    the first ``k`` replicates are the same whatever the total count.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"points must be a non-empty 2-D array, got shape {X.shape}")
    r = int(r)
    if r < 1:
        raise InputError(f"cluster count must be >= 1, got {r}")
    if int(replicates) < 1:
        raise InputError("replicates must be >= 1")
    distinct = n_distinct(X)
    if r > distinct:
        raise InputError(f"cluster count {r} exceeds the {distinct} distinct points")

    x_sq = np.einsum("ij,ij->i", X, X)
    best = None
    all_wcss = np.empty(int(replicates))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(int(replicates))):
        rng = np.random.default_rng(child)
        centers = _seed_plus_plus(X, r, rng)
        labels, C, wcss, n_iter, trace = _lloyd(X, x_sq, centers, max_iter, tol, check_monotone)
        all_wcss[i] = wcss
        if best is None or wcss < best[2]:
            best = (labels, C, wcss, n_iter, trace)
    labels, C, wcss, n_iter, trace = best
    log.debug("k-means++ r=%d: best WCSS %.6g over %d replicates", r, wcss, replicates)
    labels.setflags(write=False)
    C.setflags(write=False)
    return HourClustering(labels, C, wcss, n_iter, tuple(trace), all_wcss)


def cluster_households(
    profiles,
    k: int,
    d: int | None = None,
    energy: float | None = None,
    seed: int = 0,
    replicates: int = 100,
) -> HouseholdClustering:
    """Cluster households (columns of ``profiles``) on their latent SVD profiles.

    Each household is represented by its column of ``Sigma_d V_d^T``.
    """
    P = np.asarray(profiles, dtype=np.float64)
    n = P.shape[1]
    if not 1 <= int(k) <= n:
        raise InputError(f"household cluster count must be in 1..{n}, got {k}")
    if d is not None:
        d = min(int(d), min(P.shape))
    svd = truncated_svd(P, d=d, energy=energy)
    embedding = svd.V * svd.sigma[None, :]
    if int(k) == 1:
        return HouseholdClustering(np.zeros(n, dtype=np.int64), 1, embedding)
    result = kmeans_pp(embedding, int(k), replicates=replicates, seed=seed)
    return HouseholdClustering(np.asarray(result.assignments), int(k), embedding)


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InputError("labelings must have the same length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        x = x.astype(np.float64)
        return float(np.sum(x * (x - 1) / 2.0))

    index = pairs(table)
    row = pairs(table.sum(axis=1))
    col = pairs(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2.0
    expected = row * col / total if total else 0.0
    maximum = (row + col) / 2.0
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


# ---------------------------------------------------------------------------
# Cluster inspection


def cluster_report(clustering: HourClustering, encodings) -> np.ndarray:
    """Mean feature vector of each cluster (``r x 79``), i.e. the bar heights per coordinate."""
    from .encoding import cluster_vectors

    enc = np.asarray(encodings, dtype=np.float64)
    if enc.shape[0] != clustering.assignments.size:
        raise InputError(f"{enc.shape[0]} encodings for {clustering.assignments.size} clustered hours")
    return cluster_vectors(enc, clustering.assignments, clustering.r)


def write_cluster_report(vectors, path) -> None:
    """CSV rows ``cluster_id, coordinate_index, coordinate_label, mean_value``."""
    from .encoding import COORDINATE_LABELS

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["cluster_id", "coordinate_index", "coordinate_label", "mean_value"])
        for c, row in enumerate(np.asarray(vectors)):
            for q, value in enumerate(row):
                out.writerow([c, q, COORDINATE_LABELS[q], repr(float(value))])
