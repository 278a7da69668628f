"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names (``nearest_centroid``, ``centroid_sums``, ``group_norms``)
are bound at import time according to :mod:`fmf._accel`. The two
implementations perform the same floating-point operations in the same order,
so they agree bit-for-bit on every input tried in the test-suite; the numba
path only avoids the large temporaries.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# Coordinate ranges of the eight attribute groups in a 79-d feature vector.
GROUP_BOUNDS = np.array(
    [[0, 24], [24, 31], [31, 62], [62, 74], [74, 76], [76, 77], [77, 78], [78, 79]],
    dtype=np.int64,
)
N_GROUPS = 8


# ---------------------------------------------------------------------------
# k-means assignment step


def _nearest_centroid_numpy(X, C, x_sq):
    cross = X @ C.T
    c_sq = np.einsum("ij,ij->i", C, C)
    dist = (x_sq[:, None] - 2.0 * cross) + c_sq[None, :]
    labels = np.argmin(dist, axis=1)
    best = dist[np.arange(X.shape[0]), labels]
    return labels.astype(np.int64), np.maximum(best, 0.0)


@njit
def _argmin_rows(cross, x_sq, c_sq):
    m, r = cross.shape
    labels = np.empty(m, dtype=np.int64)
    best = np.empty(m, dtype=np.float64)
    for i in range(m):
        lab = 0
        val = (x_sq[i] - 2.0 * cross[i, 0]) + c_sq[0]
        for k in range(1, r):
            v = (x_sq[i] - 2.0 * cross[i, k]) + c_sq[k]
            if v < val:
                val = v
                lab = k
        labels[i] = lab
        best[i] = val if val > 0.0 else 0.0
    return labels, best


def _nearest_centroid_numba(X, C, x_sq):
    # The product itself goes through BLAS; the kernel fuses the argmin so the
    # m x r distance table is never materialized twice.
    cross = X @ C.T
    c_sq = np.einsum("ij,ij->i", C, C)
    return _argmin_rows(cross, x_sq, c_sq)


# ---------------------------------------------------------------------------
# k-means update step


def _centroid_sums_numpy(X, labels, r):
    m, d = X.shape
    flat = (labels[:, None] * d + np.arange(d)[None, :]).ravel()
    sums = np.bincount(flat, weights=X.ravel(), minlength=r * d).reshape(r, d)
    counts = np.bincount(labels, minlength=r).astype(np.int64)
    return sums, counts


@njit
def _centroid_sums_numba(X, labels, r):
    m, d = X.shape
    sums = np.zeros((r, d), dtype=np.float64)
    counts = np.zeros(r, dtype=np.int64)
    for i in range(m):
        k = labels[i]
        counts[k] += 1
        for j in range(d):
            sums[k, j] += X[i, j]
    return sums, counts


# ---------------------------------------------------------------------------
# Group-wise lp norms between hour vectors and cluster vectors


def _group_norms_numpy(VH, VC, p):
    m, r = VH.shape[0], VC.shape[0]
    out = np.empty((m, r, N_GROUPS), dtype=np.float64)
    for g in range(N_GROUPS):
        lo, hi = GROUP_BOUNDS[g]
        acc = np.zeros((m, r), dtype=np.float64)
        for q in range(lo, hi):
            diff = np.abs(VH[:, q][:, None] - VC[:, q][None, :])
            if p == 1.0:
                acc = acc + diff
            elif p == 2.0:
                acc = acc + diff * diff
            else:
                acc = acc + np.power(diff, p)
        if p == 1.0:
            out[:, :, g] = acc
        elif p == 2.0:
            out[:, :, g] = np.sqrt(acc)
        else:
            out[:, :, g] = np.power(acc, 1.0 / p)
    return out


@njit
def _group_norms_numba(VH, VC, p):
    m, r = VH.shape[0], VC.shape[0]
    out = np.empty((m, r, N_GROUPS), dtype=np.float64)
    for i in range(m):
        for k in range(r):
            for g in range(N_GROUPS):
                lo = GROUP_BOUNDS[g, 0]
                hi = GROUP_BOUNDS[g, 1]
                acc = 0.0
                for q in range(lo, hi):
                    diff = abs(VH[i, q] - VC[k, q])
                    if p == 1.0:
                        acc = acc + diff
                    elif p == 2.0:
                        acc = acc + diff * diff
                    else:
                        acc = acc + diff**p
                if p == 1.0:
                    out[i, k, g] = acc
                elif p == 2.0:
                    out[i, k, g] = np.sqrt(acc)
                else:
                    out[i, k, g] = acc ** (1.0 / p)
    return out


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def nearest_centroid(X, C, x_sq=None):
    """Index of and squared distance to the nearest row of ``C`` for each row of ``X``."""
    X, C = _as_f64(X), _as_f64(C)
    if x_sq is None:
        x_sq = np.einsum("ij,ij->i", X, X)
    impl = _nearest_centroid_numba if USE_NUMBA else _nearest_centroid_numpy
    return impl(X, C, x_sq)


def centroid_sums(X, labels, r):
    """Per-cluster coordinate sums and member counts."""
    X = _as_f64(X)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    impl = _centroid_sums_numba if USE_NUMBA else _centroid_sums_numpy
    return impl(X, labels, int(r))


def group_norms(VH, VC, p):
    """``(m, r, 8)`` array of per-group lp norms of ``VH[i] - VC[k]``."""
    VH, VC = _as_f64(np.atleast_2d(VH)), _as_f64(np.atleast_2d(VC))
    p = float(p)
    # libm pow and numpy's vectorized pow disagree in the last ulp, and the
    # compiled loop is slower there anyway, so other p use numpy on both backends.
    impl = _group_norms_numba if USE_NUMBA and p in (1.0, 2.0) else _group_norms_numpy
    return impl(VH, VC, p)
