"""Truncated SVD of the training design matrix and the latent hour embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

DEFAULT_ENERGY = 0.99


@dataclass(frozen=True, eq=False)
class TruncatedSVD:
    """Leading ``d`` singular triplets of a matrix.

    ``U`` is ``m x d``, ``sigma`` has length ``d`` (non-increasing), ``V`` is
    ``k x d``. ``energy_fraction`` is the share of ``sum(sigma_all ** 2)``
    retained by the first ``d`` values.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    energy_fraction: float
    total_energy: float

    @property
    def d(self) -> int:
        return self.sigma.size

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True, eq=False)
class HourEmbedding:
    H: np.ndarray

    @property
    def d(self) -> int:
        return self.H.shape[1]


def _check_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise InputError(f"need a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    return A


def _fix_signs(U, V):
    """Flip each pair so the largest-magnitude entry of the left vector is positive."""
    if U.shape[1] == 0:
        return U, V
    rows = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[rows, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def rank_for_energy(sigma, tau: float, total: float | None = None) -> int:
    """Smallest ``d`` whose leading ``sigma[:d]`` hold at least ``tau`` of the energy."""
    if not 0.0 < tau <= 1.0:
        raise InputError(f"energy threshold must lie in (0, 1], got {tau}")
    energy = np.cumsum(np.asarray(sigma, dtype=np.float64) ** 2)
    total = energy[-1] if total is None else total
    if total == 0:
        return 1
    frac = energy / total
    # Slack for rounding in the cumulative sum (tau = 1 must select full rank).
    hit = np.flatnonzero(frac >= tau - 1e-12)
    return int(hit[0]) + 1 if hit.size else int(frac.size)


def _exact(A):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return U, s, Vt.T


def _randomized(A, k, oversample, power_iters, rng):
    m, n = A.shape
    width = min(k + oversample, min(m, n))
    Y = A @ rng.standard_normal((n, width))
    Q, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Z)
    Ub, s, Vt = np.linalg.svd(Q.T @ A, full_matrices=False)
    return Q @ Ub, s, Vt.T


def truncated_svd(
    A,
    d: int | None = None,
    energy: float | None = None,
    method: str = "exact",
    oversample: int = 10,
    power_iters: int = 2,
    seed: int = 0,
) -> TruncatedSVD:
    """Rank-``d`` SVD of ``A``.

    Give either a fixed ``d`` or an energy threshold ``energy`` (default 0.99)
    in which case ``d`` is the smallest rank retaining that share of the
    squared singular values. ``method="randomized"`` uses a Gaussian range
    finder with ``oversample`` extra columns and ``power_iters`` subspace
    iterations; with an energy rule it doubles the sketch until the threshold
    is met.
    """
    A = _check_matrix(A)
    m, n = A.shape
    full_rank = min(m, n)
    if d is not None and energy is not None:
        raise InputError("give either d or energy, not both")
    if d is None and energy is None:
        energy = DEFAULT_ENERGY
    if energy is not None and not 0.0 < energy <= 1.0:
        raise InputError(f"energy threshold must lie in (0, 1], got {energy}")
    if d is not None:
        d = int(d)
        if not 1 <= d <= full_rank:
            raise InputError(f"d must be in 1..{full_rank}, got {d}")
    total = float(np.sum(A * A))

    if method == "exact":
        U, s, V = _exact(A)
    elif method == "randomized":
        rng = np.random.default_rng(seed)
        k = d if d is not None else max(1, min(full_rank, 16))
        while True:
            U, s, V = _randomized(A, k, oversample, power_iters, rng)
            if d is not None or k >= full_rank:
                break
            if total == 0 or np.sum(s[:k] ** 2) / total >= energy:
                break
            k = min(full_rank, 2 * k)
    else:
        raise InputError(f"unknown SVD method {method!r}")

    if d is None:
        d = min(rank_for_energy(s, energy, total if method == "randomized" else None), s.size)
    U, s, V = U[:, :d], s[:d], V[:, :d]
    U, V = _fix_signs(U, V)
    kept = float(np.sum(s * s))
    frac = 1.0 if total == 0 else min(kept / total, 1.0)
    for arr in (U, s, V):
        arr.setflags(write=False)
    return TruncatedSVD(U, s, V, frac, total)


def hour_embedding(svd: TruncatedSVD) -> HourEmbedding:
    """Rows of ``U_d * diag(sigma_d)``: the latent representation of each training hour."""
    H = svd.U * svd.sigma[None, :]
    H.setflags(write=False)
    return HourEmbedding(H)


def energy_profile(A) -> list[tuple[int, float]]:
    """Cumulative energy fraction for every truncation rank ``d = 1 .. min(m, n)``."""
    A = _check_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    energy = np.cumsum(s * s)
    total = energy[-1]
    if total == 0:
        return [(i + 1, 1.0) for i in range(s.size)]
    frac = np.minimum(energy / total, 1.0)
    frac = np.maximum.accumulate(frac)
    frac[-1] = 1.0
    return [(i + 1, float(f)) for i, f in enumerate(frac)]
