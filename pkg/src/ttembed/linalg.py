"""Frobenius norm and the delta-truncated SVD used by the tensor-train sweep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DenseTensor

# Singular values below this fraction of the largest one are numerical noise
# and are treated as exact zeros.
RANK_FLOOR = 1e-14


@dataclass(frozen=True)
class TruncatedSvdResult:
    """Kept factors of a truncated SVD plus the energy that was dropped.

    ``u`` has orthonormal columns (m x r), ``s`` the kept singular values in
    non-increasing order, ``vt`` orthonormal rows (r x n).  The discarded
    part E = Z - u @ diag(s) @ vt satisfies ||E||_F == discarded_energy up to
    roundoff.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    discarded_energy: float

    @property
    def rank(self) -> int:
        return int(self.s.size)


def frobenius_norm(t: DenseTensor | np.ndarray) -> float:
    """sqrt of the sum of squared entries."""
    data = t.data if isinstance(t, DenseTensor) else np.asarray(t, dtype=np.float64)
    return float(np.linalg.norm(data.reshape(-1)))


def trunc_svd(z: np.ndarray, delta: float, rank_cap: int | None = None) -> TruncatedSvdResult:
    """SVD keeping the smallest rank whose discarded tail is within ``delta``.

    The tail is measured as the root-sum-square of the dropped singular
    values, so the dropped part E has ||E||_F <= delta whenever the cap is
    inactive.  If ``rank_cap`` forces a smaller rank, the (then larger)
    discarded energy is still reported truthfully.  At least one direction is
    always kept so downstream factor shapes stay valid.

    Deterministic: ties and signs are fixed by making the first
    significantly nonzero entry of each kept left singular vector
    non-negative.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"expected a matrix, got {z.ndim} axes")
    if not np.all(np.isfinite(z)):
        raise ValueError("matrix contains non-finite entries")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if rank_cap is not None and rank_cap < 1:
        raise ValueError(f"rank_cap must be a positive integer, got {rank_cap}")

    u, s, vt = np.linalg.svd(z, full_matrices=False)

    # Zero out numerical noise before applying the truncation rule.
    if s.size and s[0] > 0:
        s = np.where(s < RANK_FLOOR * s[0], 0.0, s)
    else:
        s = np.zeros_like(s)

    # Smallest r with sqrt(sum of s[r:]**2) <= delta.
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[r] = rss of s[r:]
    r_delta = int(np.searchsorted(-tail, -delta))  # tail is non-increasing
    r_delta = max(r_delta, 1)
    r = min(rank_cap, r_delta) if rank_cap is not None else r_delta
    r = min(r, s.size)

    discarded = float(np.sqrt(np.sum(s[r:] ** 2)))
    u = u[:, :r].copy()
    s = s[:r].copy()
    vt = vt[:r, :].copy()

    # Sign fix for determinism.
    for j in range(r):
        col = u[:, j]
        peak = np.max(np.abs(col))
        if peak == 0.0:
            continue
        nz = np.nonzero(np.abs(col) > 1e-12 * peak)[0]
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
            vt[j, :] = -vt[j, :]

    return TruncatedSvdResult(u=u, s=s, vt=vt, discarded_energy=discarded)
