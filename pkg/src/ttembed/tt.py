"""Tensor-train decomposition of a single vector and its reconstruction.

A d-dimensional vector is folded into an order-N tensor and swept left to
right: at step k the working matrix is truncated-SVD-factored, the left
factor becomes core k with shape (r_{k-1}, I_k, r_k), and S @ Vt carries on.
The truncation budget per step is delta = eps / sqrt(N-1) * ||x||, which
guarantees a relative l2 reconstruction error of at most eps when no rank
cap interferes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import trunc_svd
from .tensor import DenseTensor, _check_dims


@dataclass(frozen=True)
class TtConfig:
    """Hyperparameters for one decomposition: tensor size, rank caps, eps.

    ``rank_caps`` is either None (unbounded) or a list r_0..r_N with the two
    boundary ranks pinned to 1.  Caps larger than the feasible bond size are
    harmless; the sweep clamps them implicitly.
    """

    dims: tuple[int, ...]
    rank_caps: tuple[int, ...] | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.rank_caps is not None:
            caps = tuple(int(r) for r in self.rank_caps)
            n = len(self.dims)
            if len(caps) != n + 1:
                raise ValueError(
                    f"rank_caps needs {n + 1} entries for {n} modes, got {len(caps)}"
                )
            if caps[0] != 1 or caps[-1] != 1:
                raise ValueError("boundary ranks r_0 and r_N must be 1")
            if any(r < 1 for r in caps):
                raise ValueError("rank caps must be positive")
            object.__setattr__(self, "rank_caps", caps)

    @property
    def d(self) -> int:
        return math.prod(self.dims)


@dataclass(eq=False)
class MpsCores:
    """Chain of order-3 cores; core k has dims (r_{k-1}, I_k, r_k)."""

    cores: list[DenseTensor]
    ranks: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.cores:
            raise ValueError("core chain must not be empty")
        ranks = []
        for k, core in enumerate(self.cores, start=1):
            if core.order != 3:
                raise ValueError(f"core {k} has order {core.order}, expected 3")
            left, _, right = core.dims
            if k == 1 and left != 1:
                raise ValueError(f"leading rank must be 1, got {left}")
            if ranks and left != ranks[-1]:
                raise ValueError(
                    f"rank chain broken at core {k}: {ranks[-1]} vs {left}"
                )
            if not ranks:
                ranks.append(left)
            ranks.append(right)
        if ranks[-1] != 1:
            raise ValueError(f"trailing rank must be 1, got {ranks[-1]}")
        computed = tuple(ranks)
        if self.ranks is None:
            self.ranks = computed
        elif tuple(self.ranks) != computed:
            raise ValueError(f"declared ranks {self.ranks} do not match cores {computed}")
        dims = tuple(core.dims[1] for core in self.cores)
        for k in range(1, len(dims)):
            bound = min(computed[k - 1] * dims[k - 1], math.prod(dims[k:]))
            if computed[k] > bound:
                raise ValueError(
                    f"rank r_{k}={computed[k]} exceeds the feasible bound {bound} "
                    f"for dims {dims}"
                )

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(core.dims[1] for core in self.cores)

    @property
    def order(self) -> int:
        return len(self.cores)

    def param_count(self) -> int:
        return param_count(self.dims, self.ranks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MpsCores):
            return NotImplemented
        return self.ranks == other.ranks and self.cores == other.cores


def param_count(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """Stored scalars of a core chain: sum over k of r_{k-1} * I_k * r_k."""
    dims = tuple(int(i) for i in dims)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims) + 1:
        raise ValueError(f"need {len(dims) + 1} ranks for {len(dims)} modes, got {len(ranks)}")
    if any(i < 1 for i in dims) or any(r < 1 for r in ranks):
        raise ValueError("dims and ranks must be positive")
    return sum(ranks[k] * dims[k] * ranks[k + 1] for k in range(len(dims)))


def compression_ratio_ttd(d: int, stored_params: int) -> float:
    """Per-vector ratio d / stored - 1; negative when the chain is larger."""
    if stored_params < 1:
        raise ValueError(f"stored_params must be >= 1, got {stored_params}")
    return d / stored_params - 1.0


def tt_svd(x: np.ndarray, cfg: TtConfig) -> MpsCores:
    """Decompose a vector into a core chain under ``cfg``.

    Rank caps win over the accuracy budget: when a cap truncates harder than
    delta would, the extra error is simply incurred (and visible through
    reconstruction), never raised.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    dims = cfg.dims
    n = len(dims)
    if x.size != cfg.d:
        raise ValueError(f"vector has {x.size} entries but dims {dims} require {cfg.d}")

    if n == 1:
        # No sweep to run; the vector is its own single core.
        core = DenseTensor((1, dims[0], 1), x)
        return MpsCores(cores=[core], ranks=(1, 1))

    delta = cfg.epsilon / math.sqrt(n - 1) * float(np.linalg.norm(x))

    cores: list[DenseTensor] = []
    ranks = [1]
    z = x.reshape(ranks[0] * dims[0], -1, order="F")
    for k in range(n - 1):
        cap = cfg.rank_caps[k + 1] if cfg.rank_caps is not None else None
        fac = trunc_svd(z, delta, cap)
        r = fac.rank
        cores.append(DenseTensor((ranks[-1], dims[k], r), fac.u.ravel(order="F")))
        sv = fac.s[:, None] * fac.vt
        z = sv.reshape(r * dims[k + 1], -1, order="F")
        ranks.append(r)
    cores.append(DenseTensor((ranks[-1], dims[-1], 1), z.ravel(order="F")))
    ranks.append(1)
    return MpsCores(cores=cores, ranks=tuple(ranks))


def reconstruct(cores: MpsCores) -> np.ndarray:
    """Contract the chain back into a vector of length prod(dims).

    Left-to-right: the running matrix holds the already-merged modes along
    rows and the open bond along columns, so each step is one small matmul.
    """
    acc = cores.cores[0].to_ndarray().reshape(-1, cores.ranks[1], order="F")
    for k, core in enumerate(cores.cores[1:], start=1):
        r_in, i_k, r_out = core.dims
        mat = core.to_ndarray().reshape(r_in, i_k * r_out, order="F")
        acc = acc @ mat
        acc = acc.reshape(-1, r_out, order="F")
    return np.asarray(acc, dtype=np.float64).ravel(order="F")
