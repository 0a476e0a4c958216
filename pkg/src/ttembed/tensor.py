"""Dense order-N tensors with a fixed little-endian memory layout.

Every reshape in this package, including the ones inside the tensor-train
sweep, uses the same linearization: the first index runs fastest.  A vector
``x`` folded into dims ``(I1, ..., IN)`` therefore satisfies

    T[i1, ..., iN] = x[(i1-1) + (i2-1)*I1 + (i3-1)*I1*I2 + ...]

with 1-based indices.  Keeping one convention is what makes folding,
unfolding, core extraction and reconstruction mutually consistent.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(i) for i in dims)
    if len(dims) < 1:
        raise ValueError("tensor order must be at least 1")
    for k, size in enumerate(dims, start=1):
        if size < 1:
            raise ValueError(f"mode {k} has size {size}; every mode size must be >= 1")
    return dims


class DenseTensor:
    """An order-N real tensor stored as a flat little-endian float64 array.

    Value semantics: the data buffer is copied on construction and marked
    read-only, so instances are safe to share across threads.
    """

    __slots__ = ("_dims", "_data")

    def __init__(self, dims: Sequence[int], data: Iterable[float] | np.ndarray):
        dims = _check_dims(dims)
        arr = np.array(data, dtype=np.float64, copy=True).reshape(-1)
        size = math.prod(dims)
        if arr.size != size:
            raise ValueError(
                f"data has {arr.size} entries but dims {dims} require {size}"
            )
        arr.flags.writeable = False
        self._dims = dims
        self._data = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def data(self) -> np.ndarray:
        """Flat little-endian linearization (read-only, length prod(dims))."""
        return self._data

    @property
    def order(self) -> int:
        return len(self._dims)

    @property
    def size(self) -> int:
        return self._data.size

    @classmethod
    def from_ndarray(cls, arr: np.ndarray) -> "DenseTensor":
        """Wrap a multi-dimensional array, reading its axes as modes 1..N."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim < 1:
            raise ValueError("array must have at least one axis")
        return cls(arr.shape, arr.ravel(order="F"))

    def to_ndarray(self) -> np.ndarray:
        """Read-only ndarray view with shape ``dims`` (no copy)."""
        return self._data.reshape(self._dims, order="F")

    def entry(self, *indices: int) -> float:
        """Entry accessor with 1-based indices, one per mode."""
        if len(indices) != self.order:
            raise ValueError(
                f"expected {self.order} indices, got {len(indices)}"
            )
        lin = 0
        stride = 1
        for k, (i, size) in enumerate(zip(indices, self._dims), start=1):
            if not 1 <= i <= size:
                raise IndexError(f"index {i} out of range 1..{size} for mode {k}")
            lin += (i - 1) * stride
            stride *= size
        return float(self._data[lin])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self._dims == other._dims and np.array_equal(self._data, other._data)

    __hash__ = None  # array-backed, deliberately unhashable

    def __repr__(self) -> str:
        return f"DenseTensor(dims={self._dims})"


def tensorize(x: Iterable[float] | np.ndarray, dims: Sequence[int]) -> DenseTensor:
    """Fold a vector into an order-N tensor.

    Pure metadata attachment: the flat data is stored as-is and the
    little-endian index map decides which entry lives where.
    """
    dims = _check_dims(dims)
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    size = math.prod(dims)
    if arr.size != size:
        raise ValueError(
            f"vector has {arr.size} entries but dims {dims} require {size}"
        )
    return DenseTensor(dims, arr)


def vectorize(t: DenseTensor) -> np.ndarray:
    """Flatten a tensor back to a vector (exact inverse of tensorize)."""
    return t.data.copy()


def matricize(t: DenseTensor, mode: int) -> np.ndarray:
    """Mode-k unfolding: an I_k x prod(other dims) matrix.

    Columns are indexed by the little-endian combination of the remaining
    indices in their natural order.  Mode 1 is a zero-copy reinterpretation
    of the flat data.
    """
    if not 1 <= mode <= t.order:
        raise ValueError(f"mode {mode} out of range 1..{t.order}")
    arr = t.to_ndarray()
    moved = np.moveaxis(arr, mode - 1, 0)
    return moved.reshape(t.dims[mode - 1], -1, order="F")


def contract(a: DenseTensor, b: DenseTensor, mode_a: int, mode_b: int) -> DenseTensor:
    """Contract mode ``mode_a`` of ``a`` with mode ``mode_b`` of ``b``.

    Modes are 1-based.  The result's modes are ``a``'s remaining modes in
    order followed by ``b``'s remaining modes in order; contracting two
    matrices over (2, 1) is exactly the matrix product.
    """
    if not 1 <= mode_a <= a.order:
        raise ValueError(f"mode {mode_a} out of range 1..{a.order} for first tensor")
    if not 1 <= mode_b <= b.order:
        raise ValueError(f"mode {mode_b} out of range 1..{b.order} for second tensor")
    na = a.dims[mode_a - 1]
    nb = b.dims[mode_b - 1]
    if na != nb:
        raise ValueError(
            f"contracted mode sizes differ: {na} (mode {mode_a}) vs {nb} (mode {mode_b})"
        )
    if a.order + b.order < 3:
        raise ValueError(
            "contracting two order-1 tensors yields a scalar, which has no tensor form"
        )
    out = np.tensordot(a.to_ndarray(), b.to_ndarray(), axes=([mode_a - 1], [mode_b - 1]))
    return DenseTensor.from_ndarray(out)
