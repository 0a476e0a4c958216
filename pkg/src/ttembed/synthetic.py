"""Deterministic synthetic embedding matrices for tests and benchmarks.

Randomness comes from splitmix64 (Steele, Lea, Flood 2014), a 64-bit-state
generator defined by three fixed mixing constants.  It is used here in
counter mode: draw i of stream ``seed`` mixes ``seed + (i+1)*GOLDEN_GAMMA``,
so any slice of the stream can be produced independently and the output is
identical across platforms and numpy versions.

Three row families are available: i.i.d. Gaussian rows (incompressible
baseline), separable rows (exactly rank 1 under any folding of the given
dims), and striped rows sharing one template with small per-row noise, which
yields the vertical-band structure seen in real embedding matrices.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def random_u64(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Draws ``start .. start+count-1`` of the splitmix64 stream ``seed``."""
    if count < 0 or start < 0:
        raise ValueError("count and start must be non-negative")
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(base + idx * GOLDEN_GAMMA)


def random_uniform(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform draws in the open interval (0, 1), 53-bit resolution."""
    bits = random_u64(seed, count, start) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def random_gaussian(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normal draws via the Box-Muller transform.

    Consumes two uniform draws per pair of outputs; ``start`` is an offset
    in output space and must be even to keep slices consistent.
    """
    if start % 2:
        raise ValueError("start must be even for gaussian draws")
    pairs = (count + 1) // 2
    u_start = start  # two uniforms per output pair = one per output
    u1 = random_uniform(seed, pairs, u_start)
    u2 = random_uniform(seed, pairs, u_start + pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return out[:count]


def gaussian_matrix(rows: int, dim: int, seed: int) -> np.ndarray:
    """i.i.d. standard normal rows."""
    if rows < 1 or dim < 1:
        raise ValueError("rows and dim must be >= 1")
    return random_gaussian(seed, rows * dim).reshape(rows, dim)


def separable_matrix(rows: int, dims: Sequence[int], seed: int) -> np.ndarray:
    """Rows that are outer products of per-mode factors (TT ranks all 1).

    Each row is the first-index-fastest linearization of f1 x f2 x ... x fN
    with Gaussian factor entries, so decomposing under ``dims`` recovers it
    exactly with every rank equal to 1.
    """
    dims = tuple(int(v) for v in dims)
    if rows < 1 or any(v < 1 for v in dims):
        raise ValueError("rows and all dims must be >= 1")
    factor_len = sum(dims)
    stride = factor_len + (factor_len % 2)
    out = np.empty((rows, math.prod(dims)))
    for i in range(rows):
        draws = random_gaussian(seed, factor_len, start=i * stride)
        row = np.ones(1)
        offset = 0
        for size in dims:
            factor = draws[offset : offset + size]
            offset += size
            row = np.outer(row, factor).ravel(order="F")
        out[i] = row
    return out


def striped_matrix(rows: int, dim: int, seed: int, noise: float = 0.1) -> np.ndarray:
    """One shared template row plus small i.i.d. Gaussian perturbations."""
    if rows < 1 or dim < 1:
        raise ValueError("rows and dim must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    template_len = dim + (dim % 2)
    template = random_gaussian(seed, dim)
    jitter = random_gaussian(seed, rows * dim, start=template_len)
    return template[None, :] + noise * jitter.reshape(rows, dim)


def make_matrix(
    kind: str, rows: int, dim: int, seed: int, dims: Sequence[int] | None = None
) -> np.ndarray:
    """Dispatch by family name; ``separable`` needs the fold shape."""
    if kind == "gaussian":
        return gaussian_matrix(rows, dim, seed)
    if kind == "separable":
        if dims is None:
            raise ValueError("separable matrices need dims")
        if math.prod(dims) != dim:
            raise ValueError(f"prod(dims) = {math.prod(dims)} but dim = {dim}")
        return separable_matrix(rows, dims, seed)
    if kind == "striped":
        return striped_matrix(rows, dim, seed)
    raise ValueError(f"unknown matrix kind {kind!r}; use gaussian, separable, striped")
