"""Deterministic fixture generators and the counter-mode PRNG."""

import numpy as np
import pytest

from ttembed.synthetic import (
    gaussian_matrix,
    make_matrix,
    random_gaussian,
    random_u64,
    random_uniform,
    separable_matrix,
    striped_matrix,
)
from ttembed.tt import TtConfig, tt_svd

MASK = (1 << 64) - 1


def scalar_splitmix(seed: int, index: int) -> int:
    """Plain-integer reference for one draw (independent of numpy)."""
    z = (seed + index * 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return (z ^ (z >> 31)) & MASK


def test_u64_stream_matches_scalar_reference():
    for seed in (0, 1, 0xDEADBEEF, MASK):
        got = random_u64(seed, 8)
        want = [scalar_splitmix(seed, i) for i in range(1, 9)]
        assert [int(v) for v in got] == want


def test_streams_are_counter_addressable():
    full = random_u64(9, 10)
    tail = random_u64(9, 7, start=3)
    assert np.array_equal(full[3:], tail)


def test_uniform_is_in_open_unit_interval():
    u = random_uniform(3, 10000)
    assert u.min() > 0.0
    assert u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.02


def test_gaussian_moments_and_determinism():
    z = random_gaussian(7, 20000)
    assert abs(z.mean()) < 0.05
    assert abs(z.std() - 1.0) < 0.05
    assert np.array_equal(z, random_gaussian(7, 20000))
    with pytest.raises(ValueError):
        random_gaussian(7, 10, start=3)


def test_matrices_are_deterministic_and_seed_sensitive():
    a = gaussian_matrix(4, 6, seed=1)
    assert np.array_equal(a, gaussian_matrix(4, 6, seed=1))
    assert not np.array_equal(a, gaussian_matrix(4, 6, seed=2))
    assert a.shape == (4, 6)


def test_separable_rows_have_unit_ranks():
    dims = (2, 3, 4)
    matrix = separable_matrix(5, dims, seed=21)
    cfg = TtConfig(dims=dims, epsilon=0.0)
    for row in matrix:
        assert tt_svd(row, cfg).ranks == (1, 1, 1, 1)


def test_striped_rows_share_a_template():
    matrix = striped_matrix(50, 40, seed=31, noise=0.1)
    spread_within_column = matrix.std(axis=0).mean()
    assert spread_within_column == pytest.approx(0.1, rel=0.3)
    exact = striped_matrix(3, 8, seed=1, noise=0.0)
    assert np.array_equal(exact[0], exact[1])


def test_make_matrix_dispatch():
    assert make_matrix("gaussian", 2, 6, seed=0).shape == (2, 6)
    assert make_matrix("separable", 2, 6, seed=0, dims=(2, 3)).shape == (2, 6)
    assert make_matrix("striped", 2, 6, seed=0).shape == (2, 6)
    with pytest.raises(ValueError, match="dims"):
        make_matrix("separable", 2, 6, seed=0)
    with pytest.raises(ValueError):
        make_matrix("separable", 2, 6, seed=0, dims=(2, 2))
    with pytest.raises(ValueError, match="unknown"):
        make_matrix("lava", 2, 6, seed=0)
