"""Vocabulary stores: compression, TTEV1 bytes, accounting."""

import struct

import numpy as np
import pytest

from ttembed.synthetic import gaussian_matrix
from ttembed.tt import TtConfig
from ttembed.vocab import (
    CompressedVocabulary,
    TtevFormatError,
    accounting_from_counts,
    add_token,
    compress_vocabulary,
    from_bytes,
    get_embedding,
    layer_accounting,
    load,
    save,
    to_bytes,
)


@pytest.fixture
def small_store():
    matrix = gaussian_matrix(4, 27, seed=100)
    cfg = TtConfig(dims=(3, 3, 3), epsilon=0.0)
    return matrix, compress_vocabulary(matrix, cfg)


def test_compress_reconstruct_all_rows(small_store):
    matrix, store = small_store
    assert store.vocab_size == 4
    for i in range(4):
        emb = get_embedding(store, i)
        assert np.linalg.norm(emb - matrix[i]) <= 1e-12 * np.linalg.norm(matrix[i])


def test_get_embedding_bounds(small_store):
    _, store = small_store
    with pytest.raises(IndexError):
        get_embedding(store, 4)
    with pytest.raises(IndexError):
        get_embedding(store, -1)


def test_compress_validation():
    cfg = TtConfig(dims=(3, 3, 3), epsilon=0.0)
    with pytest.raises(ValueError):
        compress_vocabulary(np.zeros((2, 26)), cfg)
    with pytest.raises(ValueError):
        compress_vocabulary(np.zeros(27), cfg)
    bad = np.zeros((3, 27))
    bad[1, 5] = np.nan
    with pytest.raises(ValueError, match="row 1"):
        compress_vocabulary(bad, cfg)
    with pytest.raises(ValueError):
        compress_vocabulary(np.zeros((2, 27)), cfg, parallelism=0)


def test_parallelism_does_not_change_bytes():
    matrix = gaussian_matrix(16, 24, seed=5)
    cfg = TtConfig(dims=(2, 3, 4), rank_caps=(1, 2, 2, 1), epsilon=0.05)
    serial = compress_vocabulary(matrix, cfg, parallelism=1)
    threaded = compress_vocabulary(matrix, cfg, parallelism=8)
    assert to_bytes(serial) == to_bytes(threaded)
    assert serial == threaded


def test_save_load_save_is_byte_identical(small_store, tmp_path):
    _, store = small_store
    path = tmp_path / "store.ttev"
    save(store, path)
    raw1 = path.read_bytes()
    again = load(path)
    save(again, path)
    assert path.read_bytes() == raw1


def test_values_are_float32_at_rest(small_store):
    _, store = small_store
    loaded = from_bytes(to_bytes(store))
    for tok, tok_loaded in zip(store.tokens, loaded.tokens):
        for core, core_loaded in zip(tok.cores, tok_loaded.cores):
            want = core.data.astype(np.float32).astype(np.float64)
            assert np.array_equal(core_loaded.data, want)


def test_header_golden_bytes(small_store):
    _, store = small_store
    raw = to_bytes(store)
    want = (
        b"TTEV"
        + struct.pack("<IB3x", 1, 0)
        + struct.pack("<QQI", 27, 4, 3)
        + struct.pack("<3I", 3, 3, 3)
        + struct.pack("<d", 0.0)
    )
    assert raw[: len(want)] == want


def test_epsilon_survives_round_trip():
    matrix = gaussian_matrix(2, 8, seed=9)
    store = compress_vocabulary(matrix, TtConfig(dims=(2, 2, 2), epsilon=0.1))
    assert from_bytes(to_bytes(store)).epsilon == 0.1


def test_format_errors_name_offsets(small_store):
    _, store = small_store
    raw = bytearray(to_bytes(store))

    with pytest.raises(TtevFormatError) as err:
        from_bytes(b"XXXX" + bytes(raw[4:]))
    assert err.value.offset == 0

    bad = raw.copy()
    bad[4:8] = struct.pack("<I", 9)
    with pytest.raises(TtevFormatError) as err:
        from_bytes(bytes(bad))
    assert err.value.offset == 4

    bad = raw.copy()
    bad[8] = 7
    with pytest.raises(TtevFormatError) as err:
        from_bytes(bytes(bad))
    assert err.value.offset == 8

    bad = raw.copy()
    bad[32:36] = struct.pack("<I", 5)  # prod(dims) no longer equals d
    with pytest.raises(TtevFormatError) as err:
        from_bytes(bytes(bad))
    assert err.value.offset == 32

    bad = raw.copy()
    bad[52:56] = struct.pack("<I", 2)  # token 0 boundary rank
    with pytest.raises(TtevFormatError, match="boundary") as err:
        from_bytes(bytes(bad))
    assert err.value.offset == 52

    bad = raw.copy()
    bad[56:60] = struct.pack("<I", 9)  # token 0 first bond rank
    with pytest.raises(TtevFormatError, match="infeasible") as err:
        from_bytes(bytes(bad))
    assert err.value.offset == 52

    with pytest.raises(TtevFormatError, match="truncated"):
        from_bytes(bytes(raw[:80]))

    with pytest.raises(TtevFormatError, match="trailing"):
        from_bytes(bytes(raw) + b"\0")


def test_add_token_matches_fresh_compression():
    matrix = gaussian_matrix(3, 27, seed=42)
    cfg = TtConfig(dims=(3, 3, 3), rank_caps=(1, 2, 2, 1), epsilon=0.0)
    store = compress_vocabulary(matrix, cfg)
    token_id = add_token(store, matrix[0], cfg)
    assert token_id == 3
    a = get_embedding(store, 0)
    b = get_embedding(store, token_id)
    assert np.linalg.norm(a - b) <= 1e-10


def test_add_token_dims_must_match():
    store = compress_vocabulary(
        gaussian_matrix(1, 8, seed=1), TtConfig(dims=(2, 2, 2), epsilon=0.0)
    )
    with pytest.raises(ValueError):
        add_token(store, np.zeros(8), TtConfig(dims=(4, 2), epsilon=0.0))
    with pytest.raises(ValueError):
        add_token(store, np.zeros(9))


def test_store_rejects_mismatched_tokens():
    good = compress_vocabulary(
        gaussian_matrix(1, 8, seed=2), TtConfig(dims=(2, 2, 2), epsilon=0.0)
    )
    with pytest.raises(ValueError):
        CompressedVocabulary(dims=(2, 4), epsilon=0.0, d=8, tokens=good.tokens)


def test_layer_accounting_uniform_store():
    matrix = gaussian_matrix(5, 27, seed=3)
    cfg = TtConfig(dims=(3, 3, 3), rank_caps=(1, 1, 1, 1), epsilon=0.0)
    store = compress_vocabulary(matrix, cfg)
    acc = layer_accounting(store)
    assert acc.original_params == 5 * 27
    assert acc.compressed_params == 5 * 9
    assert acc.eta == pytest.approx((135 - 45) / 45)
    assert acc.eta_emb == pytest.approx(90 / 135)
    # position rows priced at the (uniform) per-token cost
    acc_pos = layer_accounting(store, position_rows=10)
    assert acc_pos.original_params == 15 * 27
    assert acc_pos.compressed_params == 15 * 9
    assert acc_pos.whole_model_reduction_fraction is None


def test_accounting_from_counts_examples():
    flat = accounting_from_counts(100, 100)
    assert flat.eta == 0.0
    assert flat.eta_emb == 0.0
    acc = accounting_from_counts(51281 * 768, 51281 * 19, model_total_params=81.9e6)
    assert acc.whole_model_reduction_fraction == pytest.approx(0.469, abs=0.002)
    with pytest.raises(ValueError):
        accounting_from_counts(-1, 0)


def test_accounting_empty_store_is_all_zero():
    store = CompressedVocabulary(dims=(2, 2), epsilon=0.0, d=4, tokens=[])
    acc = layer_accounting(store)
    assert acc.original_params == 0
    assert acc.compressed_params == 0
    assert acc.eta == 0.0
    with pytest.raises(ValueError):
        layer_accounting(store, position_rows=5)
