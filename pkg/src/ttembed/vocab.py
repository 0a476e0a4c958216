"""Whole-vocabulary compression, the TTEV1 file format, and layer accounting.

A compressed vocabulary is one core chain per token plus shared shape
metadata.  Tokens are decomposed independently, so rows can be processed in
parallel and new tokens appended later without touching existing ones.

TTEV1 layout (little-endian):

    magic   4 bytes  "TTEV"
    version u32      1
    dtype   u8       0 = float32 payload
    reserved 3 bytes zero
    d       u64      original embedding dimension (== prod(dims))
    V       u64      token count
    N       u32      tensor order
    dims    N x u32
    epsilon f64
    per token:
        ranks  (N+1) x u32          r_0 .. r_N, boundaries 1
        cores  k = 1..N, float32, each linearized first-index-fastest
               over (r_{k-1}, I_k, r_k)

Values are held as float64 in memory and stored as float32 at rest, so a
save/load/save cycle is byte-identical.
"""

from __future__ import annotations

import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .tensor import DenseTensor
from .tt import MpsCores, TtConfig, param_count, tt_svd, reconstruct

MAGIC = b"TTEV"
VERSION = 1
DTYPE_F32 = 0


class TtevFormatError(ValueError):
    """Malformed TTEV1 stream; the message names the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(eq=False)
class CompressedVocabulary:
    """Per-token core chains sharing one tensor size and accuracy setting."""

    dims: tuple[int, ...]
    epsilon: float
    d: int
    tokens: list[MpsCores] = field(default_factory=list)

    def __post_init__(self):
        self.dims = tuple(int(i) for i in self.dims)
        if math.prod(self.dims) != self.d:
            raise ValueError(f"prod(dims)={math.prod(self.dims)} but d={self.d}")
        for i, tok in enumerate(self.tokens):
            if tok.dims != self.dims:
                raise ValueError(f"token {i} has dims {tok.dims}, store has {self.dims}")

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def compressed_params(self) -> int:
        return sum(tok.param_count() for tok in self.tokens)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompressedVocabulary):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.epsilon == other.epsilon
            and self.d == other.d
            and self.tokens == other.tokens
        )


def compress_vocabulary(
    matrix: np.ndarray, cfg: TtConfig, parallelism: int = 1
) -> CompressedVocabulary:
    """Decompose each row of a V x d matrix under one configuration.

    The result is assembled in row order and does not depend on the degree
    of parallelism.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {matrix.ndim} axes")
    if matrix.shape[1] != cfg.d:
        raise ValueError(
            f"rows have length {matrix.shape[1]} but dims {cfg.dims} require {cfg.d}"
        )
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    bad = np.nonzero(~np.isfinite(matrix).all(axis=1))[0]
    if bad.size:
        raise ValueError(f"row {int(bad[0])} contains non-finite entries")

    rows = [matrix[i] for i in range(matrix.shape[0])]
    if parallelism == 1 or len(rows) < 2:
        tokens = [tt_svd(row, cfg) for row in rows]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            tokens = list(pool.map(lambda row: tt_svd(row, cfg), rows))
    return CompressedVocabulary(dims=cfg.dims, epsilon=cfg.epsilon, d=cfg.d, tokens=tokens)


def get_embedding(v: CompressedVocabulary, token_id: int) -> np.ndarray:
    """Reconstruct one token's embedding vector."""
    if not 0 <= token_id < v.vocab_size:
        raise IndexError(f"token id {token_id} out of range 0..{v.vocab_size - 1}")
    return reconstruct(v.tokens[token_id])


def add_token(
    v: CompressedVocabulary, embedding: np.ndarray, cfg: TtConfig | None = None
) -> int:
    """Compress and append one new embedding; returns its token id.

    Without an override the store's own dims and epsilon are used with
    unbounded ranks.  An override may change caps or epsilon but must keep
    the store's tensor size.
    """
    if cfg is None:
        cfg = TtConfig(dims=v.dims, rank_caps=None, epsilon=v.epsilon)
    elif cfg.dims != v.dims:
        raise ValueError(f"override dims {cfg.dims} differ from store dims {v.dims}")
    embedding = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if embedding.size != v.d:
        raise ValueError(f"expected embedding of length {v.d}, got {embedding.size}")
    v.tokens.append(tt_svd(embedding, cfg))
    return v.vocab_size - 1


# ---------------------------------------------------------------------------
# TTEV1 serialization


def to_bytes(v: CompressedVocabulary) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<IB3x", VERSION, DTYPE_F32))
    out.write(struct.pack("<QQI", v.d, v.vocab_size, len(v.dims)))
    out.write(struct.pack(f"<{len(v.dims)}I", *v.dims))
    out.write(struct.pack("<d", v.epsilon))
    for tok in v.tokens:
        out.write(struct.pack(f"<{len(tok.ranks)}I", *tok.ranks))
        for core in tok.cores:
            out.write(core.data.astype("<f4").tobytes())
    return out.getvalue()


def save(v: CompressedVocabulary, sink: str | Path | BinaryIO) -> None:
    """Write the store to a path or binary stream (deterministic bytes)."""
    payload = to_bytes(v)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(payload)
    else:
        sink.write(payload)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TtevFormatError(
                f"truncated stream: {what} needs {n} bytes, {len(self.buf) - self.pos} left",
                self.pos,
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf: bytes) -> CompressedVocabulary:
    cur = _Cursor(buf)
    if cur.take(4, "magic") != MAGIC:
        raise TtevFormatError("bad magic, expected 'TTEV'", 0)
    (version,) = cur.unpack("<I", "version")
    if version != VERSION:
        raise TtevFormatError(f"unsupported version {version}, expected {VERSION}", 4)
    (dtype,) = cur.unpack("<B", "dtype")
    if dtype != DTYPE_F32:
        raise TtevFormatError(f"unsupported dtype code {dtype}", 8)
    cur.take(3, "reserved")
    d, vocab, order = cur.unpack("<QQI", "d/V/N header")
    if order < 1:
        raise TtevFormatError("tensor order must be >= 1", 28)
    dims_off = cur.pos
    dims = cur.unpack(f"<{order}I", "dims")
    if any(i < 1 for i in dims):
        raise TtevFormatError(f"dims {dims} contain a zero mode", dims_off)
    if math.prod(dims) != d:
        raise TtevFormatError(f"prod(dims)={math.prod(dims)} but header d={d}", dims_off)
    (epsilon,) = cur.unpack("<d", "epsilon")

    tokens: list[MpsCores] = []
    for t in range(vocab):
        ranks_off = cur.pos
        ranks = cur.unpack(f"<{order + 1}I", f"ranks of token {t}")
        if ranks[0] != 1 or ranks[-1] != 1:
            raise TtevFormatError(
                f"token {t} boundary ranks must be 1, got {ranks[0]},{ranks[-1]}", ranks_off
            )
        if any(r < 1 for r in ranks):
            raise TtevFormatError(f"token {t} has a zero rank", ranks_off)
        for k in range(1, order):
            tail = math.prod(dims[k:])
            if ranks[k] > ranks[k - 1] * dims[k - 1] or ranks[k] > tail:
                raise TtevFormatError(
                    f"token {t} rank r_{k}={ranks[k]} infeasible for dims {dims}", ranks_off
                )
        cores = []
        for k in range(order):
            count = ranks[k] * dims[k] * ranks[k + 1]
            raw = cur.take(4 * count, f"core {k + 1} of token {t}")
            data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            cores.append(DenseTensor((ranks[k], dims[k], ranks[k + 1]), data))
        tokens.append(MpsCores(cores=cores, ranks=tuple(int(r) for r in ranks)))

    if cur.pos != len(buf):
        raise TtevFormatError(f"{len(buf) - cur.pos} trailing bytes after last token", cur.pos)
    return CompressedVocabulary(dims=tuple(int(i) for i in dims), epsilon=epsilon, d=int(d), tokens=tokens)


def load(source: str | Path | bytes | BinaryIO) -> CompressedVocabulary:
    """Read a TTEV1 store from a path, bytes, or binary stream."""
    if isinstance(source, bytes):
        return from_bytes(source)
    if isinstance(source, (str, Path)):
        return from_bytes(Path(source).read_bytes())
    return from_bytes(source.read())


# ---------------------------------------------------------------------------
# Accounting


@dataclass(frozen=True)
class LayerAccounting:
    """Parameter counts and the three ratio conventions side by side.

    ``eta`` divides the saving by the compressed size, ``eta_emb`` by the
    original size; both are reported as-is rather than reconciled.
    """

    original_params: int
    compressed_params: int
    eta: float
    eta_emb: float
    model_total_params: float | None = None
    whole_model_reduction_fraction: float | None = None


def accounting_from_counts(
    original_params: int,
    compressed_params: int,
    model_total_params: float | None = None,
) -> LayerAccounting:
    """Build the accounting from raw parameter counts."""
    if original_params < 0 or compressed_params < 0:
        raise ValueError("parameter counts must be non-negative")
    saved = original_params - compressed_params
    eta = saved / compressed_params if compressed_params else 0.0
    eta_emb = saved / original_params if original_params else 0.0
    fraction = saved / model_total_params if model_total_params else None
    return LayerAccounting(
        original_params=original_params,
        compressed_params=compressed_params,
        eta=eta,
        eta_emb=eta_emb,
        model_total_params=model_total_params,
        whole_model_reduction_fraction=fraction,
    )


def layer_accounting(
    v: CompressedVocabulary,
    position_rows: int = 0,
    model_total_params: float | None = None,
) -> LayerAccounting:
    """Accounting for a store, optionally extended by a position table.

    ``position_rows`` adds that many rows priced at the store's mean stored
    params per token (exact whenever rank caps make every token uniform,
    e.g. caps all 1).
    """
    if position_rows < 0:
        raise ValueError("position_rows must be >= 0")
    vocab = v.vocab_size
    token_params = v.compressed_params()
    rows = vocab + position_rows
    original = rows * v.d
    compressed = token_params
    if position_rows:
        if vocab == 0:
            raise ValueError("cannot extrapolate position rows from an empty store")
        compressed += round(position_rows * token_params / vocab)
    return accounting_from_counts(original, compressed, model_total_params)
