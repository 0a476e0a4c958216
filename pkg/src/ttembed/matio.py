"""Reading and writing embedding matrices.

Three interchange forms are supported:

* EMB1, a small self-describing binary container (little-endian):

      magic   4 bytes  "EMB1"
      version u32      1
      dtype   u8       0 = float32, 1 = float64
      reserved 3 bytes zero
      V       u64      row count
      d       u64      embedding dimension
      values  V*d entries, row-major

* CSV, one row per line, for hand-made fixtures.
* Raw headerless float32, row-major, with the shape given by the caller.

Matrices are always float64 in memory; EMB1 keeps whichever at-rest dtype
the writer chose.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
_DTYPES = {0: "<f4", 1: "<f8"}
_DTYPE_CODES = {"f32": 0, "f64": 1}


class MatrixFormatError(ValueError):
    """Malformed matrix stream; the message names the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_emb1(matrix: np.ndarray, sink: str | Path | BinaryIO, dtype: str = "f64") -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {matrix.ndim} axes")
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPE_CODES)}, got {dtype!r}")
    code = _DTYPE_CODES[dtype]
    head = EMB_MAGIC + struct.pack("<IB3xQQ", EMB_VERSION, code, *matrix.shape)
    body = np.ascontiguousarray(matrix).astype(_DTYPES[code]).tobytes()
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(head + body)
    else:
        sink.write(head + body)


def emb1_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 28:
        raise MatrixFormatError(f"header needs 28 bytes, stream has {len(buf)}", 0)
    if buf[:4] != EMB_MAGIC:
        raise MatrixFormatError("bad magic, expected 'EMB1'", 0)
    version, code, rows, dim = struct.unpack_from("<IB3xQQ", buf, 4)
    if version != EMB_VERSION:
        raise MatrixFormatError(f"unsupported version {version}, expected {EMB_VERSION}", 4)
    if code not in _DTYPES:
        raise MatrixFormatError(f"unsupported dtype code {code}", 8)
    itemsize = 4 if code == 0 else 8
    need = rows * dim * itemsize
    have = len(buf) - 28
    if have < need:
        raise MatrixFormatError(
            f"values need {need} bytes for {rows}x{dim}, {have} left", 28
        )
    if have > need:
        raise MatrixFormatError(f"{have - need} trailing bytes after values", 28 + need)
    values = np.frombuffer(buf, dtype=_DTYPES[code], count=rows * dim, offset=28)
    return values.astype(np.float64).reshape(rows, dim)


def read_emb1(source: str | Path | bytes | BinaryIO) -> np.ndarray:
    if isinstance(source, bytes):
        return emb1_from_bytes(source)
    if isinstance(source, (str, Path)):
        return emb1_from_bytes(Path(source).read_bytes())
    return emb1_from_bytes(source.read())


def read_csv_matrix(source: str | Path) -> np.ndarray:
    matrix = np.loadtxt(source, delimiter=",", dtype=np.float64, ndmin=2)
    return matrix


def write_csv_matrix(matrix: np.ndarray, sink: str | Path) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {matrix.ndim} axes")
    np.savetxt(sink, matrix, delimiter=",", fmt="%.17g")


def read_raw_f32(source: str | Path, rows: int, dim: int) -> np.ndarray:
    if rows < 1 or dim < 1:
        raise ValueError(f"rows and dim must be >= 1, got {rows}, {dim}")
    buf = Path(source).read_bytes()
    need = rows * dim * 4
    if len(buf) != need:
        raise MatrixFormatError(
            f"raw f32 of shape {rows}x{dim} needs {need} bytes, stream has {len(buf)}", 0
        )
    return np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(rows, dim)


def read_matrix(
    path: str | Path,
    fmt: str | None = None,
    rows: int | None = None,
    dim: int | None = None,
) -> np.ndarray:
    """Read a matrix, sniffing the container when ``fmt`` is not given.

    EMB1 is recognized by magic, ``.csv`` by extension; raw float32 must be
    requested explicitly together with its shape.
    """
    path = Path(path)
    if fmt is None:
        head = path.open("rb").read(4)
        if head == EMB_MAGIC:
            fmt = "emb1"
        elif path.suffix.lower() == ".csv":
            fmt = "csv"
        else:
            raise ValueError(
                f"cannot infer format of {path.name}; pass one of emb1, csv, raw"
            )
    if fmt == "emb1":
        return read_emb1(path)
    if fmt == "csv":
        return read_csv_matrix(path)
    if fmt == "raw":
        if rows is None or dim is None:
            raise ValueError("raw format needs explicit rows and dim")
        return read_raw_f32(path, rows, dim)
    raise ValueError(f"unknown matrix format {fmt!r}")
