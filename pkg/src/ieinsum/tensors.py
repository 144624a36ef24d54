"""Dense tensor I/O: a small binary container format and a MatrixMarket reader.

Dense tensors are plain ``numpy.ndarray`` objects of dtype float64 or int64.

Binary layout (all fields little-endian)::

    offset  size      field
    0       4         magic  b"IETN"
    4       4         rank   uint32, >= 1
    8       8*rank    dims   uint64 each, >= 0
    ...     4         elem   uint32, 0 = real64, 1 = int64
    ...     8*prod    payload, row-major
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .validation import INT, REAL, check_tensor

__all__ = ["MAGIC", "TensorFormatError", "MatrixMarketError", "save_tensor", "load_tensor",
           "load_matrix_market", "write_matrix_market"]

MAGIC = b"IETN"
_ELEM_CODES = {REAL: 0, INT: 1}
_CODE_ELEMS = {v: k for k, v in _ELEM_CODES.items()}

PathLike = Union[str, os.PathLike]


class TensorFormatError(ValueError):
    pass


class MatrixMarketError(ValueError):
    pass


def save_tensor(path: PathLike, t) -> None:
    arr = check_tensor(t, "tensor")
    arr = np.ascontiguousarray(arr)
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    header += struct.pack("<I", _ELEM_CODES[arr.dtype])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def load_tensor(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise TensorFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank < 1:
        raise TensorFormatError(f"{path}: rank must be >= 1")
    off = 8 + 8 * rank
    if len(raw) < off + 4:
        raise TensorFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", raw, 8)
    (code,) = struct.unpack_from("<I", raw, off)
    if code not in _CODE_ELEMS:
        raise TensorFormatError(f"{path}: unknown element kind {code}")
    dtype = _CODE_ELEMS[code]
    count = int(np.prod(dims, dtype=np.int64))
    payload = raw[off + 4:]
    if len(payload) != count * 8:
        raise TensorFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {count * 8} (truncated or corrupt)")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


# -- MatrixMarket ----------------------------------------------------------

def load_matrix_market(path: PathLike):
    """Read a ``.mtx`` file.

    Coordinate files return a :class:`~ieinsum.formats.CooMatrix` with
    zero-based coordinates in file order (duplicates kept); array files
    return a dense ndarray.  ``symmetric`` and ``skew-symmetric`` storage is
    expanded to full storage.  ``pattern`` entries get the value 1.0.
    """
    from .formats import CooMatrix

    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket" or head[1].lower() != "matrix":
        raise MatrixMarketError(f"{path}: malformed header {lines[0]!r}")
    layout, field, symmetry = (h.lower() for h in head[2:])
    if layout not in ("coordinate", "array"):
        raise MatrixMarketError(f"{path}: unknown layout {layout!r}")
    if field not in ("real", "double", "integer", "pattern"):
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")
    if field == "pattern" and layout == "array":
        raise MatrixMarketError(f"{path}: pattern field requires coordinate layout")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError(f"{path}: missing size line")
    try:
        size = [int(s) for s in body[0].split()]
    except ValueError:
        raise MatrixMarketError(f"{path}: malformed size line {body[0]!r}") from None
    dtype = INT if field == "integer" else REAL
    parse_val = int if field == "integer" else float
    entries = body[1:]

    if layout == "array":
        if len(size) != 2:
            raise MatrixMarketError(f"{path}: array size line needs 2 fields")
        m, k = size
        vals = [parse_val(e.split()[0]) for e in entries]
        dense = np.zeros((m, k), dtype=dtype)
        if symmetry == "general":
            if len(vals) != m * k:
                raise MatrixMarketError(f"{path}: expected {m * k} values, found {len(vals)}")
            dense[:] = np.asarray(vals, dtype=dtype).reshape(k, m).T  # column-major
        else:
            if m != k:
                raise MatrixMarketError(f"{path}: symmetric matrix must be square")
            skew = symmetry == "skew-symmetric"
            cells = [(i, j) for j in range(k) for i in range(j + (1 if skew else 0), m)]
            if len(vals) != len(cells):
                raise MatrixMarketError(f"{path}: expected {len(cells)} values, found {len(vals)}")
            sign = -1 if skew else 1
            for (i, j), v in zip(cells, vals):
                dense[i, j] = v
                if i != j:
                    dense[j, i] = sign * v
        return dense

    if len(size) != 3:
        raise MatrixMarketError(f"{path}: coordinate size line needs 3 fields")
    m, k, nnz = size
    if len(entries) != nnz:
        raise MatrixMarketError(f"{path}: declared {nnz} entries, found {len(entries)}")
    rows, cols, vals = [], [], []
    for ln in entries:
        parts = ln.split()
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            v = 1 if field == "pattern" else parse_val(parts[2])
        except (ValueError, IndexError):
            raise MatrixMarketError(f"{path}: malformed entry {ln!r}") from None
        if not (0 <= i < m and 0 <= j < k):
            raise MatrixMarketError(f"{path}: entry ({i + 1},{j + 1}) outside declared {m}x{k}")
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if symmetry != "general" and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(-v if symmetry == "skew-symmetric" else v)
    return CooMatrix((m, k), np.asarray(rows, dtype=INT), np.asarray(cols, dtype=INT),
                     np.asarray(vals, dtype=dtype))


def write_matrix_market(path: PathLike, a) -> None:
    """Write a dense ndarray (array layout) or a CooMatrix (coordinate layout)."""
    from .formats import CooMatrix

    if isinstance(a, CooMatrix):
        field = "integer" if a.vals.dtype.kind in "iu" else "real"
        with open(path, "w") as fh:
            fh.write(f"%%MatrixMarket matrix coordinate {field} general\n")
            fh.write(f"{a.shape[0]} {a.shape[1]} {a.nnz}\n")
            for i, j, v in zip(a.rows, a.cols, a.vals):
                fh.write(f"{i + 1} {j + 1} {_fmt(v)}\n")
        return
    arr = check_tensor(a)
    if arr.ndim != 2:
        raise ValueError("MatrixMarket arrays must be rank 2")
    field = "integer" if arr.dtype == INT else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix array {field} general\n")
        fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
        for v in arr.T.ravel():
            fh.write(f"{_fmt(v)}\n")


def _fmt(v) -> str:
    return repr(int(v)) if np.asarray(v).dtype.kind in "iu" else repr(float(v))
