"""Input validation helpers shared by the executors, formats and estimators."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

REAL = np.dtype("<f8")
INT = np.dtype("<i8")


class IndexRangeError(IndexError):
    """An index tensor holds a coordinate outside the dimension it addresses."""

    def __init__(self, tensor: str, position, value: int, bound: int, target: str = ""):
        self.tensor = tensor
        self.position = tuple(int(i) for i in np.atleast_1d(position))
        self.value = int(value)
        self.bound = int(bound)
        where = f" (indexing {target})" if target else ""
        super().__init__(
            f"index tensor {tensor!r}{where} at position {self.position} holds {self.value}, "
            f"outside [0, {self.bound})")


def check_tensor(x, name: str = "tensor", *, allow_scalar: bool = False) -> np.ndarray:
    """Coerce ``x`` to a float64 or int64 ndarray.

    Booleans and narrower integers become int64; every other numeric kind
    becomes float64.  Complex input is rejected.
    """
    arr = np.asarray(x)
    if arr.ndim == 0 and not allow_scalar:
        raise ValueError(f"{name} must have rank >= 1")
    if arr.dtype.kind in "biu":
        return arr.astype(INT, copy=False)
    if arr.dtype.kind == "f":
        return arr.astype(REAL, copy=False)
    raise TypeError(f"{name} has unsupported dtype {arr.dtype}; expected real or integer data")


def check_index_tensor(x, name: str = "index") -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind not in "iu":
        raise TypeError(f"index tensor {name!r} must have an integer dtype, got {arr.dtype}")
    return arr.astype(INT, copy=False)


def check_index_range(idx: np.ndarray, bound: int, tensor: str, target: str = "",
                      mask: Optional[np.ndarray] = None) -> None:
    """Raise :class:`IndexRangeError` for the first coordinate outside ``[0, bound)``."""
    bad = (idx < 0) | (idx >= bound)
    if mask is not None:
        bad &= mask
    if bad.any():
        pos = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
        raise IndexRangeError(tensor, pos, idx[pos], bound, target)


def check_power_of_two(value: int, what: str = "block size") -> int:
    value = int(value)
    if value < 1 or value & (value - 1):
        raise ValueError(f"{what} must be a power of two, got {value}")
    return value


def check_bindings(names, tensors: Mapping[str, object]) -> None:
    missing = [n for n in names if n not in tensors]
    if missing:
        raise KeyError(f"tensor {missing[0]!r} is not bound")


def result_dtype(arrays) -> np.dtype:
    """int64 only if every operand is integer, else float64."""
    return INT if all(np.asarray(a).dtype.kind in "biu" for a in arrays) else REAL
