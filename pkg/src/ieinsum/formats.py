"""Fixed-length sparse matrix formats: COO, GroupCOO (incl. ELL), BlockGroupCOO.

Every format stores its metadata as dense int64 arrays and its values as a
dense array, so an indirect Einsum can consume them directly::

    COO            C[AM[p],n]    += AV[p]         * B[AK[p],n]
    GroupCOO       C[AM[p],n]    += AV[p,q]       * B[AK[p,q],n]
    BlockGroupCOO  C[AM[p],bm,n] += AV[p,q,bm,bk] * B[AK[p,q],bk,n]

Padded group slots hold a zero value (zero block) and repeat the last real
in-group coordinate of their group, so they never change a result.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from .validation import INT, check_tensor

__all__ = [
    "CooMatrix",
    "GroupCooMatrix",
    "BlockGroupCooMatrix",
    "dense_to_coo",
    "coo_to_dense",
    "occupancy",
    "coo_to_groupcoo",
    "groupcoo_to_coo",
    "groupcoo_to_dense",
    "to_ell",
    "dense_to_blockgroupcoo",
    "blockgroupcoo_to_dense",
    "block_dense_operand",
    "unblock_output",
    "format_nbytes",
    "mask_nbytes",
    "emit_operands",
    "operand_bounds",
    "save_format",
    "load_format",
]


@dataclass(frozen=True, eq=False)
class CooMatrix:
    """Coordinate list.  ``rows``/``cols`` are the AM/AK arrays, ``vals`` is AV."""

    shape: Tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    canonical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        rows = np.asarray(self.rows, dtype=INT).reshape(-1)
        cols = np.asarray(self.cols, dtype=INT).reshape(-1)
        vals = check_tensor(np.asarray(self.vals).reshape(-1), "vals")
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and vals must have equal length")
        for name, a, bound in (("row", rows, self.shape[0]), ("column", cols, self.shape[1])):
            if len(a) and (a.min() < 0 or a.max() >= bound):
                raise IndexError(f"{name} coordinate out of range [0, {bound})")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.rows, self.cols

    @property
    def dtype(self) -> np.dtype:
        return self.vals.dtype

    def canonicalize(self) -> "CooMatrix":
        """Row-major sorted copy (stable, duplicates kept in file order)."""
        if self.canonical:
            return self
        order = np.lexsort((self.cols, self.rows))
        return CooMatrix(self.shape, self.rows[order], self.cols[order], self.vals[order], True)

    def equals(self, other: "CooMatrix") -> bool:
        return (self.shape == other.shape and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols) and np.array_equal(self.vals, other.vals)
                and self.vals.dtype == other.vals.dtype)

    def __repr__(self) -> str:
        return f"CooMatrix(shape={self.shape}, nnz={self.nnz}, dtype={self.dtype})"


@dataclass(frozen=True, eq=False)
class GroupCooMatrix:
    """Nonzeros partitioned into fixed-size groups along ``group_dim``.

    ``AM[p]`` is the shared ``group_dim`` coordinate of group ``p``; ``AK[p, q]``
    and ``AV[p, q]`` are the other coordinate and the value of slot ``q``.
    """

    shape: Tuple[int, int]
    group_dim: int
    g: int
    AM: np.ndarray
    AK: np.ndarray
    AV: np.ndarray
    pad_mask: np.ndarray

    @property
    def n_groups(self) -> int:
        return len(self.AM)

    @property
    def nnz(self) -> int:
        return int(self.pad_mask.sum())

    @property
    def n_padded(self) -> int:
        return self.pad_mask.size - self.nnz

    def __repr__(self) -> str:
        return (f"GroupCooMatrix(shape={self.shape}, group_dim={self.group_dim}, g={self.g}, "
                f"G={self.n_groups}, nnz={self.nnz})")


@dataclass(frozen=True, eq=False)
class BlockGroupCooMatrix:
    """GroupCOO over dense ``block`` tiles, grouped along block rows.

    ``shape`` is the original matrix shape; ``padded_shape`` rounds it up to
    block multiples.  ``AM``/``AK`` are block-row/block-column coordinates.
    """

    shape: Tuple[int, int]
    block: Tuple[int, int]
    g: int
    AM: np.ndarray
    AK: np.ndarray
    AV: np.ndarray
    pad_mask: np.ndarray

    @property
    def padded_shape(self) -> Tuple[int, int]:
        return tuple(-(-s // b) * b for s, b in zip(self.shape, self.block))

    @property
    def block_grid(self) -> Tuple[int, int]:
        return tuple(p // b for p, b in zip(self.padded_shape, self.block))

    @property
    def n_groups(self) -> int:
        return len(self.AM)

    @property
    def n_blocks(self) -> int:
        return int(self.pad_mask.sum())

    def __repr__(self) -> str:
        return (f"BlockGroupCooMatrix(shape={self.shape}, block={self.block}, g={self.g}, "
                f"G={self.n_groups}, blocks={self.n_blocks})")


AnyFormat = Union[CooMatrix, GroupCooMatrix, BlockGroupCooMatrix]


def _check_matrix(t) -> np.ndarray:
    arr = check_tensor(t, "matrix")
    if arr.ndim != 2:
        raise ValueError(f"expected a rank-2 tensor, got shape {arr.shape}")
    return arr


def dense_to_coo(t) -> CooMatrix:
    arr = _check_matrix(t)
    rows, cols = np.nonzero(arr)
    return CooMatrix(arr.shape, rows, cols, arr[rows, cols], canonical=True)


def coo_to_dense(c: CooMatrix) -> np.ndarray:
    out = np.zeros(c.shape, dtype=c.vals.dtype)
    np.add.at(out, (c.rows, c.cols), c.vals)
    return out


def occupancy(c: CooMatrix, dim: int = 0) -> np.ndarray:
    """Nonzero count per coordinate of ``dim`` (duplicates counted)."""
    return np.bincount(c.coords[dim], minlength=c.shape[dim]).astype(INT)


def _group_runs(gcoord: np.ndarray, other: np.ndarray, n_coords: int, g: int):
    """Split entries (already sorted by ``gcoord``) into runs of at most ``g``.

    Returns (AM, group index per entry, slot per entry, G).
    """
    occ = np.bincount(gcoord, minlength=n_coords)
    per_row = -(-occ // g)
    group_start = np.concatenate(([0], np.cumsum(per_row)[:-1])).astype(INT)
    row_start = np.concatenate(([0], np.cumsum(occ)[:-1])).astype(INT)
    rank = np.arange(len(gcoord), dtype=INT) - row_start[gcoord]
    grp = group_start[gcoord] + rank // g
    slot = rank % g
    am = np.repeat(np.arange(n_coords, dtype=INT), per_row)
    return am, grp, slot, int(per_row.sum())


def _pad_fill(ak: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # padded slots repeat the group's last real coordinate (0 if none)
    counts = mask.sum(axis=1)
    last = np.where(counts > 0, ak[np.arange(len(ak)), np.maximum(counts - 1, 0)], 0)
    return np.where(mask, ak, last[:, None])


def coo_to_groupcoo(c: CooMatrix, group_dim: int = 0, g: int = 1) -> GroupCooMatrix:
    g = int(g)
    if g < 1:
        raise ValueError(f"group size must be >= 1, got {g}")
    if group_dim not in (0, 1):
        raise ValueError("group_dim must be 0 or 1")
    gc_all, oc_all = c.coords[group_dim], c.coords[1 - group_dim]
    order = np.lexsort((oc_all, gc_all))
    gcoord, other, vals = gc_all[order], oc_all[order], c.vals[order]
    am, grp, slot, n_groups = _group_runs(gcoord, other, c.shape[group_dim], g)
    ak = np.zeros((n_groups, g), dtype=INT)
    av = np.zeros((n_groups, g), dtype=c.vals.dtype)
    mask = np.zeros((n_groups, g), dtype=bool)
    ak[grp, slot] = other
    av[grp, slot] = vals
    mask[grp, slot] = True
    return GroupCooMatrix(c.shape, group_dim, g, am, _pad_fill(ak, mask), av, mask)


def groupcoo_to_coo(gc: GroupCooMatrix) -> CooMatrix:
    gcoord = np.broadcast_to(gc.AM[:, None], gc.AK.shape)[gc.pad_mask]
    other = gc.AK[gc.pad_mask]
    rows, cols = (gcoord, other) if gc.group_dim == 0 else (other, gcoord)
    return CooMatrix(gc.shape, rows, cols, gc.AV[gc.pad_mask]).canonicalize()


def groupcoo_to_dense(gc: GroupCooMatrix) -> np.ndarray:
    return coo_to_dense(groupcoo_to_coo(gc))


def to_ell(c: CooMatrix, dim: int = 0) -> GroupCooMatrix:
    """ELL view: GroupCOO with ``g`` equal to the largest occupancy."""
    occ = occupancy(c, dim)
    return coo_to_groupcoo(c, dim, max(int(occ.max(initial=0)), 1))


def dense_to_blockgroupcoo(t, block: Tuple[int, int], g: int = 1) -> BlockGroupCooMatrix:
    """Store every ``block``-sized tile holding a nonzero, grouped along block rows.

    The matrix is implicitly zero-padded to block multiples.  ``g = 1`` gives
    BlockCOO.
    """
    arr = _check_matrix(t)
    bm, bk = (int(b) for b in block)
    g = int(g)
    if bm < 1 or bk < 1:
        raise ValueError("block dimensions must be >= 1")
    if g < 1:
        raise ValueError(f"group size must be >= 1, got {g}")
    m, k = arr.shape
    mp, kp = -(-m // bm) * bm, -(-k // bk) * bk
    padded = np.zeros((mp, kp), dtype=arr.dtype)
    padded[:m, :k] = arr
    tiles = padded.reshape(mp // bm, bm, kp // bk, bk).transpose(0, 2, 1, 3)
    brow, bcol = np.nonzero(tiles.any(axis=(2, 3)))  # row-major order
    am, grp, slot, n_groups = _group_runs(brow, bcol, mp // bm, g)
    ak = np.zeros((n_groups, g), dtype=INT)
    av = np.zeros((n_groups, g, bm, bk), dtype=arr.dtype)
    mask = np.zeros((n_groups, g), dtype=bool)
    ak[grp, slot] = bcol
    av[grp, slot] = tiles[brow, bcol]
    mask[grp, slot] = True
    return BlockGroupCooMatrix((m, k), (bm, bk), g, am, _pad_fill(ak, mask), av, mask)


def blockgroupcoo_to_dense(b: BlockGroupCooMatrix) -> np.ndarray:
    bm, bk = b.block
    mb, kb = b.block_grid
    tiles = np.zeros((mb, kb, bm, bk), dtype=b.AV.dtype)
    rows = np.broadcast_to(b.AM[:, None], b.AK.shape)[b.pad_mask]
    np.add.at(tiles, (rows, b.AK[b.pad_mask]), b.AV[b.pad_mask])
    dense = tiles.transpose(0, 2, 1, 3).reshape(mb * bm, kb * bk)
    return dense[:b.shape[0], :b.shape[1]]


def block_dense_operand(x, block_rows: int) -> np.ndarray:
    """Reshape a dense ``[K, N]`` operand to ``[K/bk, bk, N]`` (zero-padding K)."""
    arr = _check_matrix(x)
    k, n = arr.shape
    kp = -(-k // block_rows) * block_rows
    padded = np.zeros((kp, n), dtype=arr.dtype)
    padded[:k] = arr
    return padded.reshape(kp // block_rows, block_rows, n)


def unblock_output(y, rows: int) -> np.ndarray:
    """Inverse of :func:`block_dense_operand`, trimming padding rows."""
    y = np.asarray(y)
    return y.reshape(-1, y.shape[-1])[:rows]


def format_nbytes(fmt: AnyFormat) -> int:
    """Bytes held by the AM, AK and AV arrays (the padding mask is excluded)."""
    if isinstance(fmt, CooMatrix):
        return fmt.rows.nbytes + fmt.cols.nbytes + fmt.vals.nbytes
    return fmt.AM.nbytes + fmt.AK.nbytes + fmt.AV.nbytes


def mask_nbytes(fmt: AnyFormat) -> int:
    return 0 if isinstance(fmt, CooMatrix) else fmt.pad_mask.nbytes


def emit_operands(fmt: AnyFormat, prefix: str = "A") -> Dict[str, np.ndarray]:
    """Named dense operands (``{prefix}V``, ``{prefix}M``, ``{prefix}K``) for binding.

    For a GroupCOO grouped along columns the ``M`` array holds the shared
    column coordinate and ``K`` the row coordinates.
    """
    if isinstance(fmt, CooMatrix):
        return {f"{prefix}V": fmt.vals, f"{prefix}M": fmt.rows, f"{prefix}K": fmt.cols}
    return {f"{prefix}V": fmt.AV, f"{prefix}M": fmt.AM, f"{prefix}K": fmt.AK}


def operand_bounds(fmt: AnyFormat, prefix: str = "A") -> Dict[str, int]:
    """Size of the dimension each emitted index tensor addresses."""
    if isinstance(fmt, BlockGroupCooMatrix):
        mb, kb = fmt.block_grid
        return {f"{prefix}M": mb, f"{prefix}K": kb}
    if isinstance(fmt, GroupCooMatrix) and fmt.group_dim == 1:
        return {f"{prefix}M": fmt.shape[1], f"{prefix}K": fmt.shape[0]}
    return {f"{prefix}M": fmt.shape[0], f"{prefix}K": fmt.shape[1]}


# -- on-disk layout --------------------------------------------------------

def save_format(fmt: AnyFormat, out_dir: Union[str, os.PathLike]) -> dict:
    """Write one binary tensor file per array plus ``manifest.json``."""
    from .tensors import save_tensor

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(fmt, CooMatrix):
        manifest = {"format": "coo", "shape": list(fmt.shape), "nnz": fmt.nnz}
        arrays = {"AM": fmt.rows, "AK": fmt.cols, "AV": fmt.vals}
    else:
        arrays = {"AM": fmt.AM, "AK": fmt.AK, "AV": fmt.AV, "padMask": fmt.pad_mask.astype(INT)}
        manifest = {"shape": list(fmt.shape), "g": fmt.g, "nGroups": fmt.n_groups}
        if isinstance(fmt, GroupCooMatrix):
            manifest.update(format="groupcoo", groupDim=fmt.group_dim, nnz=fmt.nnz)
        else:
            manifest.update(format="blockgroupcoo", groupDim=0, block=list(fmt.block),
                            nBlocks=fmt.n_blocks)
    manifest["arrays"] = {}
    for name, arr in arrays.items():
        fname = f"{name}.tns"
        save_tensor(out / fname, arr)
        manifest["arrays"][name] = {"file": fname, "shape": list(arr.shape)}
    manifest["nbytes"] = format_nbytes(fmt)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_format(in_dir: Union[str, os.PathLike]) -> AnyFormat:
    from .tensors import load_tensor

    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    arr = {name: load_tensor(src / spec["file"]) for name, spec in manifest["arrays"].items()}
    shape = tuple(manifest["shape"])
    kind = manifest["format"]
    if kind == "coo":
        return CooMatrix(shape, arr["AM"], arr["AK"], arr["AV"])
    mask = arr["padMask"].astype(bool)
    if kind == "groupcoo":
        return GroupCooMatrix(shape, manifest["groupDim"], manifest["g"], arr["AM"], arr["AK"],
                              arr["AV"], mask)
    if kind == "blockgroupcoo":
        return BlockGroupCooMatrix(shape, tuple(manifest["block"]), manifest["g"], arr["AM"],
                                   arr["AK"], arr["AV"], mask)
    raise ValueError(f"unknown format {kind!r} in manifest")
