"""Case-study expressions, documented shapes and seeded input generators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .expr import Direct, EinsumStmt, Indirect, infer_extents, parse
from .formats import CooMatrix, dense_to_coo

__all__ = [
    "CorpusEntry",
    "CORPUS",
    "EXTRAS",
    "ACCEPTANCE_SET",
    "get",
    "load_entry",
    "random_instance",
    "instance_for_shapes",
    "random_sparse",
    "block_sparse",
    "example_matrix",
    "random_occupancy",
]


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    expression: str
    shapes: Mapping[str, Tuple[int, ...]]
    description: str = ""

    def stmt(self) -> EinsumStmt:
        return infer_extents(parse(self.expression), self.shapes)

    def as_dict(self) -> dict:
        return {"name": self.name, "expression": self.expression,
                "shapes": {k: list(v) for k, v in self.shapes.items()},
                "description": self.description}


def _entry(name, expression, description, **shapes) -> CorpusEntry:
    return CorpusEntry(name, expression, {k: tuple(v) for k, v in shapes.items()}, description)


# Shapes are small desk-scale instances; index tensors address the dims noted.
CORPUS: Dict[str, CorpusEntry] = {e.name: e for e in [
    _entry("coo_spmm", "C[AM[p],n] += AV[p] * B[AK[p],n]",
           "SpMM with A in COO; AM rows of C, AK rows of B",
           C=(8, 4), AM=(12,), AV=(12,), B=(6, 4), AK=(12,)),
    _entry("groupcoo_spmm", "C[AM[p],n] += AV[p,q] * B[AK[p,q],n]",
           "SpMM with A in GroupCOO (p groups of q slots)",
           C=(8, 4), AM=(5,), AV=(5, 2), B=(6, 4), AK=(5, 2)),
    _entry("blockgroupcoo_spmm", "C[AM[p],bm,n] += AV[p,q,bm,bk] * B[AK[p,q],bk,n]",
           "structured SpMM with A in BlockGroupCOO; C and B are blocked by rows",
           C=(4, 4, 8), AM=(3,), AV=(3, 2, 4, 4), B=(4, 4, 8), AK=(3, 2)),
    _entry("sparse_conv", "Out[MAPX[p],m] += MAPV[p] * In[MAPY[p],c] * Weight[MAPZ[p],c,m]",
           "point-cloud sparse convolution with the kernel map in COO",
           Out=(10, 4), MAPX=(16,), MAPV=(16,), In=(10, 3), MAPY=(16,),
           Weight=(5, 3, 4), MAPZ=(16,)),
    _entry("grouped_sparse_conv",
           "Out[MAPX[p,q],m] += MAPV[p,q] * In[MAPY[p,q],c] * Weight[MAPZ[p],c,m]",
           "sparse convolution with map entries grouped by kernel offset",
           Out=(10, 4), MAPX=(5, 4), MAPV=(5, 4), In=(10, 3), MAPY=(5, 4),
           Weight=(5, 3, 4), MAPZ=(5,)),
    _entry("grouped_tensor_product",
           "Z[b,CGI[p,q],w] += CGV[p,q] * X[b,CGJ[p,q],u] * Y[b,CGK[p,q]] * W[b,CGL[p],u,w]",
           "equivariant tensor product with the coupling tensor grouped by CGL",
           Z=(2, 9, 4), CGI=(4, 3), CGV=(4, 3), X=(2, 9, 3), CGJ=(4, 3), Y=(2, 9),
           CGK=(4, 3), W=(2, 4, 3, 4), CGL=(4,)),
]}

EXTRAS: Dict[str, CorpusEntry] = {e.name: e for e in [
    _entry("matmul", "C[y,x] = A[y,r] * B[r,x]", "dense matrix multiply",
           C=(64, 64), A=(64, 64), B=(64, 64)),
    _entry("fused_gather_matmul_scatter", "C[D[y],x] += A[y,E[r]] * B[r,x]",
           "gather on A, matmul, scatter on C",
           C=(8, 16), A=(16, 12), B=(16, 16), D=(16,), E=(16,)),
    _entry("coo_tensor_product",
           "Z[b,CGI[p],w] += CGV[p] * X[b,CGJ[p],u] * Y[b,CGK[p]] * W[b,CGL[p],u,w]",
           "equivariant tensor product with the coupling tensor in COO",
           Z=(2, 9, 4), CGI=(12,), CGV=(12,), X=(2, 9, 3), CGJ=(12,), Y=(2, 9),
           CGK=(12,), W=(2, 4, 3, 4), CGL=(12,)),
    _entry("elementwise", "C[i,j] = A[i,j] * B[i,j]", "dense elementwise product",
           C=(8, 8), A=(8, 8), B=(8, 8)),
    _entry("coo_elementwise", "C[AI[p]] = AV[p] * B[AI[p]]", "sparse-dense elementwise in COO",
           C=(16,), AI=(6,), AV=(6,), B=(16,)),
]}

ACCEPTANCE_SET = tuple(CORPUS)


def get(name: str) -> CorpusEntry:
    try:
        return CORPUS.get(name) or EXTRAS[name]
    except KeyError:
        raise KeyError(f"unknown corpus entry {name!r}; known: {', '.join([*CORPUS, *EXTRAS])}") \
            from None


def load_entry(path) -> CorpusEntry:
    """Read a corpus entry from a JSON file with ``expression`` and ``shapes`` keys."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        return CorpusEntry(str(data.get("name", "")), str(data["expression"]),
                           {k: tuple(int(d) for d in v) for k, v in data.get("shapes", {}).items()},
                           str(data.get("description", "")))
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ValueError(f"{path}: not a corpus entry ({e})") from None


def _values(rng: np.random.Generator, shape, dtype: str) -> np.ndarray:
    if dtype == "int64":
        return rng.integers(-4, 5, size=shape, dtype=np.int64)
    if dtype == "real64":
        return rng.standard_normal(shape)
    raise ValueError(f"dtype must be 'int64' or 'real64', got {dtype!r}")


def random_instance(stmt: EinsumStmt, rng: np.random.Generator, max_extent: int = 6,
                    dtype: str = "int64", extents: Optional[Mapping[str, int]] = None
                    ) -> Dict[str, np.ndarray]:
    """Random tensors for ``stmt`` with in-range index tensors.

    Variable extents and indirectly addressed dims are drawn from
    ``[1, max_extent]`` unless ``extents`` fixes them.  The output tensor is
    included (random, so ``+=`` accumulation is exercised).
    """
    if isinstance(stmt, str):
        stmt = parse(stmt)
    ext = {v: int(rng.integers(1, max_extent + 1)) for v in stmt.var_order()}
    ext.update(extents or {})
    dims: Dict[str, list] = {}
    bounds: Dict[str, int] = {}
    index_shapes: Dict[str, Tuple[int, ...]] = {}
    for acc in (stmt.output,) + stmt.inputs:
        shape = []
        for ix in acc.indices:
            if isinstance(ix, Direct):
                shape.append(ext[ix.var])
            else:
                size = int(rng.integers(1, max_extent + 1))
                shape.append(size)
                bounds[ix.tensor] = min(bounds.get(ix.tensor, size), size)
                index_shapes[ix.tensor] = tuple(ext[a] for a in ix.args)
        if acc.tensor in dims:
            # a tensor accessed twice keeps its first shape; later indirect dims narrow to it
            shape = dims[acc.tensor]
        dims[acc.tensor] = shape
    out = {}
    for name, shape in dims.items():
        out[name] = _values(rng, tuple(shape), dtype)
    for name, shape in index_shapes.items():
        out[name] = rng.integers(0, bounds[name], size=shape, dtype=np.int64)
    return out


def instance_for_shapes(stmt: EinsumStmt, shapes: Mapping[str, Tuple[int, ...]],
                        rng: np.random.Generator, dtype: str = "int64",
                        skip: Tuple[str, ...] = ()) -> Dict[str, np.ndarray]:
    """Random tensors with the given shapes; index tensors stay in range.

    Tensors without an entry in ``shapes`` or listed in ``skip`` are left out.
    """
    if isinstance(stmt, str):
        stmt = parse(stmt)
    bounds: Dict[str, int] = {}
    for acc in (stmt.output,) + stmt.inputs:
        if acc.tensor not in shapes:
            continue
        for d, ix in enumerate(acc.indices):
            if isinstance(ix, Indirect):
                size = int(shapes[acc.tensor][d])
                bounds[ix.tensor] = min(bounds.get(ix.tensor, size), size)
    out = {}
    index_names = set(stmt.index_tensors())
    for name in stmt.tensor_names():
        if name in skip or name not in shapes:
            continue
        shape = tuple(int(d) for d in shapes[name])
        if name in index_names:
            if name not in bounds:
                raise ValueError(f"no shape for the tensor indexed by {name!r}")
            out[name] = rng.integers(0, bounds[name], size=shape, dtype=np.int64)
        else:
            out[name] = _values(rng, shape, dtype)
    return out


def random_sparse(rows: int, cols: int, density: float, rng: np.random.Generator,
                  dtype: str = "real64") -> CooMatrix:
    """Uniformly random sparsity pattern with the given density."""
    mask = rng.random((rows, cols)) < density
    vals = _values(rng, (rows, cols), dtype)
    if dtype == "int64":
        vals[vals == 0] = 1
    else:
        vals[vals == 0] = 1.0
    return dense_to_coo(np.where(mask, vals, 0))


def block_sparse(rows: int, cols: int, block: Tuple[int, int], block_density: float,
                 rng: np.random.Generator, dtype: str = "real64") -> CooMatrix:
    """Dense ``block`` tiles kept with probability ``block_density``, others zero."""
    bm, bk = block
    if rows % bm or cols % bk:
        raise ValueError(f"shape {(rows, cols)} is not divisible by block {block}")
    keep = rng.random((rows // bm, cols // bk)) < block_density
    dense_mask = np.kron(keep, np.ones((bm, bk), dtype=bool))
    vals = _values(rng, (rows, cols), dtype)
    vals[vals == 0] = 1
    return dense_to_coo(np.where(dense_mask, vals, 0))


def example_matrix() -> np.ndarray:
    """4x4 matrix with row occupancies [3, 1, 1, 2]."""
    return np.array([
        [1, 0, 2, 3],
        [0, 4, 0, 0],
        [5, 0, 0, 0],
        [0, 6, 0, 7],
    ], dtype=np.int64)


def random_occupancy(rng: np.random.Generator, rows: int = 32, max_occ: int = 64,
                     empty_frac: float = 0.2) -> np.ndarray:
    occ = rng.integers(1, max_occ + 1, size=rows)
    occ[rng.random(rows) < empty_frac] = 0
    return occ
