"""Three-step lowering of indirect Einsums: gather inputs, dense Einsum, scatter-add.

``lower_to_plan`` produces a :class:`PlanGraph`; ``execute_plan`` runs it
with numpy and records :class:`AccessCounters`.  ``oracle_einsum`` is a
brute-force reference that walks the full iteration space point by point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .expr import Direct, EinsumStmt, Indirect, TensorAccess, classify_vars, infer_extents
from .validation import (IndexRangeError, check_bindings, check_index_range, check_index_tensor,
                         check_tensor, result_dtype)

__all__ = [
    "Gather",
    "DenseEinsum",
    "ScatterAdd",
    "PlanGraph",
    "AccessCounters",
    "lower_to_plan",
    "execute_plan",
    "oracle_einsum",
    "count_accesses_model",
    "bind_extents",
]


@dataclass
class AccessCounters:
    gathers: int = 0
    scatters: int = 0
    atomic_updates: int = 0

    @property
    def indirect_accesses(self) -> int:
        return self.gathers + self.scatters

    def as_dict(self) -> Dict[str, int]:
        return {"gathers": self.gathers, "scatters": self.scatters,
                "atomicUpdates": self.atomic_updates}


@dataclass(frozen=True)
class Gather:
    out: str
    access: TensorAccess
    out_vars: Tuple[str, ...]

    @property
    def src(self) -> str:
        return self.access.tensor

    @property
    def indirect_dims(self) -> Tuple[Tuple[int, Indirect], ...]:
        return tuple((d, ix) for d, ix in enumerate(self.access.indices) if isinstance(ix, Indirect))

    @property
    def batched(self) -> bool:
        # an indirection argument also indexes another dimension directly
        direct = {ix.var for ix in self.access.indices if isinstance(ix, Direct)}
        return any(a in direct for _, ix in self.indirect_dims for a in ix.args)


@dataclass(frozen=True)
class DenseEinsum:
    out: str
    operands: Tuple[str, ...]
    operand_vars: Tuple[Tuple[str, ...], ...]
    out_vars: Tuple[str, ...]
    into_output: bool

    def spec(self) -> str:
        every = [v for vs in self.operand_vars for v in vs] + list(self.out_vars)
        sep = "" if all(len(v) == 1 for v in every) else " "
        lhs = ",".join(sep.join(vs) for vs in self.operand_vars)
        return f"{lhs}->{sep.join(self.out_vars)}"


@dataclass(frozen=True)
class ScatterAdd:
    dst: str
    access: TensorAccess
    src: str

    @property
    def indirect_dims(self) -> Tuple[Tuple[int, Indirect], ...]:
        return tuple((d, ix) for d, ix in enumerate(self.access.indices) if isinstance(ix, Indirect))


PlanNode = Union[Gather, DenseEinsum, ScatterAdd]


@dataclass
class PlanGraph:
    stmt: EinsumStmt
    nodes: List[PlanNode] = field(default_factory=list)

    @property
    def einsum(self) -> DenseEinsum:
        return next(n for n in self.nodes if isinstance(n, DenseEinsum))

    def to_text(self) -> str:
        lines = [f"plan {self.stmt}"]
        for i, node in enumerate(self.nodes):
            lines.append(f"  {i}: {_node_text(node)}")
        return "\n".join(lines) + "\n"

    def __len__(self) -> int:
        return len(self.nodes)


def _dims_text(pairs) -> str:
    if len(pairs) == 1:
        d, ix = pairs[0]
        return f"dim={d}, index={ix}"
    dims = ",".join(str(d) for d, _ in pairs)
    idx = ",".join(str(ix) for _, ix in pairs)
    return f"dim=({dims}), index=({idx})"


def _node_text(node: PlanNode) -> str:
    if isinstance(node, Gather):
        kind = "BatchedGather" if node.batched else "Gather"
        return f"{node.out}[{','.join(node.out_vars)}] = {kind}({node.src}, {_dims_text(node.indirect_dims)})"
    if isinstance(node, DenseEinsum):
        target = f"{node.out}[{','.join(node.out_vars)}]"
        op = "+=" if node.into_output else "="
        return f'{target} {op} DenseEinsum("{node.spec()}", {", ".join(node.operands)})'
    return f"ScatterAdd({node.dst}, {_dims_text(node.indirect_dims)}, src={node.src})"


def _temp_name(base: str, taken: set) -> str:
    name = f"{base}tmp"
    k = 1
    while name in taken:
        k += 1
        name = f"{base}tmp{k}"
    taken.add(name)
    return name


def lower_to_plan(stmt: EinsumStmt) -> PlanGraph:
    """Gather every indirect input once, run one dense Einsum, scatter indirect outputs."""
    taken = set(stmt.tensor_names())
    nodes: List[PlanNode] = []
    gathered: Dict[TensorAccess, Gather] = {}
    operands, operand_vars = [], []
    for acc in stmt.inputs:
        if acc.is_indirect:
            if acc not in gathered:
                node = Gather(_temp_name(acc.tensor, taken), acc, acc.vars())
                gathered[acc] = node
                nodes.append(node)
            operands.append(gathered[acc].out)
            operand_vars.append(gathered[acc].out_vars)
        else:
            operands.append(acc.tensor)
            operand_vars.append(tuple(ix.var for ix in acc.indices))
    pointwise, _ = classify_vars(stmt)
    out = stmt.output
    if out.is_indirect:
        tmp = _temp_name(out.tensor, taken)
        nodes.append(DenseEinsum(tmp, tuple(operands), tuple(operand_vars), tuple(pointwise), False))
        nodes.append(ScatterAdd(out.tensor, out, tmp))
    else:
        nodes.append(DenseEinsum(out.tensor, tuple(operands), tuple(operand_vars),
                                 tuple(pointwise), True))
    return PlanGraph(stmt, nodes)


# -- execution -------------------------------------------------------------

def bind_extents(stmt: EinsumStmt, tensors: Mapping[str, np.ndarray]) -> EinsumStmt:
    check_bindings(stmt.tensor_names(), tensors)
    return infer_extents(stmt, {k: np.shape(v) for k, v in tensors.items()})


def _coordinates(access: TensorAccess, axes: Tuple[str, ...], ext: Mapping[str, int],
                 tensors: Mapping[str, np.ndarray], target: np.ndarray) -> Tuple[List[np.ndarray], int]:
    """Broadcastable coordinate arrays (one per dim of ``access``) over ``axes``.

    Also returns the number of index-tensor elements read.
    """
    nd = len(axes)
    pos = {v: i for i, v in enumerate(axes)}

    def axis_range(v):
        shape = [1] * nd
        shape[pos[v]] = ext[v]
        return np.arange(ext[v]).reshape(shape)

    coords, reads = [], 0
    for dim, ix in enumerate(access.indices):
        if isinstance(ix, Direct):
            coords.append(axis_range(ix.var))
            continue
        idx_t = check_index_tensor(tensors[ix.tensor], ix.tensor)
        vals = idx_t[tuple(axis_range(a) for a in ix.args)]
        bad = (vals < 0) | (vals >= target.shape[dim])
        if bad.any():
            at = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
            where = tuple(at[pos[a]] if bad.shape[pos[a]] > 1 else 0 for a in ix.args)
            raise IndexRangeError(ix.tensor, where, vals[at], target.shape[dim],
                                  f"{access.tensor} dim {dim}")
        reads += int(np.prod([ext[a] for a in dict.fromkeys(ix.args)]))
        coords.append(vals)
    return coords, reads


def execute_plan(plan: PlanGraph, tensors: Mapping[str, np.ndarray],
                 out: Optional[np.ndarray] = None) -> Tuple[np.ndarray, AccessCounters]:
    """Run ``plan`` and return ``(result, counters)``.

    ``out`` (default: ``tensors[<output name>]``) supplies the output shape and,
    for ``+=`` statements, the initial contents.  It is not modified.
    """
    stmt = plan.stmt
    env = dict(tensors)
    out_name = stmt.output.tensor
    if out is None:
        out = env.get(out_name)
        if out is None:
            raise KeyError(f"tensor {out_name!r} is not bound")
    env[out_name] = np.asarray(out)
    stmt = bind_extents(stmt, env)
    ext = dict(stmt.extents)

    values = [check_tensor(env[a.tensor], a.tensor) for a in stmt.inputs]
    dtype = result_dtype(values + [env[out_name]])
    result = np.zeros(env[out_name].shape, dtype=dtype)
    if stmt.accumulate:
        result += env[out_name]
    counters = AccessCounters()
    labels = {v: chr(ord("a") + i) if i < 26 else chr(ord("A") + i - 26)
              for i, v in enumerate(stmt.var_order())}

    for node in plan.nodes:
        if isinstance(node, Gather):
            src = check_tensor(env[node.src], node.src)
            coords, reads = _coordinates(node.access, node.out_vars, ext, env, src)
            counters.gathers += reads
            env[node.out] = src[tuple(coords)]
        elif isinstance(node, DenseEinsum):
            ops = [check_tensor(env[name], name) for name in node.operands]
            subs = ["".join(labels[v] for v in vs) for vs in node.operand_vars]
            present = {v for vs in node.operand_vars for v in vs}
            for v in node.out_vars:  # output-only variables broadcast
                if v not in present:
                    ops.append(np.ones(ext[v], dtype=np.int64))
                    subs.append(labels[v])
            spec = ",".join(subs) + "->" + "".join(labels[v] for v in node.out_vars)
            tmp = np.einsum(spec, *ops).astype(dtype, copy=False)
            if node.into_output:
                coords, _ = _coordinates(stmt.output, node.out_vars, ext, env, result)
                result[tuple(coords)] += tmp
            else:
                env[node.out] = tmp
        else:
            src = env[node.src]
            coords, reads = _coordinates(node.access, stmt_pointwise(stmt), ext, env, result)
            counters.scatters += reads
            counters.atomic_updates += src.size
            np.add.at(result, tuple(np.broadcast_arrays(*coords)), src)
    return result, counters


def stmt_pointwise(stmt: EinsumStmt) -> Tuple[str, ...]:
    return tuple(classify_vars(stmt)[0])


def oracle_einsum(stmt: EinsumStmt, tensors: Mapping[str, np.ndarray],
                  out: Optional[np.ndarray] = None) -> np.ndarray:
    """Reference semantics by exhaustive enumeration of every variable assignment."""
    env = dict(tensors)
    out_name = stmt.output.tensor
    if out is None:
        out = env.get(out_name)
        if out is None:
            raise KeyError(f"tensor {out_name!r} is not bound")
    env[out_name] = np.asarray(out)
    stmt = bind_extents(stmt, env)
    order = stmt.var_order()
    values = {a.tensor: check_tensor(env[a.tensor], a.tensor) for a in stmt.inputs}
    dtype = result_dtype(list(values.values()) + [env[out_name]])
    convert = int if dtype.kind == "i" else float
    result = np.zeros(env[out_name].shape, dtype=dtype)
    if stmt.accumulate:
        result += env[out_name]
    index_tensors = {n: check_index_tensor(env[n], n) for n in stmt.index_tensors()}
    slot = {v: i for i, v in enumerate(order)}

    def locate(acc: TensorAccess, point, shape):
        coord = []
        for dim, ix in enumerate(acc.indices):
            if isinstance(ix, Direct):
                coord.append(point[slot[ix.var]])
                continue
            at = tuple(point[slot[a]] for a in ix.args)
            c = int(index_tensors[ix.tensor][at])
            if not 0 <= c < shape[dim]:
                raise IndexRangeError(ix.tensor, at, c, shape[dim], f"{acc.tensor} dim {dim}")
            coord.append(c)
        return tuple(coord)

    factors = [(acc, values[acc.tensor]) for acc in stmt.inputs]
    acc_out = {}
    for point in itertools.product(*(range(e) for _, e in stmt.extents)):
        prod = convert(1)
        for acc, arr in factors:
            prod = prod * convert(arr[locate(acc, point, arr.shape)])
        key = locate(stmt.output, point, result.shape)
        acc_out[key] = acc_out.get(key, convert(0)) + prod
    for key, v in acc_out.items():
        result[key] += v
    return result


def count_accesses_model(fmt, stmt: Optional[EinsumStmt] = None, n_cols: int = 1) -> AccessCounters:
    """Analytic counters of the GroupCOO (or COO) SpMM plan.

    gathers = G*g reads of AK, scatters = G reads of AM, atomic updates = G*N.
    """
    from .formats import CooMatrix

    if isinstance(fmt, CooMatrix):
        groups, g = fmt.nnz, 1
    else:
        groups, g = fmt.n_groups, fmt.g
    if stmt is not None:
        # the dense column count is the extent of the variable left in the output
        out_direct = [ix.var for ix in stmt.output.indices if isinstance(ix, Direct)]
        if stmt.has_extents and out_direct:
            n_cols = int(np.prod([stmt.extent(v) for v in out_direct]))
    return AccessCounters(gathers=groups * g, scatters=groups, atomic_updates=groups * n_cols)
