"""Loop-level IR: a single fused loop nest per statement, plus the dot rewrite.

A :class:`LoopNest` describes per-point semantics.  For every assignment of
the pointwise variables the body loads operands (index tensors first), forms
their product, sums it over the reduction variables and stores or
atomically adds it into the output.  By default the pointwise variables are
flattened into one axis and recovered with an :class:`IotaSplit`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..expr import Direct, EinsumStmt, Indirect, TensorAccess, classify_vars
from ..plan import DenseEinsum, Gather, PlanGraph, ScatterAdd, lower_to_plan

__all__ = [
    "IotaSplit",
    "NLoad",
    "NMul",
    "NSum",
    "NDot",
    "NStore",
    "DotPattern",
    "LoopNest",
    "fuse",
    "detect_dot",
    "format_nest",
]


@dataclass(frozen=True)
class IotaSplit:
    src: str
    vars: Tuple[str, ...]


@dataclass(frozen=True)
class NLoad:
    """``name = tensor[index...]``; index entries are loop variables or loaded values."""

    name: str
    tensor: str
    index: Tuple[str, ...]
    is_index: bool = False  # loads an index tensor


@dataclass(frozen=True)
class NMul:
    name: str
    a: str
    b: str


@dataclass(frozen=True)
class NSum:
    name: str
    src: str
    vars: Tuple[str, ...]


@dataclass(frozen=True)
class NDot:
    name: str
    lhs: str
    rhs: str
    var: str


@dataclass(frozen=True)
class NStore:
    tensor: str
    index: Tuple[str, ...]
    value: str
    atomic: bool


NestOp = Union[IotaSplit, NLoad, NMul, NSum, NDot, NStore]


@dataclass(frozen=True)
class DotPattern:
    """Roles found by :func:`detect_dot`.

    ``lhs`` factors span (batch, y, r) and ``rhs`` factors (batch, r, x);
    ``serial`` reduction variables are summed outside the dot.
    """

    batch: Tuple[str, ...]
    y: str
    x: str
    r: str
    serial: Tuple[str, ...]
    lhs: Tuple[str, ...]
    rhs: Tuple[str, ...]


@dataclass(frozen=True)
class LoopNest:
    stmt: EinsumStmt
    pointwise: Tuple[str, ...]
    reduction: Tuple[str, ...]
    flat: bool
    body: Tuple[NestOp, ...]
    factors: Tuple[str, ...]
    dot: Optional[DotPattern] = None

    @property
    def flat_axis(self) -> str:
        return "".join(self.pointwise)

    def op(self, name: str) -> NestOp:
        for o in self.body:
            if getattr(o, "name", None) == name:
                return o
        raise KeyError(name)

    def free_vars(self, name: str) -> Tuple[str, ...]:
        """Loop variables a value depends on (through index loads as well)."""
        return tuple(v for v in self.stmt.var_order() if v in _deps(self, name))

    @property
    def stores(self) -> Tuple[NStore, ...]:
        return tuple(o for o in self.body if isinstance(o, NStore))


def _deps(nest: LoopNest, name: str) -> set:
    loop_vars = set(nest.stmt.var_order())
    if name in loop_vars:
        return {name}
    o = nest.op(name)
    if isinstance(o, NLoad):
        parts = o.index
    elif isinstance(o, NMul):
        parts = (o.a, o.b)
    elif isinstance(o, NDot):
        return (_deps(nest, o.lhs) | _deps(nest, o.rhs)) - {o.var}
    elif isinstance(o, NSum):
        return _deps(nest, o.src) - set(o.vars)
    else:
        parts = ()
    out = set()
    for p in parts:
        out |= _deps(nest, p)
    return out


class _Names:
    def __init__(self, taken):
        self.taken = set(taken)

    def fresh(self, base: str) -> str:
        name, k = base, 1
        while name in self.taken:
            k += 1
            name = f"{base}_{k}"
        self.taken.add(name)
        return name


def _load_access(acc: TensorAccess, body: list, names: _Names,
                 index_loads: Dict[Indirect, str], is_index: bool = False) -> str:
    index = []
    for ix in acc.indices:
        if isinstance(ix, Direct):
            index.append(ix.var)
            continue
        if ix not in index_loads:
            nm = names.fresh(f"{ix.tensor}_{''.join(dict.fromkeys(ix.args))}")
            body.append(NLoad(nm, ix.tensor, ix.args, is_index=True))
            index_loads[ix] = nm
        index.append(index_loads[ix])
    name = names.fresh(f"{acc.tensor}_{''.join(acc.vars())}")
    body.append(NLoad(name, acc.tensor, tuple(index), is_index))
    return name


def _product(factors: Sequence[str], body: list, names: _Names) -> str:
    prod = factors[0]
    for f in factors[1:]:
        nm = names.fresh("t")
        body.append(NMul(nm, prod, f))
        prod = nm
    return prod


def fuse(plan: Union[PlanGraph, EinsumStmt], stmt: Optional[EinsumStmt] = None) -> LoopNest:
    """Fuse the gather, einsum and scatter nodes of ``plan`` into one loop nest."""
    if isinstance(plan, EinsumStmt):
        plan = lower_to_plan(plan)
    stmt = stmt or plan.stmt
    pointwise, reduction = classify_vars(stmt)
    names = _Names(list(stmt.var_order()) + list(stmt.tensor_names()) + ["".join(pointwise), "acc"])
    body: List[NestOp] = []
    if len(pointwise) > 1:
        body.append(IotaSplit("".join(pointwise), tuple(pointwise)))

    index_loads: Dict[Indirect, str] = {}
    gathered: Dict[str, str] = {}
    for node in plan.nodes:
        if isinstance(node, Gather):
            gathered[node.out] = _load_access(node.access, body, names, index_loads)
    einsum: DenseEinsum = plan.einsum
    factors = []
    direct = iter(a for a in stmt.inputs if not a.is_indirect)
    for operand in einsum.operands:
        if operand in gathered:
            factors.append(gathered[operand])
        else:
            factors.append(_load_access(next(direct), body, names, index_loads))
    prod = _product(factors, body, names)
    if reduction:
        body.append(NSum("acc", prod, tuple(reduction)))
        prod = "acc"

    scatter = next((n for n in plan.nodes if isinstance(n, ScatterAdd)), None)
    out_index = []
    out_loads: Dict[Indirect, str] = {}
    for ix in stmt.output.indices:
        if isinstance(ix, Direct):
            out_index.append(ix.var)
        else:
            if ix not in out_loads:
                nm = names.fresh(f"{ix.tensor}_{''.join(dict.fromkeys(ix.args))}")
                body.append(NLoad(nm, ix.tensor, ix.args, is_index=True))
                out_loads[ix] = nm
            out_index.append(out_loads[ix])
    body.append(NStore(stmt.output.tensor, tuple(out_index), prod, atomic=scatter is not None))
    return LoopNest(stmt, tuple(pointwise), tuple(reduction), len(pointwise) > 1,
                    tuple(body), tuple(factors))


def _find_roles(nest: LoopNest) -> Optional[Tuple[str, str, str, Tuple[str, ...], list, list]]:
    pointwise = list(nest.pointwise)
    fv = {f: set(nest.free_vars(f)) for f in nest.factors}
    for r in reversed(nest.reduction):
        serial = tuple(v for v in nest.reduction if v != r)
        for i, j in [(i, j) for i in range(len(pointwise)) for j in range(len(pointwise)) if i != j]:
            y, x = pointwise[i], pointwise[j]
            batch = set(pointwise) - {y, x}
            lhs, rhs = [], []
            for f in nest.factors:
                own = fv[f] & set(pointwise) - batch
                if own == {x}:
                    rhs.append(f)
                elif own <= {y}:
                    lhs.append(f)
                else:
                    break
            else:
                if (any(y in fv[f] for f in lhs) and any(x in fv[f] for f in rhs)
                        and any(r in fv[f] for f in lhs) and any(r in fv[f] for f in rhs)):
                    return y, x, r, serial, lhs, rhs
    return None


def detect_dot(nest: LoopNest) -> LoopNest:
    """Rewrite broadcast-multiply-then-sum into a dot over 2-D tiles.

    The nest is returned unchanged unless its factors split into a
    (batch, y, r) side and a (batch, r, x) side.  On a match the pointwise
    axis is unflattened into the batch variables plus ``y`` and ``x``.
    """
    if nest.dot is not None or not nest.reduction:
        return nest
    roles = _find_roles(nest)
    if roles is None:
        return nest
    y, x, r, serial, lhs, rhs = roles
    batch = tuple(v for v in nest.pointwise if v not in (y, x))
    names = _Names([getattr(o, "name", "") for o in nest.body] + list(nest.stmt.var_order()))
    body: List[NestOp] = []
    for o in nest.body:
        if isinstance(o, NLoad):
            body.append(o)
    # loads first (in original order), then the two operand products
    lhs_val = _product(lhs, body, names)
    rhs_val = _product(rhs, body, names)
    if serial:
        dot_name = names.fresh("d")
        body.append(NDot(dot_name, lhs_val, rhs_val, r))
        body.append(NSum("acc", dot_name, serial))
    else:
        body.append(NDot("acc", lhs_val, rhs_val, r))
    body.extend(o for o in nest.body if isinstance(o, NStore))
    # output index loads are already part of the load prefix
    pattern = DotPattern(batch, y, x, r, serial, tuple(lhs), tuple(rhs))
    return replace(nest, flat=False, body=tuple(body), dot=pattern)


def format_nest(nest: LoopNest) -> str:
    """Loop-level listing of the nest (informational)."""
    ext = dict(nest.stmt.extents)

    def rng(v):
        return f"range({ext[v]})" if v in ext else "range(...)"

    lines, ind = [], ""
    out_v = [nest.flat_axis] if nest.flat else list(nest.pointwise)
    if nest.dot is not None:
        out_v = list(nest.dot.batch) + [nest.dot.y, nest.dot.x]
    for v in out_v:
        if nest.flat:
            total = 1
            for p in nest.pointwise:
                total *= ext.get(p, 0)
            lines.append(f"{ind}for {v} in range({total if ext else '...'}):")
        else:
            lines.append(f"{ind}for {v} in {rng(v)}:")
        ind += "  "
    red = list(nest.reduction)
    if nest.dot is not None:
        red = list(nest.dot.serial) + [nest.dot.r]
    body_in, body_out = [], []
    for o in nest.body:
        if isinstance(o, IotaSplit):
            body_in.append(f"{', '.join(o.vars)} = unflatten({o.src})")
        elif isinstance(o, NLoad):
            line = f"{o.name} = {o.tensor}[{', '.join(o.index)}]"
            (body_out if _post(nest, o) else body_in).append(line)
        elif isinstance(o, NMul):
            body_in.append(f"{o.name} = {o.a} * {o.b}")
        elif isinstance(o, NDot):
            body_in.append(f"{o.name} = ops.dot({o.lhs}, {o.rhs}, reduce={o.var})")
        elif isinstance(o, NSum):
            body_in.append(f"{o.name} = sum[{','.join(o.vars)}]({o.src})")
        elif isinstance(o, NStore):
            op = "atomic_add" if o.atomic else "store"
            body_out.append(f"{op} {o.tensor}[{', '.join(o.index)}], {o.value}")
    pre = ind
    if body_in and isinstance(nest.body[0], IotaSplit):
        lines.append(pre + body_in.pop(0))
    for v in red:
        lines.append(f"{ind}for {v} in {rng(v)}:")
        ind += "  "
    lines.extend(ind + b for b in body_in)
    lines.extend(pre + b for b in body_out)
    return "\n".join(lines) + "\n"


def _post(nest: LoopNest, load: NLoad) -> bool:
    # index loads that only feed the output store
    return any(load.name in s.index for s in nest.stores) and not any(
        isinstance(o, NLoad) and load.name in o.index for o in nest.body if o is not load
        and not isinstance(o, NStore))
