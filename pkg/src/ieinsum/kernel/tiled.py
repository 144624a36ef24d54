"""Tiled kernel IR and the tiling pass.

A :class:`TiledKernel` is a straight-line program run once per grid
instance.  Every value is a block (a numpy array in the interpreter) and
carries a block shape: a tuple of axis tags drawn from

    Y, X   the two output tile axes of a dot kernel
    R      the reduction tile axis
    P      the flattened pointwise axis of a non-dot kernel
    1      a unit (broadcast) axis

Eager broadcasting gives every loop variable its own axis from kernel
entry, so a dot needs views and a transpose to reach (Y,R) x (R,X).  Lazy
broadcasting keeps the reduction variable 1-D and expands it at the point
of use, so dot operands are already (Y,R) and (R,X).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from ..validation import check_power_of_two
from .nest import IotaSplit, LoopNest, NDot, NLoad, NMul, NStore, NSum

__all__ = [
    "Ref",
    "Arange",
    "ProgramIndex",
    "Offset",
    "Split",
    "Load",
    "Mul",
    "Full",
    "AccumAdd",
    "DotAcc",
    "Reshape",
    "Transpose",
    "ReduceSum",
    "Expand",
    "Store",
    "Loop",
    "TiledKernel",
    "BlockShapeError",
    "tile",
    "check_block_shapes",
    "count_layout_ops",
    "walk",
    "DEFAULT_BLOCK",
    "DEFAULT_FLAT_BLOCK",
]

DEFAULT_BLOCK = 16
DEFAULT_FLAT_BLOCK = 256

Tags = Tuple[str, ...]


class BlockShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Ref:
    """Use of a value, optionally expanded with unit axes (``None`` entries)."""

    name: str
    expand: Optional[Tuple[Optional[str], ...]] = None

    def __str__(self) -> str:
        if self.expand is None:
            return self.name
        return f"{self.name}[{', '.join('None' if e is None else ':' for e in self.expand)}]"


@dataclass(frozen=True)
class Arange:
    name: str
    block: str
    size: int
    axis: Optional[int]  # grid axis providing the offset; None for a reduction base
    tags: Tags
    extent: Optional[int]


@dataclass(frozen=True)
class ProgramIndex:
    name: str
    axis: int
    extent: int


@dataclass(frozen=True)
class Offset:
    name: str
    offset: str
    base: str
    extent: int


@dataclass(frozen=True)
class Split:
    name: str
    src: str
    div: int
    mod: Optional[int]


@dataclass(frozen=True)
class Load:
    name: str
    tensor: str
    index: Tuple[Ref, ...]
    is_index: bool = False


@dataclass(frozen=True)
class Mul:
    name: str
    a: Ref
    b: Ref


@dataclass(frozen=True)
class Full:
    name: str
    dims: Tuple[str, ...]


@dataclass(frozen=True)
class AccumAdd:
    acc: str
    value: Ref


@dataclass(frozen=True)
class DotAcc:
    acc: str
    a: Ref
    b: Ref


@dataclass(frozen=True)
class Reshape:
    name: str
    src: str
    dims: Tuple[str, ...]


@dataclass(frozen=True)
class Transpose:
    name: str
    src: str


@dataclass(frozen=True)
class ReduceSum:
    name: str
    src: str
    axis: int
    expand: Tuple[Optional[str], ...]


@dataclass(frozen=True)
class Expand:
    name: str
    src: Ref


@dataclass(frozen=True)
class Store:
    tensor: str
    index: Tuple[Ref, ...]
    value: Ref
    atomic: bool


@dataclass(frozen=True)
class Loop:
    var: str
    stop: int
    step: int
    step_name: Optional[str]
    body: Tuple["KStmt", ...]


KStmt = Union[Arange, ProgramIndex, Offset, Split, Load, Mul, Full, AccumAdd, DotAcc, Reshape,
              Transpose, ReduceSum, Expand, Store, Loop]


@dataclass(frozen=True, eq=False)
class TiledKernel:
    name: str
    nest: LoopNest
    mode: str
    grid: Tuple[Tuple[str, int], ...]  # per grid axis: (label, number of programs)
    blocks: Tuple[Tuple[str, int], ...]
    body: Tuple[KStmt, ...]
    shapes: Mapping[str, Tags] = field(default_factory=dict)

    @property
    def stmt(self):
        return self.nest.stmt

    @property
    def uses_dot(self) -> bool:
        return self.nest.dot is not None

    @property
    def params(self) -> Tuple[str, ...]:
        return self.stmt.tensor_names()

    @property
    def n_programs(self) -> int:
        return math.prod(n for _, n in self.grid)


def walk(body: Sequence[KStmt]):
    for s in body:
        yield s
        if isinstance(s, Loop):
            yield from walk(s.body)


def count_layout_ops(k: TiledKernel) -> Tuple[int, int]:
    """(reshapes, transposes) anywhere in the kernel."""
    stmts = list(walk(k.body))
    return (sum(isinstance(s, Reshape) for s in stmts), sum(isinstance(s, Transpose) for s in stmts))


# -- block-shape algebra ---------------------------------------------------

_LAZY_DOT = {
    frozenset(): (),
    frozenset("Y"): ("Y", "1"),
    frozenset("X"): ("1", "X"),
    frozenset("R"): ("R",),
    frozenset("YR"): ("Y", "R"),
    frozenset("RX"): ("R", "X"),
    frozenset("YX"): ("Y", "X"),
}
_LAZY_FLAT = {
    frozenset(): (),
    frozenset("P"): ("P", "1"),
    frozenset("R"): ("R",),
    frozenset("PR"): ("P", "R"),
}
_EAGER_AXES = {"dot": ("Y", "X", "R"), "flat": ("P", "R")}


class _Shapes:
    """Block-shape inference for one (path, mode) combination."""

    def __init__(self, path: str, mode: str):
        self.path, self.mode = path, mode

    def var(self, role: str) -> Tags:
        if role == "":
            return ()
        if self.mode == "eager":
            return tuple(a if a == role else "1" for a in _EAGER_AXES[self.path])
        return self.lazy_table[frozenset(role)]

    @property
    def lazy_table(self):
        return _LAZY_DOT if self.path == "dot" else _LAZY_FLAT

    def combine(self, operands: Sequence[Tags]) -> Tags:
        letters = frozenset(a for t in operands for a in t if a != "1")
        if self.mode == "eager":
            if not letters:
                return ()
            return tuple(a if a in letters else "1" for a in _EAGER_AXES[self.path])
        try:
            return self.lazy_table[letters]
        except KeyError:
            raise BlockShapeError(f"no lazy block layout for axes {sorted(letters)}") from None

    def expand(self, operand: Tags, result: Tags) -> Optional[Tuple[Optional[str], ...]]:
        """Unit axes to insert so ``operand`` lines up with ``result``."""
        if self.mode == "eager" or len(operand) != 1 or len(result) != 2:
            return None
        return (None, ":") if result[1] == operand[0] else (":", None)


def _apply_expand(tags: Tags, expand) -> Tags:
    if expand is None:
        return tags
    it = iter(tags)
    return tuple("1" if e is None else next(it) for e in expand)


# -- tiling ----------------------------------------------------------------

class _Builder:
    def __init__(self, nest: LoopNest, blocks: Mapping[str, int], mode: str):
        self.nest = nest
        self.mode = mode
        self.user_blocks = dict(blocks)
        self.ext = dict(nest.stmt.extents)
        self.path = "flat" if nest.dot is None else "dot"
        self.sh = _Shapes(self.path, mode)
        self.shapes: Dict[str, Tags] = {}
        self.depth: Dict[str, int] = {}
        self.consts: Dict[str, int] = {}
        self.grid: List[Tuple[str, int]] = []

    def block(self, key: str, default: int) -> Tuple[str, int]:
        size = check_power_of_two(self.user_blocks.get(key, default), f"block size for {key!r}")
        name = f"{key.upper()}BLOCK"
        self.consts[name] = size
        return name, size

    def define(self, name: str, tags: Tags, depth: int):
        self.shapes[name] = tags
        self.depth[name] = depth

    def ref(self, name: str, result: Tags) -> Ref:
        return Ref(name, self.sh.expand(self.shapes[name], result))

    def lower_op(self, o) -> KStmt:
        if isinstance(o, NLoad):
            tags = self.sh.combine([self.shapes[i] for i in o.index])
            self.define(o.name, tags, max((self.depth[i] for i in o.index), default=0))
            return Load(o.name, o.tensor, tuple(self.ref(i, tags) for i in o.index), o.is_index)
        if isinstance(o, NMul):
            tags = self.sh.combine([self.shapes[o.a], self.shapes[o.b]])
            self.define(o.name, tags, max(self.depth[o.a], self.depth[o.b]))
            return Mul(o.name, self.ref(o.a, tags), self.ref(o.b, tags))
        raise TypeError(o)

    def place(self, ops, levels: int):
        """Group lowered input-side ops by loop depth, keeping program order."""
        by_depth: List[List[KStmt]] = [[] for _ in range(levels + 1)]
        for o in ops:
            s = self.lower_op(o)
            by_depth[self.depth[s.name]].append(s)
        return by_depth

    def split_ops(self):
        """Partition nest ops into input side, output index loads and the rest."""
        stores = self.nest.stores
        feeding_store = {i for s in stores for i in s.index}
        used_by_loads = {i for o in self.nest.body if isinstance(o, NLoad) for i in o.index}
        inputs, outputs = [], []
        for o in self.nest.body:
            if isinstance(o, NLoad) and o.name in feeding_store and o.name not in used_by_loads:
                outputs.append(o)
            elif isinstance(o, (NLoad, NMul)):
                inputs.append(o)
        return inputs, outputs

    def store(self, value: Ref) -> Store:
        s = self.nest.stores[0]
        tags = self.sh.combine([self.shapes[i] for i in s.index])
        return Store(s.tensor, tuple(self.ref(i, tags) for i in s.index), value, s.atomic)

    # paths

    def build_flat(self) -> List[KStmt]:
        nest, ext = self.nest, self.ext
        pw, red = nest.pointwise, nest.reduction
        P = nest.flat_axis if len(pw) > 1 else pw[0]
        pb_name, pb = self.block(P, self.user_blocks.get("P", DEFAULT_FLAT_BLOCK))
        total = math.prod(ext[v] for v in pw)
        self.grid.append((P, -(-total // pb)))
        body: List[KStmt] = [Arange(P, pb_name, pb, 0, self.sh.var("P"), total)]
        self.define(P, self.sh.var("P"), 0)
        body += self._splits(P, pw, 0)

        inputs, outputs = self.split_ops()
        if not red:
            placed = self.place(inputs, 0)
            body += placed[0]
            value = Ref(_product_name(nest))
        else:
            R = "".join(red) if len(red) > 1 else red[0]
            rb_name, rb = self.block(R, self.user_blocks.get("R", DEFAULT_BLOCK))
            rtotal = math.prod(ext[v] for v in red)
            base = f"{R}_base"
            body.append(Arange(base, rb_name, rb, None, self.sh.var("R"), None))
            self.define(base, self.sh.var("R"), 1)
            body.append(Full("acc", (pb_name, rb_name)))
            acc_tags = self.sh.combine([self.sh.var("P"), self.sh.var("R")])
            self.shapes["acc"] = acc_tags
            inner: List[KStmt] = [Offset(R, f"{R}_offset", base, rtotal)]
            self.define(R, self.sh.var("R"), 1)
            inner += self._splits(R, red, 1)
            placed = self.place(inputs, 1)
            body += placed[0]
            inner += placed[1]
            prod = _product_name(nest)
            inner.append(AccumAdd("acc", self.ref(prod, acc_tags)))
            body.append(Loop(f"{R}_offset", rtotal, rb, rb_name, tuple(inner)))
            body.append(ReduceSum("acc_sum", "acc", 1, (":", None)))
            self.shapes["acc_sum"] = self.sh.combine([self.sh.var("P")])
            value = Ref("acc_sum")
        for o in outputs:
            body.append(self.lower_op(o))
        body.append(self.store(value))
        return body

    def _splits(self, src: str, vars_: Sequence[str], depth: int) -> List[KStmt]:
        if len(vars_) < 2:
            return []
        out = []
        for k, v in enumerate(vars_):
            div = math.prod(self.ext[w] for w in vars_[k + 1:])
            out.append(Split(v, src, div, None if k == 0 else self.ext[v]))
            self.define(v, self.shapes[src], depth)
        return out

    def build_dot(self) -> List[KStmt]:
        nest, ext, d = self.nest, self.ext, self.nest.dot
        yb_name, yb = self.block(d.y, DEFAULT_BLOCK)
        xb_name, xb = self.block(d.x, DEFAULT_BLOCK)
        rb_name, rb = self.block(d.r, DEFAULT_BLOCK)
        self.grid = [(d.x, -(-ext[d.x] // xb)), (d.y, -(-ext[d.y] // yb))]
        body: List[KStmt] = [
            Arange(d.y, yb_name, yb, 1, self.sh.var("Y"), ext[d.y]),
            Arange(d.x, xb_name, xb, 0, self.sh.var("X"), ext[d.x]),
        ]
        self.define(d.y, self.sh.var("Y"), 0)
        self.define(d.x, self.sh.var("X"), 0)
        for i, b in enumerate(d.batch):
            self.grid.append((b, ext[b]))
            body.append(ProgramIndex(b, 2 + i, ext[b]))
            self.define(b, (), 0)
        base = f"{d.r}_base"
        body.append(Arange(base, rb_name, rb, None, self.sh.var("R"), None))
        levels = len(d.serial) + 1
        self.define(base, self.sh.var("R"), levels)
        for i, s in enumerate(d.serial):
            self.define(s, (), i + 1)
        self.define(d.r, self.sh.var("R"), levels)

        inputs, outputs = self.split_ops()
        placed = self.place(inputs, levels)
        body += placed[0]
        body.append(Full("acc", (yb_name, xb_name)))
        self.shapes["acc"] = ("Y", "X")

        lhs = _operand(nest, d.lhs)
        rhs = _operand(nest, d.rhs)
        inner: List[KStmt] = [Offset(d.r, f"{d.r}_offset", base, ext[d.r])]
        inner += placed[levels]
        if self.mode == "eager":
            lt, rt = self.shapes[lhs], self.shapes[rhs]
            if lt != ("Y", "1", "R") or rt != ("1", "X", "R"):
                raise BlockShapeError(f"unexpected eager dot operand shapes {lt} and {rt}")
            lv, rv, rtr = f"{lhs}_2d", f"{rhs}_2d", f"{rhs}_t"
            inner.append(Reshape(lv, lhs, (yb_name, rb_name)))
            inner.append(Reshape(rv, rhs, (xb_name, rb_name)))
            inner.append(Transpose(rtr, rv))
            self.shapes.update({lv: ("Y", "R"), rv: ("X", "R"), rtr: ("R", "X")})
            inner.append(DotAcc("acc", Ref(lv), Ref(rtr)))
        else:
            inner.append(DotAcc("acc", Ref(lhs), Ref(rhs)))
        loop: KStmt = Loop(f"{d.r}_offset", ext[d.r], rb, rb_name, tuple(inner))
        for i in reversed(range(len(d.serial))):
            loop = Loop(d.serial[i], ext[d.serial[i]], 1, None, tuple(placed[i + 1]) + (loop,))
        body.append(loop)

        value = Ref("acc")
        if self.mode == "eager":
            body.append(Expand("acc_out", Ref("acc", (":", ":", None))))
            self.shapes["acc_out"] = ("Y", "X", "1")
            value = Ref("acc_out")
        for o in outputs:
            body.append(self.lower_op(o))
        body.append(self.store(value))
        return body


def _product_name(nest: LoopNest) -> str:
    src = next(o for o in nest.body if isinstance(o, (NSum, NStore)))
    return src.src if isinstance(src, NSum) else src.value


def _operand(nest: LoopNest, factors: Sequence[str]) -> str:
    dot = next(o for o in nest.body if isinstance(o, NDot))
    return dot.lhs if factors == nest.dot.lhs else dot.rhs


def tile(nest: LoopNest, block_sizes: Optional[Mapping[str, int]] = None,
         mode: str = "lazy") -> TiledKernel:
    """Tile ``nest`` into a grid of programs.

    Dot nests are tiled over (y, x) with an inner loop over the dot reduction
    variable; other nests over the flattened pointwise axis with an inner loop
    over the flattened reduction axis.  ``block_sizes`` maps variables (or the
    flattened axis names, or the keys ``"P"``/``"R"``) to power-of-two sizes.
    """
    if mode not in ("eager", "lazy"):
        raise ValueError(f"mode must be 'eager' or 'lazy', got {mode!r}")
    if not nest.stmt.has_extents:
        raise ValueError("tiling needs inferred extents")
    b = _Builder(nest, block_sizes or {}, mode)
    body = b.build_dot() if nest.dot is not None else b.build_flat()
    name = f"{'dot' if nest.dot is not None else 'flat'}_{mode}"
    return TiledKernel(name, nest, mode, tuple(b.grid), tuple(b.consts.items()), tuple(body),
                       dict(b.shapes))


# -- checking --------------------------------------------------------------

def check_block_shapes(k: TiledKernel) -> None:
    """Re-derive every block shape from its operands and validate dot layouts."""
    path = "dot" if k.uses_dot else "flat"
    sh = _Shapes(path, k.mode)
    known: Dict[str, Tags] = {b: () for b in k.nest.dot.batch} if k.uses_dot else {}
    if k.uses_dot:
        known.update({s: () for s in k.nest.dot.serial})

    def use(ref: Ref) -> Tags:
        if ref.name not in known:
            raise BlockShapeError(f"{ref.name!r} used before definition")
        return _apply_expand(known[ref.name], ref.expand)

    def expect(name: str, tags: Tags):
        if k.shapes.get(name) != tags:
            raise BlockShapeError(f"{name!r}: recorded shape {k.shapes.get(name)} but derived {tags}")
        known[name] = tags

    for s in walk(k.body):
        if isinstance(s, Arange):
            expect(s.name, s.tags)
        elif isinstance(s, ProgramIndex):
            known[s.name] = ()
        elif isinstance(s, Offset):
            expect(s.name, known[s.base])
        elif isinstance(s, Split):
            expect(s.name, known[s.src])
        elif isinstance(s, Load):
            tags = [use(r) for r in s.index]
            merged = sh.combine(tags)
            if k.mode == "lazy" and any(len(t) not in (0, len(merged)) and t != () for t in tags):
                raise BlockShapeError(f"{s.name!r}: operands of different rank without expansion")
            expect(s.name, merged)
        elif isinstance(s, Mul):
            expect(s.name, sh.combine([use(s.a), use(s.b)]))
        elif isinstance(s, Full):
            known[s.name] = k.shapes[s.name]
        elif isinstance(s, Reshape):
            src = known[s.src]
            if tuple(a for a in src if a != "1") != k.shapes[s.name]:
                raise BlockShapeError(f"view {s.name!r} changes the axis order")
            known[s.name] = k.shapes[s.name]
        elif isinstance(s, Transpose):
            expect(s.name, tuple(reversed(known[s.src])))
        elif isinstance(s, DotAcc):
            a, b = use(s.a), use(s.b)
            if a != ("Y", "R") or b != ("R", "X"):
                raise BlockShapeError(f"dot operands must be (Y,R) x (R,X), got {a} x {b}")
        elif isinstance(s, ReduceSum):
            red = tuple(t for i, t in enumerate(known[s.src]) if i != s.axis)
            expect(s.name, _apply_expand(red, s.expand))
        elif isinstance(s, Expand):
            expect(s.name, use(s.src))
        elif isinstance(s, Store):
            use(s.value)
            for r in s.index:
                use(r)
    if k.mode == "lazy" and any(len(t) > 2 for t in k.shapes.values()):
        raise BlockShapeError("lazy kernels hold blocks of rank <= 2")
    if any(len(t) > 3 for t in k.shapes.values()):
        raise BlockShapeError("blocks have rank <= 3")
