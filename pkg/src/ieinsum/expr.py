"""Indirect-Einsum expressions: AST, parser, pretty-printer and extent inference.

Grammar (whitespace between tokens is insignificant)::

    stmt      = access ( "=" | "+=" ) access { "*" access }
    access    = NAME "[" index { "," index } "]"
    index     = NAME | NAME "[" NAME { "," NAME } "]"
    NAME      = /[A-Za-z_][A-Za-z0-9_]*/

An ``index`` that is a bare name is a loop variable.  The bracketed form
reads an integer index tensor at the given variables and uses the loaded
value as the coordinate (one level of indirection only).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

__all__ = [
    "Direct",
    "Indirect",
    "IndexExpr",
    "TensorAccess",
    "EinsumStmt",
    "ExprSyntaxError",
    "NestedIndirectionError",
    "ExtentError",
    "parse",
    "infer_extents",
    "with_extents",
    "classify_vars",
]


class ExprSyntaxError(ValueError):
    """Raised for malformed expression strings.

    ``pos`` is the zero-based character offset of the offending token.
    """

    def __init__(self, message: str, pos: int, source: str = ""):
        self.pos = pos
        self.source = source
        detail = f"{message} at position {pos}"
        if source:
            detail += f"\n  {source}\n  {' ' * pos}^"
        super().__init__(detail)


class NestedIndirectionError(ExprSyntaxError):
    """An indirection argument was itself an indirection (``A[B[C[i]]]``)."""


class ExtentError(ValueError):
    """Shape information is inconsistent with the statement."""


@dataclass(frozen=True)
class Direct:
    var: str

    def vars(self) -> Tuple[str, ...]:
        return (self.var,)

    def __str__(self) -> str:
        return self.var


@dataclass(frozen=True)
class Indirect:
    tensor: str
    args: Tuple[str, ...]

    def vars(self) -> Tuple[str, ...]:
        return self.args

    def __str__(self) -> str:
        return f"{self.tensor}[{','.join(self.args)}]"


IndexExpr = Union[Direct, Indirect]


@dataclass(frozen=True)
class TensorAccess:
    tensor: str
    indices: Tuple[IndexExpr, ...]

    @property
    def rank(self) -> int:
        return len(self.indices)

    @property
    def is_indirect(self) -> bool:
        return any(isinstance(ix, Indirect) for ix in self.indices)

    def vars(self) -> Tuple[str, ...]:
        """Variables in source order, deduplicated."""
        return _unique(v for ix in self.indices for v in ix.vars())

    def __str__(self) -> str:
        return f"{self.tensor}[{','.join(str(ix) for ix in self.indices)}]"


@dataclass(frozen=True)
class EinsumStmt:
    output: TensorAccess
    inputs: Tuple[TensorAccess, ...]
    accumulate: bool
    # variable -> extent, in first-appearance order; empty until inference
    extents: Tuple[Tuple[str, int], ...] = field(default=(), compare=False)

    @property
    def vars(self) -> Dict[str, Optional[int]]:
        known = dict(self.extents)
        return {v: known.get(v) for v in self.var_order()}

    def var_order(self) -> Tuple[str, ...]:
        accesses = (self.output,) + self.inputs
        return _unique(v for acc in accesses for v in acc.vars())

    def extent(self, var: str) -> int:
        try:
            return dict(self.extents)[var]
        except KeyError:
            raise ExtentError(f"extent of {var!r} has not been inferred") from None

    @property
    def has_extents(self) -> bool:
        return len(self.extents) == len(self.var_order())

    def index_tensors(self) -> Tuple[str, ...]:
        accesses = (self.output,) + self.inputs
        return _unique(ix.tensor for acc in accesses for ix in acc.indices
                       if isinstance(ix, Indirect))

    def tensor_names(self) -> Tuple[str, ...]:
        names = [self.output.tensor] + [a.tensor for a in self.inputs]
        return _unique(names + list(self.index_tensors()))

    def __str__(self) -> str:
        op = "+=" if self.accumulate else "="
        rhs = " * ".join(str(a) for a in self.inputs)
        return f"{self.output} {op} {rhs}"


def _unique(items: Iterable[str]) -> Tuple[str, ...]:
    return tuple(dict.fromkeys(items))


# -- lexer -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\+=|[-+*/]=|[\[\],=*+\-/])|(?P<bad>\S))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "name", "op", "end"
    text: str
    pos: int


def _tokenize(src: str) -> List[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:  # only trailing whitespace remains
            break
        if m.group("bad") is not None:
            raise ExprSyntaxError(f"unexpected character {m.group('bad')!r}", m.start("bad"), src)
        kind = "name" if m.group("name") is not None else "op"
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.tok
        return ExprSyntaxError(msg, tok.pos, self.src)

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if tok.text != text or tok.kind == "end":
            found = repr(tok.text) if tok.kind != "end" else "end of input"
            raise self.error(f"expected {text!r}, found {found}")
        self.i += 1
        return tok

    def name(self) -> _Tok:
        tok = self.tok
        if tok.kind != "name":
            found = repr(tok.text) if tok.kind != "end" else "end of input"
            raise self.error(f"expected a name, found {found}")
        self.i += 1
        return tok

    def stmt(self) -> EinsumStmt:
        out = self.access()
        op = self.tok
        if op.text == "+=":
            accumulate = True
        elif op.text == "=":
            accumulate = False
        elif op.kind == "op" and op.text.endswith("="):
            raise self.error(f"unsupported reduction operator {op.text!r}; only '=' and '+=' are allowed")
        elif op.kind == "name" and self.toks[self.i + 1].text == "=":
            # e.g. "C[i] max= A[i]"
            raise self.error(f"unsupported reducer {op.text!r}; only sum reductions are allowed")
        else:
            raise self.error("expected '=' or '+='")
        self.i += 1
        inputs = [self.access()]
        while self.tok.kind != "end":
            if self.tok.text in "+-/":
                raise self.error(f"unsupported operator {self.tok.text!r}; factors may only be combined with '*'")
            self.expect("*")
            inputs.append(self.access())
        return EinsumStmt(output=out, inputs=tuple(inputs), accumulate=accumulate)

    def access(self) -> TensorAccess:
        name = self.name()
        self.expect("[")
        indices = [self.index()]
        while self.tok.text == ",":
            self.i += 1
            indices.append(self.index())
        self.expect("]")
        return TensorAccess(name.text, tuple(indices))

    def index(self) -> IndexExpr:
        name = self.name()
        if self.tok.text != "[":
            return Direct(name.text)
        self.i += 1
        args = [self.indirect_arg()]
        while self.tok.text == ",":
            self.i += 1
            args.append(self.indirect_arg())
        self.expect("]")
        return Indirect(name.text, tuple(args))

    def indirect_arg(self) -> str:
        tok = self.name()
        if self.tok.text == "[":
            raise NestedIndirectionError(
                f"nested indirection through {tok.text!r} is not supported", tok.pos, self.src)
        return tok.text


def parse(expression: str) -> EinsumStmt:
    """Parse an indirect-Einsum string into an :class:`EinsumStmt`.

    >>> str(parse("C[AM[p],n] += AV[p] * B[AK[p],n]"))
    'C[AM[p],n] += AV[p] * B[AK[p],n]'
    """
    stmt = _Parser(expression).stmt()
    rhs_names = {a.tensor for a in stmt.inputs} | {
        ix.tensor for a in stmt.inputs for ix in a.indices if isinstance(ix, Indirect)}
    if stmt.output.tensor in rhs_names:
        raise ExprSyntaxError(
            f"output tensor {stmt.output.tensor!r} may not be read on the right-hand side",
            expression.find(stmt.output.tensor, 1), expression)
    return stmt


# -- extent inference ------------------------------------------------------

def _shape_of(x) -> Tuple[int, ...]:
    shape = getattr(x, "shape", x)
    return tuple(int(d) for d in shape)


def infer_extents(stmt: EinsumStmt, shapes: Mapping[str, Sequence[int]]) -> EinsumStmt:
    """Return ``stmt`` with every variable's extent read off the tensor shapes.

    ``shapes`` maps tensor names to shapes (arrays are accepted as well).  For
    an indirect index ``T[p,q]`` the extents of ``p`` and ``q`` come from the
    shape of ``T``; the loaded coordinate is only range-checked at execution.
    """
    found: Dict[str, Tuple[int, str]] = {}
    ranks: Dict[str, int] = {}

    def require(name: str, rank: int) -> Tuple[int, ...]:
        if name not in shapes:
            raise ExtentError(f"no shape given for tensor {name!r}")
        shape = _shape_of(shapes[name])
        if len(shape) != rank:
            raise ExtentError(
                f"rank mismatch for {name!r}: accessed with {rank} indices but shape is {shape}")
        prev = ranks.setdefault(name, rank)
        if prev != rank:
            raise ExtentError(f"rank mismatch for {name!r}: accessed with both {prev} and {rank} indices")
        return shape

    def bind(var: str, extent: int, where: str):
        if extent < 0:
            raise ExtentError(f"negative extent {extent} for {var} from {where}")
        if var in found and found[var][0] != extent:
            raise ExtentError(
                f"extent conflict for {var}: {found[var][0]} from {found[var][1]} vs {extent} from {where}")
        found.setdefault(var, (extent, where))

    for acc in (stmt.output,) + stmt.inputs:
        shape = require(acc.tensor, acc.rank)
        for dim, ix in enumerate(acc.indices):
            if isinstance(ix, Direct):
                bind(ix.var, shape[dim], f"{acc.tensor} dim {dim}")
            else:
                ishape = require(ix.tensor, len(ix.args))
                for k, v in enumerate(ix.args):
                    bind(v, ishape[k], f"{ix.tensor} dim {k}")

    missing = [v for v in stmt.var_order() if v not in found]
    if missing:
        raise ExtentError(f"variable {missing[0]!r} has no direct occurrence to infer its extent from")
    return replace(stmt, extents=tuple((v, found[v][0]) for v in stmt.var_order()))


def with_extents(stmt: EinsumStmt, extents: Mapping[str, int]) -> EinsumStmt:
    """Attach explicitly given extents (e.g. from the command line)."""
    missing = [v for v in stmt.var_order() if v not in extents]
    if missing:
        raise ExtentError(f"no extent given for variable {missing[0]!r}")
    for v in stmt.var_order():
        if int(extents[v]) < 0:
            raise ExtentError(f"negative extent for {v!r}")
    return replace(stmt, extents=tuple((v, int(extents[v])) for v in stmt.var_order()))


def classify_vars(stmt: EinsumStmt) -> Tuple[List[str], List[str]]:
    """Split variables into (pointwise, reduction), each in first-appearance order.

    A variable is pointwise if it occurs anywhere in the output access,
    including as an argument of an output indirection.
    """
    out_vars = set(stmt.output.vars())
    order = stmt.var_order()
    return [v for v in order if v in out_vars], [v for v in order if v not in out_vars]


def iter_accesses(stmt: EinsumStmt) -> Iterator[TensorAccess]:
    yield stmt.output
    yield from stmt.inputs
