"""Deterministic text form of a :class:`TiledKernel` (grammar in docs/kernel_grammar.md)."""

from __future__ import annotations

from typing import List

from .tiled import (AccumAdd, Arange, DotAcc, Expand, Full, Load, Loop, Mul, Offset,
                    ProgramIndex, ReduceSum, Reshape, Split, Store, TiledKernel, Transpose)

__all__ = ["emit_text"]

_IND = "    "


def _layout(tags) -> str:
    if len(tags) <= 1:
        return ""
    return "[" + ", ".join(":" if t != "1" else "None" for t in tags) + "]"


def _shape(k: TiledKernel, name: str) -> str:
    tags = k.shapes.get(name)
    if tags is None:
        return ""
    return f"  # ({','.join(tags)})"


def _index(tensor: str, refs) -> str:
    return f"{tensor}[{', '.join(str(r) for r in refs)}]"


def _line(k: TiledKernel, s) -> str:
    if isinstance(s, Arange):
        lanes = f"arange({s.block}){_layout(s.tags)}"
        src = lanes if s.axis is None else f"pid({s.axis}) * {s.block} + {lanes}"
        return f"{s.name} = {src}{_shape(k, s.name)}"
    if isinstance(s, ProgramIndex):
        return f"{s.name} = pid({s.axis})"
    if isinstance(s, Offset):
        return f"{s.name} = {s.offset} + {s.base}{_shape(k, s.name)}"
    if isinstance(s, Split):
        rhs = f"{s.src} // {s.div}" if s.div != 1 else s.src
        if s.mod is not None:
            rhs += f" % {s.mod}"
        return f"{s.name} = {rhs}{_shape(k, s.name)}"
    if isinstance(s, Load):
        return f"{s.name} = load({_index(s.tensor, s.index)}){_shape(k, s.name)}"
    if isinstance(s, Mul):
        return f"{s.name} = {s.a} * {s.b}{_shape(k, s.name)}"
    if isinstance(s, Full):
        return f"{s.name} = full(({', '.join(s.dims)}), 0){_shape(k, s.name)}"
    if isinstance(s, AccumAdd):
        return f"{s.acc} += {s.value}{_shape(k, s.acc)}"
    if isinstance(s, DotAcc):
        return f"{s.acc} += dot({s.a}, {s.b}){_shape(k, s.acc)}"
    if isinstance(s, Reshape):
        return f"{s.name} = view({s.src}, ({', '.join(s.dims)})){_shape(k, s.name)}"
    if isinstance(s, Transpose):
        return f"{s.name} = trans({s.src}){_shape(k, s.name)}"
    if isinstance(s, ReduceSum):
        ex = "[" + ", ".join(":" if e else "None" for e in s.expand) + "]"
        return f"{s.name} = sum({s.src}, {s.axis}){ex}{_shape(k, s.name)}"
    if isinstance(s, Expand):
        return f"{s.name} = {s.src}{_shape(k, s.name)}"
    if isinstance(s, Store):
        op = "atomic_add" if s.atomic else "store_add"
        return f"{op}({_index(s.tensor, s.index)}, {s.value})"
    raise TypeError(s)  # pragma: no cover


def _emit(k: TiledKernel, body, depth: int, out: List[str]) -> None:
    for s in body:
        if isinstance(s, Loop):
            step = f", {s.step_name}" if s.step_name else ""
            out.append(f"{_IND * depth}for {s.var} in range(0, {s.stop}{step}):")
            _emit(k, s.body, depth + 1, out)
        else:
            out.append(_IND * depth + _line(k, s))


def emit_text(k: TiledKernel) -> str:
    """Render ``k``.  Equal kernels render to byte-identical text."""
    out = [f"# {k.stmt}", f"kernel {k.name}({', '.join(k.params)}):"]
    for name, size in k.blocks:
        out.append(f"{_IND}{name} = {size}")
    grid = ", ".join(f"{n}" for _, n in k.grid)
    labels = ", ".join(f"{lab}" for lab, _ in k.grid)
    out.append(f"{_IND}grid = ({grid},)  # {labels}" if len(k.grid) == 1
               else f"{_IND}grid = ({grid})  # {labels}")
    _emit(k, k.body, 1, out)
    return "\n".join(out) + "\n"
