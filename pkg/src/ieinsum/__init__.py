"""Indirect Einsum toolkit: parsing, fixed-length sparse formats, group-size
tuning, gather/einsum/scatter plans and fused tiled kernels."""

from .expr import (EinsumStmt, ExprSyntaxError, ExtentError, NestedIndirectionError, classify_vars,
                   infer_extents, parse)
from .formats import (BlockGroupCooMatrix, CooMatrix, GroupCooMatrix, coo_to_dense, coo_to_groupcoo,
                      dense_to_blockgroupcoo, dense_to_coo, groupcoo_to_coo)
from .kernel import compile_kernel, emit_text, interpret_kernel
from .plan import AccessCounters, execute_plan, lower_to_plan, oracle_einsum
from .tuner import OccProfile, select
from .validation import IndexRangeError

__version__ = "0.1.0"

__all__ = [
    "parse",
    "infer_extents",
    "classify_vars",
    "EinsumStmt",
    "ExprSyntaxError",
    "NestedIndirectionError",
    "ExtentError",
    "IndexRangeError",
    "CooMatrix",
    "GroupCooMatrix",
    "BlockGroupCooMatrix",
    "dense_to_coo",
    "coo_to_dense",
    "coo_to_groupcoo",
    "groupcoo_to_coo",
    "dense_to_blockgroupcoo",
    "OccProfile",
    "select",
    "AccessCounters",
    "lower_to_plan",
    "execute_plan",
    "oracle_einsum",
    "compile_kernel",
    "interpret_kernel",
    "emit_text",
    "evaluate",
]

MODES = ("plan", "fused-eager", "fused-lazy", "fused-flat", "oracle")


def evaluate(expression, tensors, out=None, mode="plan", block_sizes=None, threads=1):
    """Evaluate ``expression`` over ``tensors`` with one of :data:`MODES`.

    Returns ``(result, counters)``; counters are ``None`` for the oracle.
    """
    from .plan import bind_extents

    stmt = parse(expression) if isinstance(expression, str) else expression
    env = dict(tensors)
    if out is not None:
        env[stmt.output.tensor] = out
    if mode == "oracle":
        return oracle_einsum(stmt, env), None
    if mode == "plan":
        return execute_plan(lower_to_plan(stmt), env)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    bound = bind_extents(stmt, env)
    broadcast = "eager" if mode == "fused-eager" else "lazy"
    k = compile_kernel(bound, block_sizes, broadcast, dot=mode != "fused-flat")
    counters = AccessCounters()
    return interpret_kernel(k, env, threads=threads, counters=counters), counters
