"""Fused kernels: loop-nest IR, dot detection, tiling, interpretation and emission."""

from .emit import emit_text
from .interp import interpret_kernel
from .nest import DotPattern, LoopNest, detect_dot, format_nest, fuse
from .tiled import BlockShapeError, TiledKernel, check_block_shapes, count_layout_ops, tile

__all__ = [
    "LoopNest",
    "DotPattern",
    "TiledKernel",
    "BlockShapeError",
    "fuse",
    "detect_dot",
    "tile",
    "check_block_shapes",
    "count_layout_ops",
    "interpret_kernel",
    "emit_text",
    "format_nest",
    "compile_kernel",
]


def compile_kernel(stmt, block_sizes=None, mode="lazy", dot=True) -> TiledKernel:
    """fuse -> (detect_dot) -> tile for a statement with known extents."""
    nest = fuse(stmt)
    if dot:
        nest = detect_dot(nest)
    return tile(nest, block_sizes, mode)
