"""Command-line front end: run, convert, sweep-g, dump-plan, dump-kernel, bench.

Exit codes: 0 ok, 1 verification failed, 2 usage, 3 parse error, 4 unbound
tensor, 5 shape error, 6 index out of range, 7 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import statistics
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import MODES, corpus
from .expr import EinsumStmt, ExprSyntaxError, ExtentError, Indirect, parse, with_extents
from .formats import (BlockGroupCooMatrix, CooMatrix, block_dense_operand, coo_to_dense,
                      coo_to_groupcoo, dense_to_blockgroupcoo, dense_to_coo, emit_operands,
                      format_nbytes, load_format, operand_bounds, save_format, to_ell)
from .kernel import compile_kernel, count_layout_ops, emit_text, interpret_kernel
from .kernel.tiled import BlockShapeError
from .plan import AccessCounters, bind_extents, execute_plan, lower_to_plan, oracle_einsum
from .tensors import (MatrixMarketError, TensorFormatError, load_matrix_market, load_tensor,
                      save_tensor)
from .tuner import OccProfile, candidates, cost_exact, cost_relaxed, g_star, select
from .validation import IndexRangeError, check_power_of_two

__all__ = ["main", "build_parser", "METRICS_SCHEMA_VERSION", "METRICS_KEYS"]

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_PARSE, EXIT_UNBOUND, EXIT_SHAPE, EXIT_INDEX, EXIT_IO = range(8)
METRICS_SCHEMA_VERSION = 1
METRICS_KEYS = ("schema_version", "expression", "mode", "counters", "kernelCount", "planNodeCount",
                "layoutOps", "wallClockMs", "formatBytes", "verified", "maxAbsError",
                "resultSha256")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- argument helpers ------------------------------------------------------

def _pairs(items: Optional[Sequence[str]], what: str) -> Dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise CliError(EXIT_USAGE, f"{what} expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _dims(text: str, what: str) -> Tuple[int, ...]:
    try:
        dims = tuple(int(d) for d in text.lower().replace(",", "x").split("x") if d)
    except ValueError:
        raise CliError(EXIT_USAGE, f"bad {what} {text!r}; expected e.g. 64x16") from None
    if not dims or min(dims) < 1:
        raise CliError(EXIT_USAGE, f"bad {what} {text!r}")
    return dims


def _int_map(items, what: str) -> Dict[str, int]:
    out = {}
    for k, v in _pairs(items, what).items():
        try:
            out[k] = int(v)
        except ValueError:
            raise CliError(EXIT_USAGE, f"{what} {k}={v!r} is not an integer") from None
    return out


def _blocks(items) -> Dict[str, int]:
    blocks = _int_map(items, "--block")
    for k, v in blocks.items():
        try:
            check_power_of_two(v, f"block size for {k!r}")
        except ValueError as e:
            raise CliError(EXIT_USAGE, str(e)) from None
    return blocks


def _read_matrix(path: str):
    """A MatrixMarket file gives a CooMatrix or dense array; anything else is a tensor file."""
    if path.endswith(".mtx"):
        return load_matrix_market(path)
    return load_tensor(path)


def _expression(args) -> Tuple[str, Optional[corpus.CorpusEntry]]:
    entry = None
    if getattr(args, "corpus", None):
        try:
            entry = corpus.get(args.corpus)
        except KeyError as e:
            raise CliError(EXIT_USAGE, str(e.args[0])) from None
        text = entry.expression
    elif getattr(args, "spec", None):
        try:
            entry = corpus.load_entry(args.spec)
        except ValueError as e:
            raise CliError(EXIT_USAGE, str(e)) from None
        text = entry.expression
    elif getattr(args, "expr_file", None):
        with open(args.expr_file) as fh:
            text = fh.read().strip()
    elif args.expr:
        text = args.expr
    else:
        raise CliError(EXIT_USAGE, "no expression given (positional, --expr-file, --corpus or --spec)")
    return text, entry


def _parse_format(spec: str):
    kind, _, rest = spec.partition(":")
    kind = kind.lower()
    if kind == "coo" and not rest:
        return ("coo",)
    if kind == "ell" and not rest:
        return ("ell",)
    if kind == "auto" and not rest:
        return ("groupcoo", "auto")
    if kind == "groupcoo":
        if rest == "auto":
            return ("groupcoo", "auto")
        try:
            return ("groupcoo", int(rest))
        except ValueError:
            pass
    if kind == "blockgroupcoo":
        try:
            bm, bk, g = (int(x) for x in rest.split(","))
            return ("blockgroupcoo", bm, bk, g)
        except ValueError:
            pass
    raise CliError(EXIT_USAGE, f"bad format {spec!r}; use coo, ell, groupcoo:G, groupcoo:auto, "
                                "blockgroupcoo:BM,BK,G or auto")


def _encode(matrix, spec, group_dim: int = 0):
    """Encode a CooMatrix or dense matrix.  Returns (format, chosen group size or None)."""
    fmt = _parse_format(spec) if isinstance(spec, str) else spec
    coo = matrix if isinstance(matrix, CooMatrix) else dense_to_coo(matrix)
    if fmt[0] == "coo":
        return coo, None
    if fmt[0] == "ell":
        e = to_ell(coo, group_dim)
        return e, e.g
    if fmt[0] == "groupcoo":
        g = fmt[1]
        if g == "auto":
            g = select(OccProfile.from_matrix(coo, group_dim)).chosen
        return coo_to_groupcoo(coo, group_dim, g), g
    dense = coo_to_dense(coo)
    return dense_to_blockgroupcoo(dense, (fmt[1], fmt[2]), fmt[3]), fmt[3]


def _synth_matrix(spec: str, rng, dtype: str) -> CooMatrix:
    parts = spec.split(":")
    try:
        if parts[0] == "random" and len(parts) == 3:
            m, k = _dims(parts[1], "matrix shape")
            return corpus.random_sparse(m, k, float(parts[2]), rng, dtype)
        if parts[0] == "block" and len(parts) == 4:
            m, k = _dims(parts[1], "matrix shape")
            bm, bk = _dims(parts[2], "block shape")
            return corpus.block_sparse(m, k, (bm, bk), float(parts[3]), rng, dtype)
    except ValueError as e:
        raise CliError(EXIT_USAGE, f"bad --sparse {spec!r}: {e}") from None
    raise CliError(EXIT_USAGE, f"bad --sparse {spec!r}; use random:MxK:DENSITY or "
                               "block:MxK:BMxBK:DENSITY")


# -- tensor binding --------------------------------------------------------

class Bound:
    def __init__(self, stmt: EinsumStmt):
        self.stmt = stmt
        self.tensors: Dict[str, np.ndarray] = {}
        self.bounds: Dict[str, int] = {}  # index tensor -> size of addressed dim
        self.format_bytes: Dict[str, int] = {}
        self.block_rows: Dict[str, int] = {}  # dense operand -> rows per block


def _bind(args, stmt: EinsumStmt, entry) -> Bound:
    b = Bound(stmt)
    rng = np.random.default_rng(args.seed)
    formats = _pairs(args.format, "--format")
    matrices, encoded = {}, {}
    for name, path in _pairs(args.bind, "--bind").items():
        if name in formats or path.endswith(".mtx"):
            matrices[name] = _read_matrix(path)
        elif _is_dir(path):
            encoded[name] = load_format(path)
        else:
            b.tensors[name] = load_tensor(path)
    for name, spec in _pairs(args.sparse, "--sparse").items():
        matrices[name] = _synth_matrix(spec, rng, args.dtype)
    for name, mat in matrices.items():
        if name in stmt.tensor_names() and name not in formats:
            b.tensors[name] = coo_to_dense(mat) if isinstance(mat, CooMatrix) else mat
        else:
            encoded[name] = _encode(mat, formats.get(name, "coo"), args.group_dim)[0]
    for name, fmt in encoded.items():
        b.tensors.update(emit_operands(fmt, name))
        b.bounds.update(operand_bounds(fmt, name))
        b.format_bytes[name] = format_nbytes(fmt)
        if isinstance(fmt, BlockGroupCooMatrix):
            b.block_rows[f"{name}M"] = fmt.block[0]
            b.block_rows[f"{name}K"] = fmt.block[1]
    _reblock(b)

    shapes = {k: _dims(v, "--shape") for k, v in _pairs(args.shape, "--shape").items()}
    if entry is not None:
        missing = [t for t in stmt.tensor_names() if t not in b.tensors]
        docs = corpus.instance_for_shapes(stmt, {**entry.shapes, **shapes}, rng, args.dtype)
        for t in missing:
            b.tensors[t] = docs[t]
    _complete(b, shapes, rng, args)
    return b


def _is_dir(path: str) -> bool:
    import os
    return os.path.isdir(path)


def _reblock(b: Bound) -> None:
    """Give rank-2 dense operands the [blocks, rows, N] layout a block format expects."""
    for acc in (b.stmt.output,) + b.stmt.inputs:
        t = b.tensors.get(acc.tensor)
        if t is None or t.ndim != 2 or acc.rank != 3 or not isinstance(acc.indices[0], Indirect):
            continue
        rows = b.block_rows.get(acc.indices[0].tensor)
        if rows:
            b.tensors[acc.tensor] = block_dense_operand(t, rows)


def _complete(b: Bound, shapes, rng, args) -> None:
    """Synthesize tensors that are still unbound.

    The output defaults to zeros; inputs are synthesized only with
    ``--synthesize``.  Shapes come from ``--shape``, from extents implied by
    bound tensors, and from the row/column counts of encoded formats.
    """
    stmt = b.stmt
    for acc in (stmt.output,) + stmt.inputs:
        shp = shapes.get(acc.tensor)
        if shp is None or len(shp) != 2 or acc.rank != 3 or not isinstance(acc.indices[0], Indirect):
            continue
        rows = b.block_rows.get(acc.indices[0].tensor)
        if rows:  # a [K, N] shape for a blocked operand means [K/bk, bk, N]
            shapes[acc.tensor] = (-(-shp[0] // rows), rows, shp[1])
    ext: Dict[str, int] = {}
    for acc in (stmt.output,) + stmt.inputs:
        t = b.tensors.get(acc.tensor)
        if t is None and acc.tensor in shapes:
            t = np.empty(shapes[acc.tensor])
        for d, ix in enumerate(acc.indices):
            if t is not None and d < t.ndim and not isinstance(ix, Indirect):
                ext.setdefault(ix.var, t.shape[d])
            if isinstance(ix, Indirect) and ix.tensor in b.tensors:
                it = b.tensors[ix.tensor]
                for k, a in enumerate(ix.args):
                    if k < it.ndim:
                        ext.setdefault(a, it.shape[k])
                if t is not None and d < t.ndim:
                    b.bounds.setdefault(ix.tensor, t.shape[d])
    ext.update(_int_map(args.extent, "--extent") if hasattr(args, "extent") else {})
    for acc in (stmt.output,) + stmt.inputs:
        if acc.tensor in b.tensors:
            continue
        is_out = acc is stmt.output
        if not is_out and not args.synthesize and acc.tensor not in shapes:
            raise CliError(EXIT_UNBOUND, f"tensor {acc.tensor!r} is not bound "
                                         "(use --bind, --sparse, --shape or --synthesize)")
        shape = shapes.get(acc.tensor)
        if shape is None:
            shape = []
            for ix in acc.indices:
                size = ext.get(ix.var) if not isinstance(ix, Indirect) else _indirect_size(b, ix)
                if size is None:
                    raise CliError(EXIT_UNBOUND, f"cannot infer the shape of unbound tensor "
                                                 f"{acc.tensor!r}; pass --shape {acc.tensor}=...")
                shape.append(size)
        shape = tuple(shape)
        if is_out:
            dtype = np.float64 if args.dtype == "real64" else np.int64
            b.tensors[acc.tensor] = np.zeros(shape, dtype=dtype)
        else:
            b.tensors[acc.tensor] = corpus._values(rng, shape, args.dtype)
    for name in stmt.index_tensors():
        if name not in b.tensors:
            raise CliError(EXIT_UNBOUND, f"index tensor {name!r} is not bound")


def _indirect_size(b: Bound, ix: Indirect) -> Optional[int]:
    if ix.tensor in b.bounds:
        return b.bounds[ix.tensor]
    t = b.tensors.get(ix.tensor)
    if t is not None and t.size:
        return int(t.max()) + 1
    return None


# -- execution -------------------------------------------------------------

def _execute(stmt: EinsumStmt, tensors, mode: str, blocks, threads: int):
    """Returns (result, counters, kernelCount, layout ops)."""
    if mode == "oracle":
        return oracle_einsum(stmt, tensors), AccessCounters(), 0, (0, 0)
    if mode == "plan":
        plan = lower_to_plan(stmt)
        res, counters = execute_plan(plan, tensors)
        return res, counters, len(plan), (0, 0)
    bound = bind_extents(stmt, tensors)
    broadcast = "eager" if mode == "fused-eager" else "lazy"
    k = compile_kernel(bound, blocks, broadcast, dot=mode != "fused-flat")
    counters = AccessCounters()
    res = interpret_kernel(k, tensors, threads=threads, counters=counters)
    return res, counters, 1, count_layout_ops(k)


def _digest(a: np.ndarray) -> str:
    a = np.ascontiguousarray(a)
    h = hashlib.sha256(a.dtype.str.encode() + repr(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


def _compare(res: np.ndarray, ref: np.ndarray) -> Tuple[bool, float]:
    if res.dtype.kind == "i" and ref.dtype.kind == "i":
        err = float(np.max(np.abs(res - ref), initial=0))
        return err == 0, err
    err = float(np.max(np.abs(res.astype(float) - ref.astype(float)), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(ref), initial=0.0)))
    return err <= 1e-10 * scale, err


def _prepare(args):
    text, entry = _expression(args)
    stmt = parse(text)
    b = _bind(args, stmt, entry)
    return stmt, b


def cmd_run(args) -> int:
    stmt, b = _prepare(args)
    blocks = _blocks(args.block)
    t0 = time.perf_counter()
    res, counters, kernels, layout = _execute(stmt, b.tensors, args.mode, blocks, args.threads)
    ms = (time.perf_counter() - t0) * 1e3
    verified, err = None, None
    if args.verify:
        ref = oracle_einsum(stmt, b.tensors)
        verified, err = _compare(res, ref)
    metrics = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "expression": str(stmt),
        "mode": args.mode,
        "counters": counters.as_dict(),
        "kernelCount": kernels,
        "planNodeCount": len(lower_to_plan(stmt)),
        "layoutOps": {"reshapes": layout[0], "transposes": layout[1]},
        "wallClockMs": round(ms, 3),
        "formatBytes": b.format_bytes,
        "verified": verified,
        "maxAbsError": err,
        "resultSha256": _digest(res),
    }
    if args.out:
        save_tensor(args.out, res)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.metrics:
        with open(args.metrics, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if verified is False:
        print(f"verification failed: max abs error {err}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_convert(args) -> int:
    mat = _read_matrix(args.input)
    if isinstance(mat, np.ndarray) and mat.ndim != 2:
        raise CliError(EXIT_SHAPE, f"convert expects a matrix, got shape {mat.shape}")
    fmt, g = _encode(mat, args.format, args.group_dim)
    manifest = save_format(fmt, args.out_dir)
    if g is not None:
        manifest["chosenG"] = g
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def _profile(args) -> Tuple[OccProfile, Optional[CooMatrix]]:
    if args.occ:
        try:
            occ = [int(x) for x in args.occ.split(",")]
        except ValueError:
            raise CliError(EXIT_USAGE, f"bad --occ {args.occ!r}") from None
        return OccProfile(np.array(occ), args.literal_n), None
    if not args.input:
        raise CliError(EXIT_USAGE, "sweep-g needs a matrix file or --occ")
    mat = _read_matrix(args.input)
    coo = mat if isinstance(mat, CooMatrix) else dense_to_coo(mat)
    return OccProfile.from_matrix(coo, args.group_dim, args.literal_n), coo


def _time_groupcoo(coo: CooMatrix, g: int, cols: int, rng, group_dim: int = 0) -> float:
    gc = coo_to_groupcoo(coo, group_dim, g)
    m, k = coo.shape if group_dim == 0 else coo.shape[::-1]
    tensors = {"C": np.zeros((m, cols)), "B": rng.standard_normal((k, cols)),
               **emit_operands(gc, "A")}
    plan = lower_to_plan(parse(corpus.CORPUS["groupcoo_spmm"].expression))
    t0 = time.perf_counter()
    execute_plan(plan, tensors)
    return (time.perf_counter() - t0) * 1e3


def cmd_sweep_g(args) -> int:
    prof, coo = _profile(args)
    if args.gs:
        gs = [int(x) for x in args.gs.split(",")]
    else:
        gs = list(range(1, max(prof.max_occ, 1) + 1))
    if args.measure and coo is None:
        raise CliError(EXIT_USAGE, "--measure needs a matrix input")
    rng = np.random.default_rng(args.seed)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["g", "F", "F_relaxed", "nbytes", "measured_ms"])
    for g in gs:
        if g < 1:
            raise CliError(EXIT_USAGE, f"group sizes must be >= 1, got {g}")
        groups = int((-(-prof.occ // g)).sum())
        nbytes = 8 * groups + 2 * 8 * groups * g
        measured = ""
        if args.measure:
            measured = f"{_time_groupcoo(coo, g, args.cols, rng, args.group_dim):.3f}"
        F_rel = cost_relaxed(prof, g) if prof.S else 0.0
        writer.writerow([g, cost_exact(prof, g), f"{F_rel:.6g}", nbytes, measured])
    if args.verbose:
        print(f"# g*={g_star(prof):.6g} candidates={candidates(prof)} "
              f"chosen={select(prof, brute=False).chosen}", file=sys.stderr)
    return EXIT_OK


def cmd_dump_plan(args) -> int:
    text, _ = _expression(args)
    print(lower_to_plan(parse(text)).to_text(), end="")
    return EXIT_OK


def cmd_dump_kernel(args) -> int:
    text, entry = _expression(args)
    stmt = parse(text)
    ext = _int_map(args.extent, "--extent")
    shapes = {k: _dims(v, "--shape") for k, v in _pairs(args.shape, "--shape").items()}
    if entry is not None and not ext and not shapes:
        shapes = dict(entry.shapes)
    if shapes:
        from .expr import infer_extents
        stmt = infer_extents(stmt, shapes)
    else:
        stmt = with_extents(stmt, {v: ext.get(v, args.default_extent) for v in stmt.var_order()})
    mode = args.mode
    if mode not in ("fused-eager", "fused-lazy", "fused-flat"):
        raise CliError(EXIT_USAGE, "dump-kernel modes: fused-eager, fused-lazy, fused-flat")
    k = compile_kernel(stmt, _blocks(args.block),
                       "eager" if mode == "fused-eager" else "lazy", dot=mode != "fused-flat")
    print(emit_text(k), end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    stmt, b = _prepare(args)
    blocks = _blocks(args.block)
    modes = [m.strip() for m in args.modes.split(",")]
    for m in modes:
        if m not in MODES:
            raise CliError(EXIT_USAGE, f"unknown mode {m!r}")
    if args.repeats < 1:
        raise CliError(EXIT_USAGE, "--repeats must be >= 1")
    ref = oracle_einsum(stmt, b.tensors) if args.verify else None
    report = {"schema_version": METRICS_SCHEMA_VERSION, "expression": str(stmt),
              "repeats": args.repeats, "modes": {}}
    failed = False
    for m in modes:
        times, digests = [], []
        res = None
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            res, _, _, _ = _execute(stmt, b.tensors, m, blocks, args.threads)
            times.append((time.perf_counter() - t0) * 1e3)
            digests.append(_digest(res))
        row = {"median_ms": round(statistics.median(times), 3), "min_ms": round(min(times), 3),
               "resultSha256": digests[0], "deterministic": len(set(digests)) == 1}
        if ref is not None:
            row["verified"], row["maxAbsError"] = _compare(res, ref)
            failed |= not row["verified"]
        report["modes"][m] = row
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_VERIFY if failed else EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_expr(p):
    p.add_argument("expr", nargs="?", help="indirect Einsum, e.g. 'C[AM[p],n] += AV[p] * B[AK[p],n]'")
    p.add_argument("--expr-file", help="read the expression from a file")
    p.add_argument("--corpus", help="use a named corpus expression with its documented shapes")
    p.add_argument("--spec", help="JSON corpus entry file with expression and shapes")


def _add_inputs(p):
    p.add_argument("--bind", action="append", metavar="NAME=PATH",
                   help="bind a tensor file (.tns), MatrixMarket file (.mtx) or format directory")
    p.add_argument("--format", action="append", metavar="NAME=SPEC",
                   help="encode matrix NAME as coo, ell, groupcoo:G, groupcoo:auto, "
                        "blockgroupcoo:BM,BK,G or auto; emits NAMEV, NAMEM, NAMEK")
    p.add_argument("--sparse", action="append", metavar="NAME=SPEC",
                   help="synthesize matrix NAME: random:MxK:DENSITY or block:MxK:BMxBK:DENSITY")
    p.add_argument("--shape", action="append", metavar="NAME=D1xD2",
                   help="shape for a synthesized tensor")
    p.add_argument("--synthesize", action="store_true", help="fill unbound inputs with random data")
    p.add_argument("--group-dim", type=int, default=0, choices=(0, 1))
    p.add_argument("--dtype", choices=("int64", "real64"), default="real64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block", action="append", metavar="VAR=SIZE", help="tile size (power of two)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--verify", action="store_true", help="check the result against the oracle")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ieinsum", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate an expression and print metrics JSON")
    _add_expr(p)
    _add_inputs(p)
    p.add_argument("--mode", choices=MODES, default="plan")
    p.add_argument("--out", help="write the result tensor here")
    p.add_argument("--metrics", help="write metrics JSON here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convert", help="convert a matrix into a stored sparse format")
    p.add_argument("input", help=".mtx or .tns matrix")
    p.add_argument("format", help="coo, ell, groupcoo:G, groupcoo:auto, blockgroupcoo:BM,BK,G, auto")
    p.add_argument("out_dir")
    p.add_argument("--group-dim", type=int, default=0, choices=(0, 1))
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("sweep-g", help="cost-model table over group sizes as CSV")
    p.add_argument("input", nargs="?", help=".mtx or .tns matrix")
    p.add_argument("--occ", help="comma-separated occupancy profile instead of a matrix")
    p.add_argument("--gs", help="comma-separated group sizes (default 1..max occ)")
    p.add_argument("--measure", action="store_true", help="time the GroupCOO SpMM plan per g")
    p.add_argument("--cols", type=int, default=16, help="dense columns for --measure")
    p.add_argument("--group-dim", type=int, default=0, choices=(0, 1))
    p.add_argument("--literal-n", action="store_true", help="count empty rows in n")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep_g)

    p = sub.add_parser("dump-plan", help="print the gather/einsum/scatter plan")
    _add_expr(p)
    p.set_defaults(func=cmd_dump_plan)

    p = sub.add_parser("dump-kernel", help="print the tiled kernel text")
    _add_expr(p)
    p.add_argument("--mode", default="fused-lazy", choices=("fused-eager", "fused-lazy", "fused-flat"))
    p.add_argument("--extent", action="append", metavar="VAR=N")
    p.add_argument("--default-extent", type=int, default=64)
    p.add_argument("--shape", action="append", metavar="NAME=D1xD2")
    p.add_argument("--block", action="append", metavar="VAR=SIZE")
    p.set_defaults(func=cmd_dump_kernel)

    p = sub.add_parser("bench", help="time several modes on the same inputs")
    _add_expr(p)
    _add_inputs(p)
    p.add_argument("--modes", default="plan,fused-lazy")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ExprSyntaxError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except IndexRangeError as e:
        print(f"index error: {e}", file=sys.stderr)
        return EXIT_INDEX
    except KeyError as e:
        print(f"unbound: {e.args[0]}", file=sys.stderr)
        return EXIT_UNBOUND
    except (ExtentError, BlockShapeError) as e:
        print(f"shape error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except (OSError, TensorFormatError, MatrixMarketError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
