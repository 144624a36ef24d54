import dataclasses
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ieinsum import evaluate
from ieinsum.corpus import CORPUS, EXTRAS, get, instance_for_shapes, random_instance
from ieinsum.expr import infer_extents, parse
from ieinsum.kernel import (BlockShapeError, check_block_shapes, compile_kernel, count_layout_ops,
                            detect_dot, emit_text, format_nest, fuse, interpret_kernel, tile)
from ieinsum.kernel.tiled import DotAcc, Loop
from ieinsum.plan import AccessCounters, bind_extents, execute_plan, lower_to_plan, oracle_einsum

from conftest import assert_close

GOLDEN = Path(__file__).parent / "golden"
DOT_FIRES = {"blockgroupcoo_spmm", "grouped_sparse_conv", "grouped_tensor_product", "matmul",
             "fused_gather_matmul_scatter"}
ALL = {**CORPUS, **EXTRAS}
BLOCKS16 = {"y": 16, "x": 16, "r": 16}


def _compiled(name, mode="lazy", blocks=None, dot=True):
    return compile_kernel(get(name).stmt(), blocks, mode, dot)


def test_fuse_gives_single_nest():
    nest = fuse(lower_to_plan(parse("C[D[y],x] += A[y,E[r]] * B[r,x]")),
                get("fused_gather_matmul_scatter").stmt())
    assert nest.pointwise == ("y", "x") and nest.reduction == ("r",)
    assert len(nest.stores) == 1
    assert "for" in format_nest(nest)


@pytest.mark.parametrize("name", sorted(ALL))
def test_dot_detection(name):
    nest = detect_dot(fuse(get(name).stmt()))
    assert (nest.dot is not None) == (name in DOT_FIRES)


def test_dot_roles_blockgroupcoo():
    d = detect_dot(fuse(get("blockgroupcoo_spmm").stmt())).dot
    assert (d.y, d.x, d.r) == ("bm", "n", "bk")
    assert d.serial == ("q",) and d.batch == ("p",)


def test_dot_roles_fused_example():
    d = detect_dot(fuse(get("fused_gather_matmul_scatter").stmt())).dot
    assert (d.y, d.x, d.r, d.batch, d.serial) == ("y", "x", "r", (), ())


@pytest.mark.parametrize("name", sorted(DOT_FIRES))
def test_layout_ops_eager_vs_lazy(name):
    assert count_layout_ops(_compiled(name, "eager")) == (2, 1)
    assert count_layout_ops(_compiled(name, "lazy")) == (0, 0)


@pytest.mark.parametrize("mode", ["eager", "lazy"])
def test_flat_kernels_have_no_layout_ops(mode):
    assert count_layout_ops(_compiled("elementwise", mode)) == (0, 0)
    assert count_layout_ops(_compiled("coo_spmm", mode)) == (0, 0)


@pytest.mark.parametrize("name", sorted(ALL))
@pytest.mark.parametrize("mode", ["eager", "lazy"])
@pytest.mark.parametrize("dot", [True, False])
def test_block_shapes_check(name, mode, dot):
    k = _compiled(name, mode, dot=dot)
    check_block_shapes(k)
    assert k.name.startswith("dot" if k.uses_dot else "flat")


def _swap_dot(body):
    out = []
    for s in body:
        if isinstance(s, DotAcc):
            s = DotAcc(s.acc, s.b, s.a)
        elif isinstance(s, Loop):
            s = dataclasses.replace(s, body=tuple(_swap_dot(s.body)))
        out.append(s)
    return out


def test_block_shapes_rejects_bad_dot():
    k = _compiled("matmul", "lazy", {"y": 16, "x": 32, "r": 8})
    bad = dataclasses.replace(k, body=tuple(_swap_dot(k.body)))
    with pytest.raises(BlockShapeError):
        check_block_shapes(bad)


@pytest.mark.parametrize("blocks", [{"y": 3}, {"r": 0}, {"P": 100}])
def test_non_power_of_two_blocks_rejected(blocks):
    with pytest.raises(ValueError):
        _compiled("matmul" if "P" not in blocks else "elementwise", "lazy", blocks, dot="P" not in blocks)


def test_tile_needs_extents():
    with pytest.raises(ValueError):
        tile(fuse(parse("C[y,x] = A[y,r] * B[r,x]")))


def test_tile_rejects_unknown_mode():
    with pytest.raises(ValueError):
        tile(fuse(get("matmul").stmt()), mode="greedy")


def test_grid_and_masking():
    stmt = "C[y,x] = A[y,r] * B[r,x]"
    rng = np.random.default_rng(3)
    t = dict(A=rng.integers(-3, 4, (6, 6)), B=rng.integers(-3, 4, (6, 6)),
             C=np.zeros((6, 6), dtype=np.int64))
    k = compile_kernel(bind_extents(parse(stmt), t), {"y": 4, "x": 4, "r": 4}, "lazy")
    assert k.grid == (("x", 2), ("y", 2)) and k.n_programs == 4
    np.testing.assert_array_equal(interpret_kernel(k, t), t["A"] @ t["B"])


def test_single_program_grid():
    k = _compiled("fused_gather_matmul_scatter", "lazy")
    assert k.n_programs == 1


def test_batch_vars_on_later_grid_axes():
    k = _compiled("blockgroupcoo_spmm", "lazy")
    assert [label for label, _ in k.grid][:2] == ["n", "bm"] and k.grid[2][0] == "p"


def test_extents_must_match_kernel():
    k = _compiled("matmul", "lazy")
    with pytest.raises(ValueError):
        interpret_kernel(k, dict(A=np.ones((8, 8)), B=np.ones((8, 8)), C=np.zeros((8, 8))))


def test_threads_identical():
    stmt = get("coo_spmm").stmt()
    rng = np.random.default_rng(4)
    t = instance_for_shapes(stmt, get("coo_spmm").shapes, rng, "real64")
    k = compile_kernel(stmt, {"P": 4, "R": 1}, "lazy")
    a = interpret_kernel(k, t)
    b = interpret_kernel(k, t, threads=4)
    assert a.tobytes() == b.tobytes()


def test_interpreter_leaves_output_untouched():
    t = random_instance(parse(CORPUS["coo_spmm"].expression), np.random.default_rng(5), 5)
    before = t["C"].copy()
    evaluate(CORPUS["coo_spmm"].expression, t, mode="fused-lazy")
    np.testing.assert_array_equal(t["C"], before)


def test_fused_counters_coo():
    entry = get("coo_spmm")
    t = instance_for_shapes(entry.stmt(), entry.shapes, np.random.default_rng(6))
    _, c = evaluate(entry.expression, t, mode="fused-lazy")
    nnz, n = t["AV"].shape[0], t["B"].shape[1]
    assert c.atomic_updates == nnz * n
    assert c.scatters == nnz * n and c.gathers == nnz * n


def test_dense_matmul_has_no_atomics():
    entry = get("matmul")
    rng = np.random.default_rng(7)
    t = dict(A=rng.random((64, 64)), B=rng.random((64, 64)), C=np.zeros((64, 64)))
    _, c = evaluate(entry.expression, t, mode="fused-eager")
    assert c == AccessCounters()


def test_index_out_of_range_in_kernel():
    from ieinsum.validation import IndexRangeError
    t = dict(AV=np.ones(2), AM=np.array([0, 1]), AK=np.array([0, 7]), B=np.ones((3, 2)),
             C=np.zeros((2, 2)))
    with pytest.raises(IndexRangeError):
        evaluate("C[AM[p],n] += AV[p] * B[AK[p],n]", t, mode="fused-lazy")


@pytest.mark.parametrize("mode", ["fused-eager", "fused-lazy", "fused-flat"])
@pytest.mark.parametrize("name", sorted(ALL))
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), real=st.booleans(),
       blk=st.sampled_from([1, 2, 4, 8]))
def test_fused_matches_oracle(mode, name, seed, real, blk):
    stmt = parse(ALL[name].expression)
    rng = np.random.default_rng(seed)
    t = random_instance(stmt, rng, 6, "real64" if real else "int64")
    blocks = {v: blk for v in stmt.var_order()} | {"P": blk * 2, "R": blk}
    res, _ = evaluate(stmt, t, mode=mode, block_sizes=blocks)
    assert_close(res, oracle_einsum(stmt, t))


@pytest.mark.parametrize("mode", ["fused-eager", "fused-lazy", "fused-flat"])
def test_fused_counters_match_for_accumulate_and_assign(mode):
    stmt = parse("C[AI[p]] = AV[p] * B[AI[p]]")
    t = dict(AI=np.array([1, 1, 3]), AV=np.array([1, 2, 3]), B=np.arange(5), C=np.full(5, 9))
    res, _ = evaluate(stmt, t, mode=mode)
    np.testing.assert_array_equal(res, [0, 3, 0, 9, 0])


GOLDEN_CASES = {
    "matmul_lazy.txt": ("matmul", "lazy", BLOCKS16),
    "matmul_eager.txt": ("matmul", "eager", BLOCKS16),
    "elementwise_lazy.txt": ("elementwise", "lazy", None),
    "fused_lazy.txt": ("fused_gather_matmul_scatter", "lazy", None),
    "fused_eager.txt": ("fused_gather_matmul_scatter", "eager", None),
}


@pytest.mark.parametrize("fname", sorted(GOLDEN_CASES))
def test_emit_golden(fname):
    name, mode, blocks = GOLDEN_CASES[fname]
    text = emit_text(_compiled(name, mode, blocks))
    assert text == (GOLDEN / fname).read_text()
    assert text == emit_text(_compiled(name, mode, blocks))


def test_plan_golden():
    text = lower_to_plan(parse(get("fused_gather_matmul_scatter").expression)).to_text()
    assert text == (GOLDEN / "fused_plan.txt").read_text()


def test_lazy_listing_uses_expansions():
    text = (GOLDEN / "fused_lazy.txt").read_text()
    assert "E_r[None, :]" in text and "r[:, None]" in text
    assert "view(" not in text and "trans(" not in text
