import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ieinsum.corpus import CORPUS, random_instance
from ieinsum.expr import parse
from ieinsum.formats import coo_to_groupcoo, dense_to_coo, emit_operands
from ieinsum.plan import (DenseEinsum, Gather, ScatterAdd, count_accesses_model, execute_plan,
                          lower_to_plan, oracle_einsum)
from ieinsum.tuner import cost_exact, profile_from_occ
from ieinsum.validation import IndexRangeError

from conftest import assert_close

COO = "C[AM[p],n] += AV[p] * B[AK[p],n]"
GROUP = "C[AM[p],n] += AV[p,q] * B[AK[p,q],n]"


def test_lower_fused_example():
    plan = lower_to_plan(parse("C[D[y],x] += A[y,E[r]] * B[r,x]"))
    assert [type(n) for n in plan.nodes] == [Gather, DenseEinsum, ScatterAdd]
    g, e, s = plan.nodes
    assert g.src == "A" and g.indirect_dims[0][0] == 1 and g.indirect_dims[0][1].tensor == "E"
    assert e.spec() == "yr,rx->yx"
    assert s.dst == "C" and s.indirect_dims[0][0] == 0 and s.indirect_dims[0][1].tensor == "D"


def test_lower_direct_is_single_einsum():
    plan = lower_to_plan(parse("C[y,x] = A[y,r] * B[r,x]"))
    assert len(plan) == 1 and isinstance(plan.nodes[0], DenseEinsum)


def test_lower_coo():
    plan = lower_to_plan(parse(COO))
    assert [type(n) for n in plan.nodes] == [Gather, DenseEinsum, ScatterAdd]
    assert plan.nodes[0].src == "B" and plan.einsum.spec() == "p,pn->pn"


def test_repeated_gather_is_shared():
    plan = lower_to_plan(parse("C[AI[p]] = AV[p] * B[AI[p]] * B[AI[p]]"))
    assert sum(isinstance(n, Gather) for n in plan.nodes) == 1


def test_execute_hand_example():
    B = np.array([[1, 2], [3, 4]])
    res, _ = execute_plan(lower_to_plan(parse(COO)),
                          dict(AV=np.array([2]), AM=np.array([0]), AK=np.array([1]), B=B,
                               C=np.zeros((2, 2), dtype=np.int64)))
    np.testing.assert_array_equal(res, [[6, 8], [0, 0]])


def test_collisions_are_summed():
    B = np.array([[1, 2], [3, 4]])
    res, c = execute_plan(lower_to_plan(parse(COO)),
                          dict(AV=np.array([1, 1]), AM=np.array([0, 0]), AK=np.array([0, 1]), B=B,
                               C=np.zeros((2, 2), dtype=np.int64)))
    np.testing.assert_array_equal(res[0], [4, 6])
    assert c.as_dict() == {"gathers": 2, "scatters": 2, "atomicUpdates": 4}


def test_out_of_range_index():
    with pytest.raises(IndexRangeError) as e:
        execute_plan(lower_to_plan(parse(COO)),
                     dict(AV=np.array([1.0]), AM=np.array([0]), AK=np.array([5]),
                          B=np.ones((2, 2)), C=np.zeros((2, 2))))
    assert e.value.tensor == "AK" and e.value.value == 5 and e.value.bound == 2
    assert e.value.position == (0,)
    with pytest.raises(IndexRangeError):
        oracle_einsum(parse(COO), dict(AV=np.array([1.0]), AM=np.array([0]), AK=np.array([5]),
                                       B=np.ones((2, 2)), C=np.zeros((2, 2))))


def test_assign_zero_inits_and_accumulate_adds():
    A, B = np.array([1, 2]), np.array([3, 4])
    C = np.array([10, 10])
    res, _ = execute_plan(lower_to_plan(parse("C[i] = A[i] * B[i]")), dict(A=A, B=B, C=C))
    np.testing.assert_array_equal(res, [3, 8])
    res, _ = execute_plan(lower_to_plan(parse("C[i] += A[i] * B[i]")), dict(A=A, B=B, C=C))
    np.testing.assert_array_equal(res, [13, 18])
    np.testing.assert_array_equal(C, [10, 10])
    np.testing.assert_array_equal(oracle_einsum(parse("C[i] = A[i] * B[i]"), dict(A=A, B=B, C=C)),
                                  [3, 8])


def test_direct_plan_has_no_indirect_counters():
    rng = np.random.default_rng(0)
    _, c = execute_plan(lower_to_plan(parse("C[y,x] = A[y,r] * B[r,x]")),
                        dict(A=rng.random((3, 4)), B=rng.random((4, 2)), C=np.zeros((3, 2))))
    assert c.gathers == c.scatters == 0


def test_output_only_variable_broadcasts():
    res, _ = execute_plan(lower_to_plan(parse("C[i,j] = A[i]")),
                          dict(A=np.array([1, 2]), C=np.zeros((2, 3), dtype=np.int64)))
    np.testing.assert_array_equal(res, [[1, 1, 1], [2, 2, 2]])


def test_unbound_tensor():
    with pytest.raises(KeyError):
        execute_plan(lower_to_plan(parse(COO)), dict(AV=np.ones(1)))


@pytest.mark.parametrize("g", [1, 2, 3])
def test_groupcoo_small_matrix(small_matrix, g):
    rng = np.random.default_rng(1)
    B = rng.integers(-3, 4, (4, 2))
    gc = coo_to_groupcoo(dense_to_coo(small_matrix), 0, g)
    res, c = execute_plan(lower_to_plan(parse(GROUP)),
                          {**emit_operands(gc), "B": B, "C": np.zeros((4, 2), dtype=np.int64)})
    np.testing.assert_array_equal(res, small_matrix @ B)
    assert c.gathers + c.scatters == cost_exact(profile_from_occ([3, 1, 1, 2]), g)
    m = count_accesses_model(gc, parse(GROUP), n_cols=2)
    assert (m.gathers, m.scatters) == {1: (7, 7), 2: (10, 5), 3: (12, 4)}[g]
    assert m == c


def test_multi_dim_output_indirection():
    stmt = parse("C[AM[p],AK[p]] += AV[p] * B[AK[p],AM[p]]")
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = random_instance(stmt, rng, 5)
        res, _ = execute_plan(lower_to_plan(stmt), t)
        np.testing.assert_array_equal(res, oracle_einsum(stmt, t))


@pytest.mark.parametrize("name", list(CORPUS))
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), real=st.booleans())
def test_plan_matches_oracle(name, seed, real):
    stmt = parse(CORPUS[name].expression)
    t = random_instance(stmt, np.random.default_rng(seed), 5, "real64" if real else "int64")
    res, _ = execute_plan(lower_to_plan(stmt), t)
    assert_close(res, oracle_einsum(stmt, t))


def test_plan_text():
    text = lower_to_plan(parse("C[D[y],x] += A[y,E[r]] * B[r,x]")).to_text()
    assert text.splitlines()[1] == "  0: Atmp[y,r] = Gather(A, dim=1, index=E[r])"
