import pytest
from hypothesis import given, strategies as st

from ieinsum.corpus import CORPUS, EXTRAS
from ieinsum.expr import (Direct, ExprSyntaxError, ExtentError, Indirect, NestedIndirectionError,
                          classify_vars, infer_extents, parse, with_extents)

COO = "C[AM[p],n] += AV[p] * B[AK[p],n]"


def test_parse_coo_spmm():
    s = parse(COO)
    assert s.accumulate
    assert s.output.tensor == "C"
    assert s.output.indices == (Indirect("AM", ("p",)), Direct("n"))
    assert [a.tensor for a in s.inputs] == ["AV", "B"]
    assert s.inputs[1].indices == (Indirect("AK", ("p",)), Direct("n"))
    assert s.extents == ()


def test_parse_elementwise_assign():
    s = parse("C[i] = A[i] * B[i]")
    assert not s.accumulate
    assert not any(a.is_indirect for a in (s.output,) + s.inputs)


def test_parse_three_factors():
    s = parse("Out[MAPX[p,q],m] += MAPV[p,q] * In[MAPY[p,q],c] * Weight[MAPZ[p],c,m]")
    assert len(s.inputs) == 3
    assert s.index_tensors() == ("MAPX", "MAPY", "MAPZ")


def test_whitespace_insignificant():
    assert parse("C[ AM[ p ] ,n]+=AV[p]*B[AK[p],n]") == parse(COO)


@pytest.mark.parametrize("text, pos", [
    ("C[i] = A[i", 10),
    ("C[i] = A[i] B[i]", 12),
    ("C[i] == A[i]", 6),
    ("C[] = A[i]", 2),
    ("C[i] = A[i] * ", 14),
    ("C[i] = 3 * A[i]", 7),
    ("C[i] = A[i] $ B[i]", 12),
])
def test_syntax_error_positions(text, pos):
    with pytest.raises(ExprSyntaxError) as e:
        parse(text)
    assert e.value.pos == pos


def test_nested_indirection_rejected():
    with pytest.raises(NestedIndirectionError):
        parse("C[A[B[p]]] += V[p]")


@pytest.mark.parametrize("text", ["C[i] *= A[i]", "C[i] -= A[i]", "C[i] max= A[i]",
                                  "C[i] = A[i] + B[i]", "C[i] = A[i] / B[i]"])
def test_non_sum_operators_rejected(text):
    with pytest.raises(ExprSyntaxError):
        parse(text)


def test_output_may_not_be_read():
    with pytest.raises(ExprSyntaxError):
        parse("C[i] += C[i] * A[i]")


def test_infer_extents_coo():
    s = infer_extents(parse(COO), {"AV": (7,), "AM": (7,), "AK": (7,), "B": (4, 2), "C": (4, 2)})
    assert dict(s.extents) == {"p": 7, "n": 2}


def test_infer_extents_conflict():
    with pytest.raises(ExtentError, match="extent conflict for p"):
        infer_extents(parse(COO), {"AV": (7,), "AM": (6,), "AK": (7,), "B": (4, 2), "C": (4, 2)})


def test_infer_extents_groupcoo():
    s = infer_extents(parse("C[AM[p],n] += AV[p,q] * B[AK[p,q],n]"),
                      {"AV": (5, 2), "AM": (5,), "AK": (5, 2), "B": (4, 2), "C": (4, 2)})
    assert dict(s.extents) == {"p": 5, "n": 2, "q": 2}


def test_infer_extents_rank_mismatch():
    with pytest.raises(ExtentError, match="rank mismatch"):
        infer_extents(parse("C[i] = A[i,j]"), {"C": (3,), "A": (3,)})


def test_infer_extents_missing_shape():
    with pytest.raises(ExtentError):
        infer_extents(parse(COO), {"AV": (7,)})


def test_with_extents():
    s = with_extents(parse("C[y,x] = A[y,r] * B[r,x]"), {"y": 2, "x": 3, "r": 4})
    assert s.extent("r") == 4 and s.has_extents
    with pytest.raises(ExtentError):
        with_extents(parse("C[y,x] = A[y,r] * B[r,x]"), {"y": 2})


@pytest.mark.parametrize("text, pw, red", [
    (COO, ["p", "n"], []),
    ("C[y,x] = A[y,r] * B[r,x]", ["y", "x"], ["r"]),
    ("C[i] = A[i] * B[i]", ["i"], []),
    ("C[AM[p],n] += AV[p,q] * B[AK[p,q],n]", ["p", "n"], ["q"]),
])
def test_classify_vars(text, pw, red):
    assert classify_vars(parse(text)) == (pw, red)


@pytest.mark.parametrize("entry", list(CORPUS.values()) + list(EXTRAS.values()),
                         ids=lambda e: e.name)
def test_corpus_parses_with_documented_shapes(entry):
    s = entry.stmt()
    assert s.has_extents
    assert str(parse(str(s))) == str(s)
    pw, red = classify_vars(s)
    assert set(pw) | set(red) == set(s.var_order()) and not set(pw) & set(red)


# -- round trip property ---------------------------------------------------

_names = st.sampled_from(["A", "B", "Cx", "AM", "AK", "T_1"])
_vars = st.sampled_from(["p", "q", "n", "i", "bm"])
_index = st.one_of(_vars.map(Direct),
                   st.builds(lambda t, a: Indirect(t, tuple(a)), st.sampled_from(["I", "J", "K2"]),
                             st.lists(_vars, min_size=1, max_size=2)))


@st.composite
def _stmts(draw):
    def access(name):
        return f"{name}[{','.join(str(ix) for ix in draw(st.lists(_index, min_size=1, max_size=3)))}]"
    n = draw(st.integers(1, 3))
    inputs = " * ".join(access(draw(_names)) for _ in range(n))
    op = draw(st.sampled_from(["=", "+="]))
    return f"{access('OUT')} {op} {inputs}"


@given(_stmts())
def test_pretty_print_round_trip(text):
    s = parse(text)
    assert parse(str(s)) == s
    assert str(parse(str(s))) == str(s)
