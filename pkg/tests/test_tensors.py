import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from ieinsum.formats import CooMatrix, coo_to_dense
from ieinsum.tensors import (MatrixMarketError, TensorFormatError, load_matrix_market, load_tensor,
                             save_tensor, write_matrix_market)


def _write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_array_file(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix array real general\n2 2\n1\n3\n2\n4\n")
    t = load_matrix_market(p)
    np.testing.assert_array_equal(t, [[1, 2], [3, 4]])
    assert t.shape == (2, 2)


def test_coordinate_file(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n% comment\n"
                         "2 2 2\n1 2 5.0\n2 1 7.0\n")
    c = load_matrix_market(p)
    assert isinstance(c, CooMatrix)
    np.testing.assert_array_equal(c.rows, [0, 1])
    np.testing.assert_array_equal(c.cols, [1, 0])
    np.testing.assert_array_equal(c.vals, [5.0, 7.0])


def test_duplicates_kept_and_summed(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2.0\n1 1 3.0\n")
    c = load_matrix_market(p)
    assert c.nnz == 2
    assert coo_to_dense(c)[0, 0] == 5.0


def test_symmetric_expands(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate integer symmetric\n3 3 3\n"
                         "1 1 4\n3 1 2\n3 2 -1\n")
    d = coo_to_dense(load_matrix_market(p))
    np.testing.assert_array_equal(d, d.T)
    assert d[0, 2] == 2 and d[1, 2] == -1 and d.dtype == np.int64


def test_skew_symmetric(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 3\n")
    d = coo_to_dense(load_matrix_market(p))
    np.testing.assert_array_equal(d, [[0, -3], [3, 0]])


def test_pattern(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n")
    np.testing.assert_array_equal(coo_to_dense(load_matrix_market(p)), [[0, 0, 1], [1, 0, 0]])


@pytest.mark.parametrize("text", [
    "%%MatrixMarket matrix coordinate real\n2 2 1\n1 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
    "%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1 0\n",
    "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n",
    "not a header\n",
    "",
])
def test_malformed_matrix_market(tmp_path, text):
    with pytest.raises(MatrixMarketError):
        load_matrix_market(_write(tmp_path, text))


def test_matrix_market_writer_round_trip(tmp_path, small_matrix):
    write_matrix_market(tmp_path / "a.mtx", small_matrix)
    np.testing.assert_array_equal(load_matrix_market(tmp_path / "a.mtx"), small_matrix)
    from ieinsum.formats import dense_to_coo
    write_matrix_market(tmp_path / "c.mtx", dense_to_coo(small_matrix))
    np.testing.assert_array_equal(coo_to_dense(load_matrix_market(tmp_path / "c.mtx")), small_matrix)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float64, np.int64]),
                  hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5)))
def test_tensor_round_trip_bitwise(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("t") / "x.tns"
    save_tensor(p, arr)
    back = load_tensor(p)
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_int_round_trip(tmp_path):
    a = np.arange(8, dtype=np.int64).reshape(4, 2)
    save_tensor(tmp_path / "a.tns", a)
    np.testing.assert_array_equal(load_tensor(tmp_path / "a.tns"), a)


def test_rank_zero_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_tensor(tmp_path / "z.tns", np.float64(1.0))


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "a.tns"
    save_tensor(p, np.ones((3, 3)))
    raw = p.read_bytes()
    (tmp_path / "bad.tns").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(TensorFormatError, match="magic"):
        load_tensor(tmp_path / "bad.tns")
    (tmp_path / "short.tns").write_bytes(raw[:-5])
    with pytest.raises(TensorFormatError, match="truncated"):
        load_tensor(tmp_path / "short.tns")
    (tmp_path / "hdr.tns").write_bytes(raw[:10])
    with pytest.raises(TensorFormatError):
        load_tensor(tmp_path / "hdr.tns")


def test_complex_rejected(tmp_path):
    with pytest.raises(TypeError):
        save_tensor(tmp_path / "c.tns", np.ones(2, dtype=complex))
