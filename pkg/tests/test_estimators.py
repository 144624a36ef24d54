import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ieinsum.corpus import block_sparse, random_sparse
from ieinsum.estimators import BlockGroupCooEncoder, GroupCooEncoder, GroupSizeSelector
from ieinsum.formats import coo_to_dense, dense_to_coo


def test_selector_example(small_matrix):
    sel = GroupSizeSelector().fit(small_matrix)
    assert sel.group_size_ == 1 and sel.candidates_ == [1, 2]
    assert sel.g_star_ == pytest.approx(np.sqrt(7 / 4))
    assert sel.get_params() == {"group_dim": 0, "literal_n": False, "evaluator": None}


def test_selector_clone_and_evaluator(small_matrix):
    sel = clone(GroupSizeSelector(evaluator=lambda g: -g))
    assert sel.fit(dense_to_coo(small_matrix)).group_size_ == 2


def test_encoder_auto_and_roundtrip(small_matrix):
    enc = GroupCooEncoder(g="auto")
    gc = enc.fit_transform(small_matrix)
    assert enc.group_size_ == 1 and gc.g == 1
    np.testing.assert_array_equal(enc.inverse_transform(gc), small_matrix)


@pytest.mark.parametrize("g", [1, 2, 3, 5])
@pytest.mark.parametrize("dim", [0, 1])
def test_encoder_roundtrip_random(g, dim):
    coo = random_sparse(9, 7, 0.3, np.random.default_rng(g + 10 * dim))
    enc = GroupCooEncoder(g=g, group_dim=dim).fit(coo)
    np.testing.assert_array_equal(enc.inverse_transform(enc.transform(coo)), coo_to_dense(coo))


def test_encoder_not_fitted(small_matrix):
    with pytest.raises(NotFittedError):
        GroupCooEncoder().transform(small_matrix)
    with pytest.raises(NotFittedError):
        BlockGroupCooEncoder().transform(small_matrix)


def test_encoder_bad_g(small_matrix):
    with pytest.raises(ValueError):
        GroupCooEncoder(g=0).fit(small_matrix)


def test_block_encoder_roundtrip():
    coo = block_sparse(16, 16, (4, 4), 0.4, np.random.default_rng(2))
    enc = BlockGroupCooEncoder(block=(4, 4), g=2)
    bg = enc.fit_transform(coo)
    np.testing.assert_array_equal(enc.inverse_transform(bg), coo_to_dense(coo))
    assert enc.get_params() == {"block": (4, 4), "g": 2}


def test_block_encoder_validation():
    with pytest.raises(ValueError):
        BlockGroupCooEncoder().fit(np.ones(4))
    with pytest.raises(ValueError):
        BlockGroupCooEncoder(block=(0, 2)).fit(np.ones((4, 4)))
