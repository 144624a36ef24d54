"""scikit-learn style wrappers for group-size selection and format encoding.

Inputs may be dense 2-D arrays or :class:`~ieinsum.formats.CooMatrix`.
"""

from __future__ import annotations

from typing import Callable, Optional, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .formats import (BlockGroupCooMatrix, CooMatrix, GroupCooMatrix, blockgroupcoo_to_dense,
                      coo_to_dense, coo_to_groupcoo, dense_to_blockgroupcoo, dense_to_coo,
                      groupcoo_to_dense)
from .tuner import OccProfile, select

__all__ = ["GroupSizeSelector", "GroupCooEncoder", "BlockGroupCooEncoder"]

MatrixLike = Union[np.ndarray, CooMatrix]


def _as_coo(X) -> CooMatrix:
    return X if isinstance(X, CooMatrix) else dense_to_coo(X)


class GroupSizeSelector(BaseEstimator):
    """Choose a GroupCOO group size from the occupancy profile of a matrix.

    Parameters
    ----------
    group_dim : int
        Dimension to group along (0 = rows).
    literal_n : bool
        Count empty coordinates in ``n`` as well.
    evaluator : callable, optional
        ``evaluator(g) -> score`` replacing the exact cost, e.g. a timing.
    """

    def __init__(self, group_dim: int = 0, literal_n: bool = False,
                 evaluator: Optional[Callable[[int], float]] = None):
        self.group_dim = group_dim
        self.literal_n = literal_n
        self.evaluator = evaluator

    def fit(self, X: MatrixLike, y=None):
        prof = OccProfile.from_matrix(_as_coo(X), self.group_dim, self.literal_n)
        self.report_ = select(prof, self.evaluator)
        self.group_size_ = self.report_.chosen
        self.g_star_ = self.report_.g_star
        self.candidates_ = [g for g, _ in self.report_.candidates]
        return self


class GroupCooEncoder(TransformerMixin, BaseEstimator):
    """Encode matrices as GroupCOO.  ``g="auto"`` defers to :class:`GroupSizeSelector`."""

    def __init__(self, g: Union[int, str] = 1, group_dim: int = 0):
        self.g = g
        self.group_dim = group_dim

    def fit(self, X: MatrixLike, y=None):
        if self.g == "auto":
            self.group_size_ = GroupSizeSelector(self.group_dim).fit(X).group_size_
        else:
            if int(self.g) < 1:
                raise ValueError(f"group size must be >= 1, got {self.g}")
            self.group_size_ = int(self.g)
        self.shape_ = _as_coo(X).shape
        return self

    def transform(self, X: MatrixLike) -> GroupCooMatrix:
        check_is_fitted(self, "group_size_")
        return coo_to_groupcoo(_as_coo(X), self.group_dim, self.group_size_)

    def inverse_transform(self, X: GroupCooMatrix) -> np.ndarray:
        return groupcoo_to_dense(X)


class BlockGroupCooEncoder(TransformerMixin, BaseEstimator):
    """Encode dense matrices as BlockGroupCOO with ``block = (bM, bK)``."""

    def __init__(self, block: Tuple[int, int] = (4, 4), g: int = 1):
        self.block = block
        self.g = g

    def fit(self, X, y=None):
        arr = coo_to_dense(X) if isinstance(X, CooMatrix) else np.asarray(X)
        if arr.ndim != 2:
            raise ValueError("BlockGroupCooEncoder expects a 2-D matrix")
        bm, bk = (int(b) for b in self.block)
        if bm < 1 or bk < 1:
            raise ValueError(f"block sizes must be >= 1, got {self.block}")
        self.shape_ = arr.shape
        return self

    def transform(self, X) -> BlockGroupCooMatrix:
        check_is_fitted(self, "shape_")
        if isinstance(X, CooMatrix):
            X = coo_to_dense(X)
        return dense_to_blockgroupcoo(X, tuple(self.block), self.g)

    def inverse_transform(self, X: BlockGroupCooMatrix) -> np.ndarray:
        return blockgroupcoo_to_dense(X)
