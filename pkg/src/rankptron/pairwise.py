"""Pairwise hinge surrogate: the single worst-violated pair.

``phi(s, R) = max_{i, j: R_i > R_j} (1 + s_j - s_i)_+``. It ignores
document positions, so unlike the listwise surrogate it does not adapt to
the evaluation measure.
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import kernels


class PairwiseLoss(NamedTuple):
    value: float
    witness: Optional[Tuple[int, int]]


def phi_c_loss(s, R) -> PairwiseLoss:
    """Surrogate value and the lexicographically smallest maximizing pair ``(i, j)``."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.int64)
    if s.shape != R.shape:
        raise ValueError("scores and grades differ in length")
    value, i, j = kernels.pairwise_witness(s, R)
    if i < 0:
        return PairwiseLoss(0.0, None)
    return PairwiseLoss(float(value), (int(i), int(j)))


def phi_c_subgradient(X, s, R) -> np.ndarray:
    """``X.T @ (e_j - e_i)`` for the witness pair; zero when the loss is zero."""
    X = np.asarray(X, dtype=np.float64)
    loss = phi_c_loss(s, R)
    if loss.witness is None:
        return np.zeros(X.shape[1])
    i, j = loss.witness
    return X[j] - X[i]
