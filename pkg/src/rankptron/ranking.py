"""Ranking primitives: score sorting, NDCG@k, average precision.

Ranks are 1-based inside the formulas (``discount(1) == 1``) and 0-based
in every array this module returns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_MAX_GRADE = 4


class DegenerateQueryError(ValueError):
    """Raised when a measure is undefined for a query (no relevant documents)."""


@dataclass(frozen=True)
class Query:
    """One ranking instance: an ``(m, d)`` feature matrix and its grades."""

    features: np.ndarray
    grades: np.ndarray
    qid: str = ""
    max_grade: int = field(default=DEFAULT_MAX_GRADE, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        R = np.ascontiguousarray(self.grades, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if R.shape != (X.shape[0],):
            raise ValueError(f"grades length {R.shape} does not match {X.shape[0]} documents")
        if R.size and (R.min() < 0 or R.max() > self.max_grade):
            raise ValueError(f"grades must lie in [0, {self.max_grade}]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "grades", R)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _scores(s) -> np.ndarray:
    s = np.ascontiguousarray(s, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] == 0:
        raise ValueError("score vector must be 1-d and non-empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("score vector contains non-finite values")
    return s


def _grades(R, m: int | None = None) -> np.ndarray:
    R = np.ascontiguousarray(R, dtype=np.int64)
    if R.ndim != 1:
        raise ValueError("relevance vector must be 1-d")
    if m is not None and R.shape[0] != m:
        raise ValueError(f"length mismatch: {R.shape[0]} grades for {m} scores")
    if R.size and R.min() < 0:
        raise ValueError("grades must be non-negative")
    return R


def argsort_desc(s) -> np.ndarray:
    """Rank-to-document permutation sorting ``s`` in descending order.

    Ties go to the lower document index, so the result is deterministic.
    """
    return np.argsort(-_scores(s), kind="stable")


def inverse_permutation(perm) -> np.ndarray:
    """Document-to-rank map for a rank-to-document permutation."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    return inv


def gain(r):
    """Graded gain ``2**r - 1``."""
    return np.exp2(np.asarray(r, dtype=np.float64)) - 1.0


def discount(i):
    """Position discount ``1 / log2(i + 1)`` for 1-based rank ``i``."""
    return 1.0 / np.log2(np.asarray(i, dtype=np.float64) + 1.0)


def binarize(R) -> np.ndarray:
    """Map every non-zero grade to 1."""
    return (np.asarray(R, dtype=np.int64) > 0).astype(np.int64)


def _check_cutoff(k: int | None, m: int) -> int:
    if k is None:
        return m
    k = int(k)
    if not 1 <= k <= m:
        raise ValueError(f"cutoff k={k} outside [1, {m}]")
    return k


def ideal_dcg_at_k(R, k: int | None = None) -> float:
    """Largest achievable DCG@k, attained by sorting grades in decreasing order."""
    R = _grades(R)
    k = _check_cutoff(k, R.shape[0])
    return kernels.dcg_ranked(np.ascontiguousarray(np.sort(R)[::-1]), k)


def brute_force_dcg_max(R, k: int | None = None, max_docs: int = 8) -> float:
    """Maximum DCG@k over all ``m!`` orderings; a test oracle for :func:`ideal_dcg_at_k`."""
    R = [int(r) for r in _grades(R)]
    m = len(R)
    if m > max_docs:
        raise ValueError(f"brute force limited to {max_docs} documents, got {m}")
    k = _check_cutoff(k, m)
    best = 0.0
    for perm in itertools.permutations(range(m)):
        total = 0.0
        for pos in range(k):
            total += (2.0 ** R[perm[pos]] - 1.0) / math.log2(pos + 2)
        best = max(best, total)
    return best


def ndcg_at_k(s, R, k: int | None = None) -> float:
    """NDCG of the ranking induced by ``s``, truncated at ``k`` (default: all).

    A query with no positive grade scores 1.0.
    """
    s = _scores(s)
    R = _grades(R, s.shape[0])
    k = _check_cutoff(k, s.shape[0])
    ideal = kernels.dcg_ranked(np.ascontiguousarray(np.sort(R)[::-1]), k)
    if ideal == 0.0:
        return 1.0
    ranked = np.ascontiguousarray(R[argsort_desc(s)])
    return kernels.dcg_ranked(ranked, k) / ideal


def average_precision(s, R) -> float:
    """Average precision of the ranking induced by ``s`` for binary ``R``.

    Raises
    ------
    DegenerateQueryError
        If ``R`` has no relevant document.
    """
    s = _scores(s)
    R = _grades(R, s.shape[0])
    if R.size and R.max() > 1:
        raise ValueError("average precision needs binary relevance; binarize first")
    if not R.any():
        raise DegenerateQueryError("average precision undefined without relevant documents")
    return kernels.ap_ranked(np.ascontiguousarray(R[argsort_desc(s)]))
