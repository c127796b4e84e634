"""Listwise large-margin surrogate with measure-adapted document weights.

The surrogate for scores ``s`` and grades ``R`` is::

    sum_i v_i * max(0, max_{j: R_i > R_j} margin + s_j - s_i)

Weight vectors are defined on the *canonical* document order (grades
non-increasing, ties by score descending, then by original index), so
callers pass instances through :func:`canonicalize` first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .ranking import DegenerateQueryError, binarize, discount, gain

MEASURES = ("ndcg", "ndcg_k", "ap")


@dataclass(frozen=True)
class SlamConfig:
    margin: float = 1.0

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")


@dataclass(frozen=True)
class CanonicalInstance:
    """An instance reordered into canonical order.

    ``order[c]`` is the original index of canonical document ``c``.
    """

    features: np.ndarray
    grades: np.ndarray
    scores: np.ndarray
    order: np.ndarray


def canonicalize(X, R, s) -> CanonicalInstance:
    R = np.asarray(R, dtype=np.int64)
    s = np.asarray(s, dtype=np.float64)
    if R.shape != s.shape:
        raise ValueError("grades and scores differ in length")
    if X is not None and np.shape(X)[0] != R.shape[0]:
        raise ValueError("features and grades differ in length")
    order = np.lexsort((np.arange(R.shape[0]), -s, -R))
    feats = None if X is None else np.ascontiguousarray(np.asarray(X, dtype=np.float64)[order])
    return CanonicalInstance(
        features=feats,
        grades=np.ascontiguousarray(R[order]),
        scores=np.ascontiguousarray(s[order]),
        order=order,
    )


def _require_canonical(R: np.ndarray) -> None:
    if np.any(np.diff(R) > 0):
        raise ValueError("grades must be in canonical (non-increasing) order")


def weights_ap(R) -> np.ndarray:
    """Uniform weight ``1/r`` on the ``r`` relevant documents."""
    R = np.asarray(R, dtype=np.int64)
    _require_canonical(R)
    if R.size and R.max() > 1:
        raise ValueError("AP weights need binary relevance")
    r = int(R.sum())
    if r == 0:
        raise DegenerateQueryError("no relevant documents")
    v = np.zeros(R.shape[0])
    v[:r] = 1.0 / r
    return v


def weights_ndcg_k(R, k: int) -> np.ndarray:
    """Per-position normalized DCG contributions of the ideal ranking, cut at ``k``."""
    R = np.asarray(R, dtype=np.int64)
    _require_canonical(R)
    m = R.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"cutoff k={k} outside [1, {m}]")
    contrib = np.zeros(m)
    contrib[:k] = gain(R[:k]) * discount(np.arange(1, k + 1))
    z = kernels.dcg_ranked(np.ascontiguousarray(R), k)
    if z == 0.0:
        raise DegenerateQueryError("no positive grade within the cutoff")
    return contrib / z


def weights_ndcg(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.int64)
    return weights_ndcg_k(R, R.shape[0])


def surrogate_weights(R, measure: str, k: int | None = None) -> np.ndarray:
    """Dispatch to the weight vector for ``measure`` (``ndcg``, ``ndcg_k`` or ``ap``)."""
    if measure == "ndcg":
        return weights_ndcg(R)
    if measure == "ndcg_k":
        return weights_ndcg_k(R, min(int(k), len(R)))
    if measure == "ap":
        return weights_ap(binarize(R))
    raise ValueError(f"unknown measure {measure!r}")


def weight_ratio_max(v) -> float:
    """Largest ratio between two strictly positive weights."""
    pos = np.asarray(v)[np.asarray(v) > 0]
    if pos.size == 0:
        return 1.0
    return float(pos.max() / pos.min())


def slam_terms(s, R, cfg: SlamConfig = SlamConfig()):
    """Hinge terms ``c`` and maximizing partners ``k`` (``-1`` when inactive)."""
    return kernels.slam_terms(
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.int64),
        float(cfg.margin),
    )


def slam_loss(s, R, v, cfg: SlamConfig = SlamConfig()) -> float:
    """Surrogate value on a canonical instance."""
    loss, _ = kernels.slam_loss_direction(
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.int64),
        np.ascontiguousarray(v, dtype=np.float64),
        float(cfg.margin),
    )
    return loss


def slam_score_gradient(s, R, v, cfg: SlamConfig = SlamConfig()):
    """Surrogate value and its subgradient with respect to the scores."""
    return kernels.slam_loss_direction(
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.int64),
        np.ascontiguousarray(v, dtype=np.float64),
        float(cfg.margin),
    )


def slam_subgradient(X, s, R, v, cfg: SlamConfig = SlamConfig()) -> np.ndarray:
    """Subgradient in weight space, ``X.T @ sum_i v_i a_i``, on a canonical instance."""
    _, u = slam_score_gradient(s, R, v, cfg)
    return np.asarray(X, dtype=np.float64).T @ u


def slam_objective(w, X, R, measure: str = "ndcg", k: int | None = None,
                   cfg: SlamConfig = SlamConfig()):
    """Surrogate value and weight-space subgradient at ``w`` for an instance in any order.

    The AP surrogate compares binarized grades. Uniform-grade instances
    have value 0 and a zero subgradient.
    """
    X = np.asarray(X, dtype=np.float64)
    if measure == "ap":
        R = binarize(R)
    s = X @ np.asarray(w, dtype=np.float64)
    canon = canonicalize(X, R, s)
    try:
        v = surrogate_weights(canon.grades, measure, k)
    except DegenerateQueryError:
        return 0.0, np.zeros(X.shape[1])
    loss, u = slam_score_gradient(canon.scores, canon.grades, v, cfg)
    return loss, canon.features.T @ u
