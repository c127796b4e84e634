"""Pure numpy implementations of the per-round kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same
signature. Index outputs (argmax, witnesses) agree exactly between the
two; float reductions agree to rounding.
"""

import numpy as np


def slam_terms(s, grades, margin):
    """Per-document hinge terms of the listwise surrogate.

    Returns ``(c, k)`` where ``c[i] = max(0, max_j margin + s[j] - s[i])``
    over ``j`` with ``grades[i] > grades[j]`` and ``k[i]`` is the smallest
    maximizing ``j`` (``-1`` where ``c[i] == 0``).
    """
    m = s.shape[0]
    b = (margin + s[None, :]) - s[:, None]
    b = np.where(grades[:, None] > grades[None, :], b, -np.inf)
    k = np.argmax(b, axis=1)
    best = b[np.arange(m), k]
    active = best > 0.0
    c = np.where(active, best, 0.0)
    k = np.where(active, k, -1).astype(np.int64)
    return c, k


def slam_loss_direction(s, grades, v, margin):
    """Surrogate value and the score-space subgradient ``sum_i v_i a_i``."""
    c, k = slam_terms(s, grades, margin)
    loss = float(np.dot(v, c))
    u = np.zeros_like(s)
    active = k >= 0
    np.add.at(u, k[active], v[active])
    u[active] -= v[active]
    return loss, u


def pairwise_witness(s, grades):
    """Largest pairwise hinge ``(1 + s[j] - s[i])_+`` over ``grades[i] > grades[j]``.

    Returns ``(value, i, j)``; the pair is the lexicographically smallest
    maximizer, or ``(-1, -1)`` when the value is zero.
    """
    m = s.shape[0]
    b = (1.0 + s[None, :]) - s[:, None]
    b = np.where(grades[:, None] > grades[None, :], b, -np.inf)
    flat = int(np.argmax(b))
    best = b.flat[flat]
    if not best > 0.0:
        return 0.0, -1, -1
    return float(best), flat // m, flat % m


def dcg_ranked(ranked_grades, k):
    """DCG of the first ``k`` entries of a grade sequence given in rank order."""
    g = ranked_grades[:k].astype(np.float64)
    gains = np.exp2(g) - 1.0
    return float(np.sum(gains / np.log2(np.arange(2, g.shape[0] + 2, dtype=np.float64))))


def ap_ranked(ranked_binary):
    """Average precision of a 0/1 sequence in rank order; NaN with no relevant."""
    rel = ranked_binary.astype(bool)
    hits = np.cumsum(rel)
    if hits.shape[0] == 0 or hits[-1] == 0:
        return float("nan")
    ranks = np.arange(1, rel.shape[0] + 1, dtype=np.float64)
    return float(np.sum(hits[rel] / ranks[rel]) / hits[-1])
