"""Online ranking learners and the loop that drives them over a stream.

Three ranking learners share one round structure: score with the current
weights, sort, receive grades, update.

* ``slam_perceptron`` steps along the listwise surrogate's subgradient,
  only on rounds where the ranking measure loss is non-zero.
* ``pairwise_perceptron`` does the same with the worst-pair hinge.
* ``listnet_ogd`` is the baseline: plain online gradient descent on the
  top-1 ListNet cross entropy, updating every round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .pairwise import phi_c_loss
from .ranking import (
    DegenerateQueryError,
    argsort_desc,
    average_precision,
    binarize,
    ndcg_at_k,
)
from .slam import SlamConfig, canonicalize, slam_score_gradient, surrogate_weights, weight_ratio_max

ALGORITHMS = ("slam_perceptron", "pairwise_perceptron", "listnet_ogd")
MEASURES = ("ndcg", "ndcg_k", "ap")


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: str = "slam_perceptron"
    measure: str = "ndcg"
    k: int = 10
    eta: float = 1.0
    slam: SlamConfig = SlamConfig()

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}; choose from {MEASURES}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.k < 1:
            raise ValueError("cutoff k must be at least 1")


@dataclass
class RankingModel:
    """Linear scorer ``s = X @ w`` plus running statistics."""

    w: np.ndarray
    eta: float = 1.0
    round: int = 0
    mistake_rounds: int = 0
    cumulative_rml: float = 0.0
    cumulative_surrogate: float = 0.0
    # rounds on which the surrogate fell below the measure loss; stays 0
    surrogate_violations: int = 0

    @classmethod
    def zeros(cls, d: int, eta: float = 1.0) -> "RankingModel":
        return cls(w=np.zeros(d), eta=eta)

    @property
    def d(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class RoundOutcome:
    predicted: np.ndarray
    rml: float
    surrogate: float
    updated: bool
    # squared norm of the applied subgradient and its self-bounding ceiling
    grad_sq_norm: float = 0.0
    grad_bound: float = math.nan
    v_max: float = math.nan


def ranking_measure_loss(s, R, measure: str = "ndcg", k: int = 10) -> float:
    """``1 - NDCG``, ``1 - NDCG@k`` or ``1 - AP`` of the ranking induced by ``s``.

    AP binarizes grades first; a query with nothing relevant has loss 0.
    """
    m = len(s)
    if measure == "ndcg":
        return 1.0 - ndcg_at_k(s, R, m)
    if measure == "ndcg_k":
        return 1.0 - ndcg_at_k(s, R, min(k, m))
    if measure == "ap":
        try:
            return 1.0 - average_precision(s, binarize(R))
        except DegenerateQueryError:
            return 0.0
    raise ValueError(f"unknown measure {measure!r}")


def predict(model: RankingModel, X) -> np.ndarray:
    """Predicted rank-to-document permutation for a feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.d:
        raise ValueError(f"model has d={model.d}, instance has d={X.shape[1]}")
    return argsort_desc(X @ model.w)


def _prepare(model: RankingModel, X, R):
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"model has d={model.d}, instance has shape {X.shape}")
    if R.shape != (X.shape[0],):
        raise ValueError("grades and features differ in length")
    s = X @ model.w
    return X, R, s, argsort_desc(s)


def _record(model: RankingModel, rml: float, surrogate: float, updated: bool) -> None:
    model.round += 1
    model.cumulative_rml += rml
    model.cumulative_surrogate += surrogate
    if updated:
        model.mistake_rounds += 1


def slam_perceptron_step(model: RankingModel, X, R, cfg: LearnerConfig) -> RoundOutcome:
    """One round of the listwise-surrogate perceptron."""
    X, R, s, pred = _prepare(model, X, R)
    rml = ranking_measure_loss(s, R, cfg.measure, cfg.k)
    if rml == 0.0:
        _record(model, 0.0, 0.0, False)
        return RoundOutcome(pred, 0.0, 0.0, False)

    R_sur = binarize(R) if cfg.measure == "ap" else R
    canon = canonicalize(X, R_sur, s)
    v = surrogate_weights(canon.grades, cfg.measure, cfg.k)
    loss, u = slam_score_gradient(canon.scores, canon.grades, v, cfg.slam)
    z = canon.features.T @ u
    model.w = model.w - model.eta * z

    if loss < rml - 1e-12:
        model.surrogate_violations += 1
    n_docs = min(cfg.k, X.shape[0]) if cfg.measure == "ndcg_k" else X.shape[0]
    r_x = float(np.max(np.linalg.norm(X, axis=1)))
    v_max = weight_ratio_max(v)
    _record(model, rml, loss, True)
    return RoundOutcome(
        pred, rml, loss, True,
        grad_sq_norm=float(z @ z),
        grad_bound=4.0 * n_docs * r_x ** 2 * v_max * loss,
        v_max=v_max,
    )


def pairwise_perceptron_step(model: RankingModel, X, R, cfg: LearnerConfig) -> RoundOutcome:
    """One round of the worst-pair perceptron.

    Its predictions do not depend on ``eta``: scaling all scores leaves the
    maximizing pair unchanged.
    """
    X, R, s, pred = _prepare(model, X, R)
    rml = ranking_measure_loss(s, R, cfg.measure, cfg.k)
    if rml == 0.0:
        _record(model, 0.0, 0.0, False)
        return RoundOutcome(pred, 0.0, 0.0, False)

    R_sur = binarize(R) if cfg.measure == "ap" else R
    loss = phi_c_loss(s, R_sur)
    i, j = loss.witness
    z = X[j] - X[i]
    model.w = model.w - model.eta * z

    if loss.value < rml - 1e-12:
        model.surrogate_violations += 1
    r_x = float(np.max(np.linalg.norm(X, axis=1)))
    _record(model, rml, loss.value, True)
    return RoundOutcome(
        pred, rml, loss.value, True,
        grad_sq_norm=float(z @ z),
        grad_bound=4.0 * r_x ** 2 * loss.value,
    )


def _softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max())
    return e / e.sum()


def listnet_loss(s, R):
    """Top-1 ListNet cross entropy and its gradient with respect to the scores.

    The target distribution is the softmax of the raw grades.
    """
    s = np.asarray(s, dtype=np.float64)
    p_true = _softmax(np.asarray(R, dtype=np.float64))
    shifted = s - s.max()
    log_p = shifted - math.log(np.exp(shifted).sum())
    loss = float(-(p_true @ log_p))
    return loss, np.exp(log_p) - p_true


def listnet_ogd_step(model: RankingModel, X, R, cfg: LearnerConfig) -> RoundOutcome:
    """One online gradient step on the ListNet loss (no mistake gating)."""
    X, R, s, pred = _prepare(model, X, R)
    rml = ranking_measure_loss(s, R, cfg.measure, cfg.k)
    loss, g = listnet_loss(s, R)
    z = X.T @ g
    model.w = model.w - model.eta * z
    _record(model, rml, loss, False)
    model.mistake_rounds += int(rml != 0.0)
    return RoundOutcome(pred, rml, loss, True, grad_sq_norm=float(z @ z))


STEPS = {
    "slam_perceptron": slam_perceptron_step,
    "pairwise_perceptron": pairwise_perceptron_step,
    "listnet_ogd": listnet_ogd_step,
}


def step(model: RankingModel, X, R, cfg: LearnerConfig) -> RoundOutcome:
    return STEPS[cfg.algorithm](model, X, R, cfg)


def classification_perceptron_step(w, x, y: int, eta: float = 1.0):
    """Binary perceptron round; ``sign(0)`` counts as +1.

    Returns the (possibly updated) weights and whether a mistake was made.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    pred = 1 if x @ w >= 0 else -1
    if pred == y:
        return w, False
    return w + eta * y * x, True


def run_classification_perceptron(X, y, eta: float = 1.0):
    """One pass of the binary perceptron; returns final weights and the mistake flags."""
    X = np.asarray(X, dtype=np.float64)
    w = np.zeros(X.shape[1])
    mistakes = np.zeros(X.shape[0], dtype=bool)
    for t, (x, label) in enumerate(zip(X, y)):
        w, mistakes[t] = classification_perceptron_step(w, x, int(label), eta)
    return w, mistakes


@dataclass
class ExperimentTrace:
    """Per-round record of a run; averages are prefix means of the per-round columns."""

    report_k: int
    ndcg: np.ndarray
    ap: np.ndarray
    rml: np.ndarray
    surrogate: np.ndarray
    updated: np.ndarray
    grad_sq_norm: np.ndarray
    grad_bound: np.ndarray
    v_max: np.ndarray
    r_x: float
    max_m: int
    model: RankingModel
    truncated: bool = False
    predictions: Optional[list] = None
    degenerate_ap: str = "skip"
    # rounds dropped from the AP average because nothing was relevant
    ap_skipped: int = field(default=0)

    def __len__(self) -> int:
        return self.ndcg.shape[0]

    @property
    def iterations(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def avg_ndcg(self) -> np.ndarray:
        return np.cumsum(self.ndcg) / self.iterations

    @property
    def avg_ap(self) -> np.ndarray:
        valid = ~np.isnan(self.ap)
        counts = np.cumsum(valid)
        sums = np.cumsum(np.where(valid, self.ap, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    @property
    def cumulative_rml(self) -> np.ndarray:
        return np.cumsum(self.rml)


def _reported_ap(s, R, degenerate_ap: str) -> float:
    try:
        return average_precision(s, binarize(R))
    except DegenerateQueryError:
        return 1.0 if degenerate_ap == "one" else math.nan


def run_stream(cfg: LearnerConfig, source, horizon: int, d: Optional[int] = None,
               report_k: int = 10, degenerate_ap: str = "skip",
               keep_predictions: bool = False,
               model: Optional[RankingModel] = None) -> ExperimentTrace:
    """Run a learner for up to ``horizon`` rounds.

    ``source`` is either an iterable of :class:`Query` or an interactive
    source exposing ``next_instance()`` / ``reveal_relevance(predicted)``,
    which sees each prediction before choosing the grades. A source that
    runs dry early yields a trace flagged ``truncated``.
    """
    if degenerate_ap not in ("skip", "one"):
        raise ValueError("degenerate_ap must be 'skip' or 'one'")
    interactive = hasattr(source, "reveal_relevance")
    it = None if interactive else iter(source)
    cols = {name: [] for name in ("ndcg", "ap", "rml", "surrogate", "updated",
                                  "grad_sq_norm", "grad_bound", "v_max")}
    preds = [] if keep_predictions else None
    r_x = 0.0
    max_m = 0
    truncated = False
    step_fn = STEPS[cfg.algorithm]

    for _ in range(horizon):
        if interactive:
            X = source.next_instance()
            if X is None:
                truncated = True
                break
            if model is None:
                model = RankingModel.zeros(X.shape[1] if d is None else d, cfg.eta)
            R = source.reveal_relevance(predict(model, X))
        else:
            q = next(it, None)
            if q is None:
                truncated = True
                break
            X, R = q.features, q.grades
            if model is None:
                model = RankingModel.zeros(X.shape[1] if d is None else d, cfg.eta)

        s = X @ model.w
        kk = min(report_k, X.shape[0])
        cols["ndcg"].append(ndcg_at_k(s, R, kk))
        cols["ap"].append(_reported_ap(s, R, degenerate_ap))
        out = step_fn(model, X, R, cfg)
        cols["rml"].append(out.rml)
        cols["surrogate"].append(out.surrogate)
        cols["updated"].append(out.updated)
        cols["grad_sq_norm"].append(out.grad_sq_norm)
        cols["grad_bound"].append(out.grad_bound)
        cols["v_max"].append(out.v_max)
        r_x = max(r_x, float(np.max(np.linalg.norm(X, axis=1))))
        max_m = max(max_m, X.shape[0])
        if preds is not None:
            preds.append(out.predicted)

    if model is None:
        model = RankingModel.zeros(d or 0, cfg.eta)
    arrays = {k: np.asarray(v, dtype=bool if k == "updated" else np.float64)
              for k, v in cols.items()}
    return ExperimentTrace(
        report_k=report_k,
        r_x=r_x,
        max_m=max_m,
        model=model,
        truncated=truncated,
        predictions=preds,
        degenerate_ap=degenerate_ap,
        ap_skipped=int(np.isnan(arrays["ap"]).sum()),
        **arrays,
    )
