"""Instance sources: LETOR/SVMlight files, synthetic streams, and an adaptive adversary."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .ranking import DEFAULT_MAX_GRADE, Query

# ---------------------------------------------------------------------------
# SVMlight / LETOR files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    r_x: float
    max_m: int
    grade_histogram: dict


@dataclass(frozen=True)
class QueryGroupedDataset:
    instances: tuple
    n_features: int
    stats: DatasetStats = field(init=False)

    def __post_init__(self):
        instances = tuple(self.instances)
        if not instances:
            raise ValueError("dataset has no queries")
        for q in instances:
            if q.d != self.n_features:
                raise ValueError(f"query {q.qid!r} has d={q.d}, dataset has d={self.n_features}")
        hist = Counter()
        for q in instances:
            hist.update(int(g) for g in q.grades)
        stats = DatasetStats(
            r_x=max(float(np.max(np.linalg.norm(q.features, axis=1))) for q in instances),
            max_m=max(q.m for q in instances),
            grade_histogram=dict(sorted(hist.items())),
        )
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "stats", stats)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Query]:
        return iter(self.instances)


def _parse_line(line: str, where: str):
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    toks = body.split()
    try:
        grade_f = float(toks[0])
    except ValueError:
        raise ValueError(f"{where}: bad relevance grade {toks[0]!r}") from None
    if grade_f != int(grade_f) or grade_f < 0:
        raise ValueError(f"{where}: relevance grade must be a non-negative integer, got {toks[0]!r}")
    if len(toks) < 2 or not toks[1].startswith("qid:") or len(toks[1]) == 4:
        raise ValueError(f"{where}: expected 'qid:<id>' after the grade")
    qid = toks[1][4:]
    feats = {}
    for tok in toks[2:]:
        fid, sep, val = tok.partition(":")
        try:
            fid_i = int(fid)
            val_f = float(val)
        except ValueError:
            raise ValueError(f"{where}: bad feature token {tok!r}") from None
        if not sep or fid_i < 1:
            raise ValueError(f"{where}: feature ids are 1-based, got {tok!r}")
        if not math.isfinite(val_f):
            raise ValueError(f"{where}: non-finite feature value in {tok!r}")
        feats[fid_i] = val_f
    return int(grade_f), qid, feats


def load_svmlight_ranking(path, normalize: bool = False, clip_norm: Optional[float] = None,
                          n_features: Optional[int] = None) -> QueryGroupedDataset:
    """Read a ``<grade> qid:<id> <fid>:<val> ... [# comment]`` ranking file.

    Consecutive lines with one qid form one query; missing features are 0.
    A qid that reappears later is merged into its first group with a
    warning.

    Parameters
    ----------
    normalize : bool
        Min-max scale every feature to [0, 1] over the whole file.
    clip_norm : float, optional
        Shrink any document vector longer than this to this length.
    n_features : int, optional
        Force the feature dimension (default: largest feature id seen).
    """
    path = Path(path)
    groups: dict = {}
    last_qid = None
    warned = False
    max_fid = 0
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            parsed = _parse_line(line, f"{path}:{lineno}")
            if parsed is None:
                continue
            grade, qid, feats = parsed
            if qid != last_qid and qid in groups and not warned:
                warnings.warn(f"{path}: qid {qid!r} is not contiguous; grouping by qid", stacklevel=2)
                warned = True
            groups.setdefault(qid, []).append((grade, feats))
            last_qid = qid
            if feats:
                max_fid = max(max_fid, max(feats))
    if not groups:
        raise ValueError(f"{path}: no data lines")

    d = n_features if n_features is not None else max(max_fid, 1)
    if max_fid > d:
        raise ValueError(f"{path}: feature id {max_fid} exceeds n_features={d}")
    raw = []
    for qid, rows in groups.items():
        X = np.zeros((len(rows), d))
        for r, (_, feats) in enumerate(rows):
            for fid, val in feats.items():
                X[r, fid - 1] = val
        raw.append((qid, X, np.array([g for g, _ in rows], dtype=np.int64)))

    if normalize:
        allx = np.vstack([X for _, X, _ in raw])
        lo, hi = allx.min(axis=0), allx.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        raw = [(qid, np.where(hi > lo, (X - lo) / span, 0.0), R) for qid, X, R in raw]
    if clip_norm is not None:
        raw = [(qid, _clip_rows(X, clip_norm), R) for qid, X, R in raw]

    top = max(DEFAULT_MAX_GRADE, max(int(R.max()) for _, _, R in raw))
    return QueryGroupedDataset(
        instances=tuple(Query(X, R, qid, max_grade=top) for qid, X, R in raw),
        n_features=d,
    )


def _clip_rows(X: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return X * scale[:, None]


def dump_svmlight_ranking(queries, path) -> None:
    """Write queries densely, one document per line, with round-trip float precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in queries:
            qid = q.qid if q.qid else "0"
            for grade, row in zip(q.grades, q.features):
                feats = " ".join(f"{i}:{float(v)!r}" for i, v in enumerate(row, start=1))
                fh.write(f"{int(grade)} qid:{qid} {feats}\n")


# ---------------------------------------------------------------------------
# Synthetic streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparableStreamConfig:
    """Margin-separable synthetic stream.

    Scores along the hidden unit ranker are confined to
    ``|w_star . x| <= score_fraction * radius``; adjacent grades are at
    least ``margin`` apart there.
    """

    m: int = 20
    d: int = 20
    grades: int = 5
    margin: float = 0.08
    noise: float = 1.0
    radius: float = 1.0
    score_fraction: float = 0.7
    mean_scale: float = 1.0
    mean_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 2 or self.d < 2 or self.grades < 2:
            raise ValueError("need m >= 2, d >= 2 and at least 2 grade levels")
        if not (self.margin > 0 and self.noise > 0 and self.radius > 0 and self.mean_scale >= 0
                and self.mean_jitter >= 0):
            raise ValueError("margin, noise and radius must be positive")
        if not 0 < self.score_fraction <= 1:
            raise ValueError("score_fraction must be in (0, 1]")
        if (self.grades - 1) * self.margin >= 2 * self.score_fraction * self.radius:
            raise ValueError(
                f"infeasible: {self.grades} grades with margin {self.margin} do not fit "
                f"in score range +-{self.score_fraction * self.radius}"
            )


def _separate_classes(a: np.ndarray, R: np.ndarray, margin: float, span: float) -> np.ndarray:
    """Shift grade classes along the score axis so adjacent grades are ``margin`` apart.

    Scores are first scaled by the largest factor ``f <= 1`` for which the
    shifted layout fits in ``span``; each class (lowest grade first) is then
    pushed up just enough to clear the class below it. The result is
    centred on 0.
    """
    present = np.unique(R)
    lo = np.array([a[R == g].min() for g in present])
    width = np.array([a[R == g].max() for g in present]) - lo
    n = present.shape[0]
    # span(f) = max_j f * (lo_j - lo_0 + sum_{i>=j} width_i) + (n - 1 - j) * margin
    slope = lo - lo[0] + np.cumsum(width[::-1])[::-1]
    intercept = (n - 1 - np.arange(n)) * margin
    with np.errstate(divide="ignore"):
        caps = np.where(slope > 0, (span - intercept) / slope, np.inf)
    f = min(1.0, float(caps.min()))

    out = f * a
    prev_top = None
    for g in present:
        idx = R == g
        if prev_top is not None:
            out[idx] += max(0.0, prev_top + margin - out[idx].min())
        prev_top = out[idx].max()
    return out - (out.max() + out.min()) / 2


class SeparableStream:
    """Endless stream of margin-separable queries.

    Grades are drawn uniformly per document. Each grade level has a
    stream-wide Gaussian class mean (scale ``mean_scale``), perturbed per
    query by ``mean_jitter``; documents are sampled around it with spread
    ``noise``. Along the hidden unit ranker ``w_star``
    the grade classes are then translated apart (see
    :func:`_separate_classes`), and the components orthogonal to
    ``w_star`` are shrunk until every document fits in the ``radius``
    ball. The shrink leaves ``w_star`` scores alone, so every query is
    separated with margin ``cfg.margin``; this is checked before the
    query is yielded.

    Iterating restarts from ``cfg.seed``, so two iterations are identical.
    """

    def __init__(self, cfg: SeparableStreamConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        w = rng.standard_normal(cfg.d)
        self.w_star = w / np.linalg.norm(w)
        self.class_means = cfg.mean_scale * rng.standard_normal((cfg.grades, cfg.d))
        self.min_margin = math.inf
        self.r_x = 0.0

    def clone(self, seed: Optional[int] = None) -> "SeparableStream":
        return SeparableStream(self.cfg if seed is None else replace(self.cfg, seed=seed))

    @property
    def certified_margin(self) -> float:
        """Margin guaranteed for every query, net of rounding seen so far."""
        return min(self.cfg.margin, self.min_margin)

    def _query(self, rng: np.random.Generator, n: int) -> Query:
        cfg, w = self.cfg, self.w_star
        R = rng.integers(0, cfg.grades, size=cfg.m)
        means = self.class_means + cfg.mean_jitter * rng.standard_normal((cfg.grades, cfg.d))
        X = means[R] + cfg.noise * rng.standard_normal((cfg.m, cfg.d))

        a = X @ w
        perp = X - np.outer(a, w)
        a = _separate_classes(a, R, cfg.margin, 2 * cfg.score_fraction * cfg.radius)
        room = np.sqrt(np.maximum(cfg.radius ** 2 - a ** 2, 0.0))
        pn = np.linalg.norm(perp, axis=1)
        shrink = min(1.0, float(np.min(room / np.where(pn > 0, pn, np.inf))))
        X = np.outer(a, w) + shrink * perp

        margin = _pair_margin(X @ w, R)
        if margin < cfg.margin - 1e-12:
            raise RuntimeError(f"generated query {n} has margin {margin} < {cfg.margin}")
        self.min_margin = min(self.min_margin, margin)
        self.r_x = max(self.r_x, float(np.max(np.linalg.norm(X, axis=1))))
        return Query(X, R, qid=str(n), max_grade=max(DEFAULT_MAX_GRADE, cfg.grades - 1))

    def __iter__(self) -> Iterator[Query]:
        rng = np.random.default_rng([self.cfg.seed, 1])
        n = 0
        while True:
            yield self._query(rng, n)
            n += 1


def generate_separable_stream(cfg: SeparableStreamConfig) -> SeparableStream:
    return SeparableStream(cfg)


def _pair_margin(scores: np.ndarray, R: np.ndarray) -> float:
    """Smallest ``scores[i] - scores[j]`` over pairs with ``R[i] > R[j]`` (inf if none)."""
    mask = R[:, None] > R[None, :]
    if not mask.any():
        return math.inf
    return float(np.min((scores[:, None] - scores[None, :])[mask]))


@dataclass(frozen=True)
class RandomStreamConfig:
    """Gaussian documents with grades drawn independently of the features."""

    m: int = 10
    d: int = 10
    grades: int = 5
    seed: int = 0


class RandomStream:
    def __init__(self, cfg: RandomStreamConfig):
        self.cfg = cfg

    def clone(self, seed: Optional[int] = None) -> "RandomStream":
        return RandomStream(self.cfg if seed is None else replace(self.cfg, seed=seed))

    def __iter__(self) -> Iterator[Query]:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        n = 0
        while True:
            X = rng.standard_normal((cfg.m, cfg.d))
            R = rng.integers(0, cfg.grades, size=cfg.m)
            yield Query(X, R, qid=str(n), max_grade=max(DEFAULT_MAX_GRADE, cfg.grades - 1))
            n += 1


def separable_binary_stream(n: int, d: int, margin: float, radius: float = 1.0,
                            seed: int = 0):
    """Binary classification data separable with ``margin`` by a hidden unit vector.

    Points are uniform on the ``radius`` sphere, rejected while
    ``|u . x| < margin``, and labelled by ``sign(u . x)``.

    Returns
    -------
    X : (n, d) array
    y : (n,) array of +-1
    u : (d,) unit separator
    """
    if not 0 < margin < radius:
        raise ValueError("need 0 < margin < radius")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    rows = []
    while len(rows) < n:
        x = rng.standard_normal((2 * n, d))
        x *= radius / np.linalg.norm(x, axis=1, keepdims=True)
        rows.extend(x[np.abs(x @ u) >= margin])
    X = np.array(rows[:n])
    y = np.where(X @ u > 0, 1, -1)
    return X, y, u


# ---------------------------------------------------------------------------
# Adaptive adversary
# ---------------------------------------------------------------------------


class ProtocolError(RuntimeError):
    """The next_instance / reveal_relevance alternation was broken."""


class Adversary:
    """Adaptive source forcing a constant loss per round on any deterministic ranker.

    Round ``t`` (1-based) shows documents ``(r e_{t+1}, -r e_{t+1}, r e_1, ...)``.
    After seeing the learner's ranking, the adversary makes relevant
    whichever of the first two documents the learner did *not* put on top.
    The revealed stream is still separable with margin ``margin`` by the
    unit-norm vector returned from :meth:`certificate`.
    """

    def __init__(self, radius: float = 1.0, margin: float = 0.125,
                 d: Optional[int] = None, m: int = 3):
        if m < 2:
            raise ValueError("adversary needs m >= 2")
        if not (radius > 0 and margin > 0):
            raise ValueError("radius and margin must be positive")
        horizon = math.floor(radius ** 2 / margin ** 2) - 1
        if horizon < 1:
            raise ValueError("radius**2 / margin**2 must be at least 2")
        d = horizon + 1 if d is None else d
        if d < horizon + 1:
            raise ValueError(f"dimension d={d} too small; need d >= {horizon + 1}")
        self.radius = float(radius)
        self.margin = float(margin)
        self.d = d
        self.m = m
        self.horizon = horizon
        self.t = 0
        self.history: list = []
        self._pending: Optional[np.ndarray] = None
        self._revealed: list = []

    def next_instance(self) -> Optional[np.ndarray]:
        if self._pending is not None:
            raise ProtocolError("previous instance has not been revealed")
        if self.t >= self.horizon:
            return None
        X = np.zeros((self.m, self.d))
        X[0, self.t + 1] = self.radius
        X[1, self.t + 1] = -self.radius
        X[2:, 0] = self.radius
        self._pending = X
        return X

    def reveal_relevance(self, predicted) -> np.ndarray:
        if self._pending is None:
            raise ProtocolError("no instance awaiting relevance")
        first_on_top = int(np.asarray(predicted)[0]) == 0
        R = np.zeros(self.m, dtype=np.int64)
        R[1 if first_on_top else 0] = 1
        self.history.append(first_on_top)
        self._revealed.append(Query(self._pending, R, qid=str(self.t)))
        self._pending = None
        self.t += 1
        return R

    @property
    def revealed(self) -> tuple:
        return tuple(self._revealed)

    def certificate(self, tol: float = 1e-12) -> np.ndarray:
        """Unit-norm ranker separating every revealed query with margin exactly ``margin``."""
        if self.t < self.horizon:
            raise ProtocolError(f"certificate requested after {self.t} of {self.horizon} rounds")
        c = self.margin / (2 * self.radius)
        w = np.zeros(self.d)
        w[0] = -c
        for i, first_on_top in enumerate(self.history):
            # doc 1 relevant exactly when the learner did not put it on top
            w[i + 1] = -c if first_on_top else c
        if np.linalg.norm(w) > 1 + tol:
            raise RuntimeError("certificate norm exceeds 1")
        for q in self._revealed:
            got = _pair_margin(q.features @ w, q.grades)
            if abs(got - self.margin) > tol:
                raise RuntimeError(f"query {q.qid}: margin {got} != {self.margin}")
        return w
