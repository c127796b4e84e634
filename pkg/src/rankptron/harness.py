"""Experiment runner: configuration, traces, bound audits, sweeps and model files.

A run is fully described by an :class:`ExperimentConfig`; running the same
config twice produces byte-identical trace files.
"""

import csv
import dataclasses
import io
import math
import platform
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, kernels
from .datasets import (
    Adversary,
    RandomStream,
    RandomStreamConfig,
    SeparableStream,
    SeparableStreamConfig,
    load_svmlight_ranking,
)
from .learners import LearnerConfig, RankingModel, run_stream
from .ranking import DegenerateQueryError, average_precision, binarize, ndcg_at_k
from .slam import SlamConfig, surrogate_weights, weight_ratio_max

SOURCES = ("separable", "adversary", "random", "svmlight")
BOUND_TOL = 1e-9

SEPARABLE_CONSTRUCTION = (
    "stream-wide Gaussian class mean per grade plus per-query jitter; documents = mean + noise; "
    "scores along w_star scaled by the largest f<=1 fitting the layout, grade classes shifted up "
    "to clear the class below by margin, recentred; orthogonal parts shrunk into the radius ball"
)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything that determines a run.

    ``horizon = 0`` means "as long as the source lasts" (adversary length
    or one pass over a file). Stream fields are used by the ``separable``
    and ``random`` sources; ``adversary_*`` fields by the adversary, which
    shares ``margin`` and ``radius`` with the separable stream.
    """

    source: str = "separable"
    algorithm: str = "slam_perceptron"
    measure: str = "ndcg"
    k: int = 10
    eta: float = 1.0
    slam_margin: float = 1.0
    horizon: int = 1000
    report_k: int = 10
    seed: int = 0
    degenerate_ap: str = "skip"
    # synthetic streams
    m: int = 20
    d: int = 20
    grades: int = 5
    margin: float = 0.08
    noise: float = 1.0
    radius: float = 1.0
    score_fraction: float = 0.7
    mean_scale: float = 1.0
    mean_jitter: float = 0.0
    # adversary
    adversary_m: int = 3
    adversary_d: int = 0
    # ranking files
    data_path: str = ""
    normalize: bool = True
    clip_norm: float = 0.0
    cycle: bool = False
    # outputs
    init_model: str = ""
    trace_path: str = ""
    meta_path: str = ""
    audit_path: str = ""
    model_path: str = ""

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; choose from {SOURCES}")
        if self.source == "svmlight" and not self.data_path:
            raise ValueError("source 'svmlight' needs data_path")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.horizon == 0 and self.source in ("separable", "random"):
            raise ValueError(f"source {self.source!r} is endless; give a positive horizon")
        if self.report_k < 1:
            raise ValueError("report_k must be >= 1")
        if self.degenerate_ap not in ("skip", "one"):
            raise ValueError("degenerate_ap must be 'skip' or 'one'")
        self.learner()

    def learner(self) -> LearnerConfig:
        return LearnerConfig(self.algorithm, self.measure, self.k, self.eta,
                             SlamConfig(self.slam_margin))

    def stream_config(self) -> SeparableStreamConfig:
        return SeparableStreamConfig(
            m=self.m, d=self.d, grades=self.grades, margin=self.margin, noise=self.noise,
            radius=self.radius, score_fraction=self.score_fraction,
            mean_scale=self.mean_scale, mean_jitter=self.mean_jitter, seed=self.seed,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        types = typing.get_type_hints(cls)
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(v, types[k], k) for k, v in values.items()})

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(read_key_values(path))


def _render(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(v, typ, key: str):
    if not isinstance(v, str):
        return v
    try:
        if typ is bool:
            low = v.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(v)
            return low in ("true", "1", "yes")
        return typ(v.strip())
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot read {v!r} as {typ.__name__}") from None


def read_key_values(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    path = Path(path)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# Sources and certified stream parameters
# ---------------------------------------------------------------------------


class _GradeMonitor:
    """Tracks R_X, max m and the largest weight ratio v_max seen on a stream.

    v_max only depends on the multiset of grades, so it is computed from
    the grades alone.
    """

    def __init__(self, measure: str, k: int):
        self.measure = measure
        self.k = k
        self.r_x = 0.0
        self.max_m = 0
        self.v_max = 1.0

    def observe(self, X, R) -> None:
        self.r_x = max(self.r_x, float(np.max(np.linalg.norm(X, axis=1))))
        self.max_m = max(self.max_m, X.shape[0])
        G = np.sort(binarize(R) if self.measure == "ap" else np.asarray(R))[::-1]
        try:
            v = surrogate_weights(G, self.measure, self.k)
        except DegenerateQueryError:
            return
        self.v_max = max(self.v_max, weight_ratio_max(v))

    def wrap(self, source):
        if hasattr(source, "reveal_relevance"):
            return _MonitoredInteractive(source, self)
        return self._iterate(source)

    def _iterate(self, source):
        for q in source:
            self.observe(q.features, q.grades)
            yield q


class _MonitoredInteractive:
    def __init__(self, source, monitor: _GradeMonitor):
        self.source = source
        self.monitor = monitor
        self._X = None

    def next_instance(self):
        self._X = self.source.next_instance()
        return self._X

    def reveal_relevance(self, predicted):
        R = self.source.reveal_relevance(predicted)
        self.monitor.observe(self._X, R)
        return R


def _cycle(instances):
    while True:
        yield from instances


def build_source(cfg: ExperimentConfig):
    """Return ``(source, horizon, d)`` for a config."""
    if cfg.source == "separable":
        return SeparableStream(cfg.stream_config()), cfg.horizon, cfg.d
    if cfg.source == "random":
        return RandomStream(RandomStreamConfig(cfg.m, cfg.d, cfg.grades, cfg.seed)), cfg.horizon, cfg.d
    if cfg.source == "adversary":
        adv = Adversary(cfg.radius, cfg.margin, cfg.adversary_d or None, cfg.adversary_m)
        horizon = adv.horizon if cfg.horizon == 0 else min(cfg.horizon, adv.horizon)
        return adv, horizon, adv.d
    data = load_svmlight_ranking(cfg.data_path, normalize=cfg.normalize,
                                 clip_norm=cfg.clip_norm or None)
    n = len(data.instances)
    horizon = cfg.horizon or n
    source = _cycle(data.instances) if cfg.cycle else data.instances
    return source, horizon, data.n_features


# ---------------------------------------------------------------------------
# Bound audits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundAudit:
    """One bound check. Upper bounds pass when ``observed <= theoretical + 1e-9``;
    lower bounds (``lower=True``) when ``observed >= theoretical - 1e-9``."""

    kind: str
    theoretical: float
    observed: float
    lower: bool = False

    @property
    def passed(self) -> bool:
        if self.lower:
            return self.observed >= self.theoretical - BOUND_TOL
        return self.observed <= self.theoretical + BOUND_TOL

    def line(self) -> str:
        rel = ">=" if self.lower else "<="
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.kind}: observed {self.observed:.12g} {rel} bound {self.theoretical:.12g}"


def cumulative_loss_bound(algorithm: str, measure: str, k: int, r_x: float, gamma: float,
                          v_max: float, max_m: int) -> Optional[tuple]:
    """Constant bound on cumulative ranking loss under margin ``gamma``.

    Returns ``(kind, value)``, or None when the learner has no such bound.
    """
    if algorithm == "slam_perceptron":
        if measure == "ndcg_k":
            return "slam_topk_cumulative", 4 * min(k, max_m) * r_x ** 2 * v_max / gamma ** 2
        return "slam_cumulative", 4 * max_m * r_x ** 2 * v_max / gamma ** 2
    if algorithm == "pairwise_perceptron":
        return "pairwise_cumulative", 4 * r_x ** 2 / gamma ** 2
    return None


def novikoff_audit(mistakes: int, radius: float, gamma: float) -> BoundAudit:
    return BoundAudit("classification_mistakes", radius ** 2 / gamma ** 2, float(mistakes))


def gradient_norm_audit(trace, algorithm: str) -> Optional[BoundAudit]:
    """Worst per-round excess of ``||z||^2`` over its self-bounding limit (must be <= 0)."""
    if algorithm == "listnet_ogd":
        return None
    kind = "slam_self_bounding" if algorithm == "slam_perceptron" else "pairwise_grad_norm"
    upd = trace.updated
    excess = trace.grad_sq_norm[upd] - trace.grad_bound[upd]
    return BoundAudit(kind, 0.0, float(excess.max()) if excess.size else 0.0)


def _perm_scores(perm) -> np.ndarray:
    """Scores that reproduce a permutation under the descending stable sort."""
    perm = np.asarray(perm)
    s = np.empty(perm.shape[0])
    s[perm] = -np.arange(perm.shape[0], dtype=np.float64)
    return s


def adversary_audits(adv: Adversary, predictions) -> list:
    losses_ap, losses_ndcg = [], []
    for q, perm in zip(adv.revealed, predictions):
        s = _perm_scores(perm)
        losses_ap.append(1.0 - average_precision(s, q.grades))
        losses_ndcg.append(1.0 - ndcg_at_k(s, q.grades))
    T = len(losses_ap)
    floor_ndcg = 1.0 - 1.0 / math.log2(3.0)
    return [
        BoundAudit("adversary_ap_lower", T / 2, float(np.sum(losses_ap)), lower=True),
        BoundAudit("adversary_ndcg_lower", T * floor_ndcg, float(np.sum(losses_ndcg)), lower=True),
    ]


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trace: object
    audits: list
    metadata: dict
    notices: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.audits)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run one experiment, audit it, and write whichever outputs are configured."""
    source, horizon, d = build_source(cfg)
    model = None
    if cfg.init_model:
        model = load_model(cfg.init_model, d=d)
        model.eta = cfg.eta
    lcfg = cfg.learner()
    monitor = _GradeMonitor(cfg.measure, cfg.k)
    trace = run_stream(lcfg, monitor.wrap(source), horizon, d=d, report_k=cfg.report_k,
                       degenerate_ap=cfg.degenerate_ap,
                       keep_predictions=cfg.source == "adversary", model=model)

    audits, notices = [], []
    gamma = None
    if cfg.source == "separable":
        gamma = source.certified_margin
    elif cfg.source == "adversary":
        gamma = source.margin
    else:
        notices.append(f"source {cfg.source!r} carries no margin certificate; cumulative bounds skipped")

    if gamma is not None and len(trace):
        bound = cumulative_loss_bound(cfg.algorithm, cfg.measure, cfg.k, monitor.r_x, gamma,
                                      monitor.v_max, monitor.max_m)
        if bound is None:
            notices.append(f"{cfg.algorithm} has no cumulative loss bound; skipped")
        else:
            audits.append(BoundAudit(bound[0], bound[1], float(trace.cumulative_rml[-1])))
    norm_audit = gradient_norm_audit(trace, cfg.algorithm) if len(trace) else None
    if norm_audit is not None:
        audits.append(norm_audit)
    if cfg.source == "adversary":
        if trace.truncated or source.t < source.horizon:
            notices.append("adversary horizon not completed; lower bounds and certificate skipped")
        else:
            source.certificate()
            audits.extend(adversary_audits(source, trace.predictions))

    metadata = {
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "seed": cfg.seed,
        "rounds": len(trace),
        "truncated": trace.truncated,
        "r_x": monitor.r_x,
        "max_m": monitor.max_m,
        "v_max": monitor.v_max,
        "certified_margin": "none" if gamma is None else gamma,
        "ap_rounds_skipped": trace.ap_skipped,
    }
    if cfg.source == "separable":
        metadata["separable_construction"] = SEPARABLE_CONSTRUCTION
    metadata.update({f"config.{k}": v for k, v in cfg.to_dict().items()})

    result = ExperimentResult(cfg, trace, audits, metadata, notices)
    if write:
        write_outputs(result)
    return result


def write_outputs(result: ExperimentResult) -> None:
    cfg = result.config
    if cfg.trace_path:
        write_trace_csv(result.trace, cfg.trace_path)
    if cfg.meta_path:
        _write_text(cfg.meta_path, "".join(f"{k} = {_render(v)}\n" for k, v in result.metadata.items()))
    if cfg.audit_path:
        _write_text(cfg.audit_path, audit_report(result))
    if cfg.model_path:
        save_model(result.trace.model, cfg.model_path)


def audit_report(result: ExperimentResult) -> str:
    lines = [a.line() for a in result.audits]
    lines += [f"NOTE {n}" for n in result.notices]
    return "\n".join(lines) + ("\n" if lines else "")


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.12g}"


def trace_columns(k: int) -> list:
    return ["iteration", f"ndcg@{k}", "ap", f"avg_ndcg@{k}", "avg_ap", "surrogate",
            "cumulative_rml", "updated"]


def trace_csv_text(trace) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(trace_columns(trace.report_k))
    cols = (trace.ndcg, trace.ap, trace.avg_ndcg, trace.avg_ap, trace.surrogate,
            trace.cumulative_rml)
    for t in range(len(trace)):
        wr.writerow([t + 1, *(_fmt(float(c[t])) for c in cols), int(trace.updated[t])])
    return buf.getvalue()


def write_trace_csv(trace, path) -> None:
    _write_text(path, trace_csv_text(trace))


@dataclass
class TraceTable:
    """Trace read back from CSV: column name -> array."""

    name: str
    columns: dict

    @property
    def iterations(self) -> np.ndarray:
        return self.columns["iteration"].astype(np.int64)

    def column(self, prefix: str) -> tuple:
        """``(name, values)`` of the first column starting with ``prefix``."""
        for key, values in self.columns.items():
            if key.startswith(prefix):
                return key, values
        raise KeyError(f"{self.name}: no column starting with {prefix!r}")


def read_trace_csv(path, name: Optional[str] = None) -> TraceTable:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows or rows[0][0] != "iteration":
        raise ValueError(f"{path}: not a trace CSV")
    header, body = rows[0], rows[1:]
    try:
        data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: malformed trace rows ({exc})") from None
    return TraceTable(name or path.stem, {h: data[:, i] for i, h in enumerate(header)})


def compare_runs(tables: Sequence[TraceTable], path=None) -> str:
    """Wide CSV of the averaged columns of several runs on their common iterations.

    Runs of different length are cut to the shortest one; runs logged on
    different iteration grids are restricted to the iterations they share.
    """
    if not tables:
        raise ValueError("compare_runs needs at least one trace")
    common = tables[0].iterations
    for tb in tables[1:]:
        common = np.intersect1d(common, tb.iterations)
    header = ["iteration"]
    cols = []
    for tb in tables:
        keep = np.isin(tb.iterations, common)
        for prefix in ("avg_ndcg", "avg_ap"):
            key, values = tb.column(prefix)
            header.append(f"{tb.name}:{key}")
            cols.append(values[keep])
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for i, it in enumerate(common):
        wr.writerow([int(it), *(_fmt(float(c[i])) for c in cols)])
    text = buf.getvalue()
    if path is not None:
        _write_text(path, text)
    return text


# ---------------------------------------------------------------------------
# Learning-rate sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    eta: float
    avg_ndcg: float
    avg_ap: float
    score: float


@dataclass
class SweepResult:
    rows: list
    metric: str
    window: Optional[int]

    @property
    def best(self) -> SweepRow:
        # first row wins ties, so the order of ``etas`` breaks them
        return max(self.rows, key=lambda r: (r.score, -self.rows.index(r)))

    def table(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["eta", "avg_ndcg", "avg_ap", "score", "best"])
        best = self.best
        for r in self.rows:
            wr.writerow([repr(r.eta), _fmt(r.avg_ndcg), _fmt(r.avg_ap), _fmt(r.score), int(r is best)])
        return buf.getvalue()


def _sweep_one(args):
    cfg, metric, window = args
    tr = run_experiment(cfg, write=False).trace
    inst = tr.ndcg if metric == "ndcg" else tr.ap
    if window is None:
        score = float((tr.avg_ndcg if metric == "ndcg" else tr.avg_ap)[-1])
    else:
        score = float(np.nanmean(inst[-window:]))
    return SweepRow(cfg.eta, float(tr.avg_ndcg[-1]), float(tr.avg_ap[-1]), score)


def sweep_eta(cfg: ExperimentConfig, etas: Sequence[float], metric: str = "ndcg",
              window: Optional[int] = 10, workers: int = 1) -> SweepResult:
    """Run ``cfg`` once per learning rate and pick the best.

    The selection score is the mean per-round ``metric`` over the last
    ``window`` rounds, or the final time-averaged value when ``window`` is
    None. Runs are independent and may be spread over ``workers`` processes.
    """
    if not etas:
        raise ValueError("sweep needs at least one eta")
    if metric not in ("ndcg", "ap"):
        raise ValueError("metric must be 'ndcg' or 'ap'")
    if window is not None and window < 1:
        raise ValueError("window must be positive")
    jobs = [(cfg.replace(eta=float(e), trace_path="", meta_path="", audit_path="", model_path=""),
             metric, window) for e in etas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    return SweepResult(rows, metric, window)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

MODEL_HEADER = "rankmodel v1"


def save_model(model, path) -> None:
    """Write weights as ``rankmodel v1 d=<dim>`` followed by one value per line."""
    w = np.asarray(model.w if isinstance(model, RankingModel) else model, dtype=np.float64)
    body = "".join(f"{x:.17g}\n" for x in w)
    _write_text(path, f"{MODEL_HEADER} d={w.shape[0]}\n{body}")


def load_model(path, d: Optional[int] = None) -> RankingModel:
    """Read a model file; ``d`` (if given) must match the stored dimension."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    head = lines[0].split() if lines else []
    if len(head) != 3 or " ".join(head[:2]) != MODEL_HEADER or not head[2].startswith("d="):
        raise ValueError(f"{path}: expected header '{MODEL_HEADER} d=<dim>'")
    try:
        dim = int(head[2][2:])
        w = np.array([float(x) for x in lines[1:] if x.strip()], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if w.shape[0] != dim:
        raise ValueError(f"{path}: header says d={dim} but {w.shape[0]} values follow")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{path}: non-finite weight")
    if d is not None and d != dim:
        raise ValueError(f"{path}: model has d={dim} but the data has d={d}")
    return RankingModel(w=w)

