"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated under "acceptance criteria" at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from rankptron.datasets import (
    Adversary,
    RandomStream,
    RandomStreamConfig,
    SeparableStream,
    SeparableStreamConfig,
    separable_binary_stream,
)
from rankptron.harness import ExperimentConfig, cumulative_loss_bound, run_experiment, sweep_eta
from rankptron.learners import LearnerConfig, listnet_loss, run_classification_perceptron, run_stream
from rankptron.ranking import average_precision, binarize, brute_force_dcg_max, ideal_dcg_at_k, ndcg_at_k
from rankptron.slam import (
    canonicalize,
    slam_loss,
    slam_objective,
    surrogate_weights,
    weight_ratio_max,
    weights_ndcg_k,
)

# Separable stream shared by the convergence criteria; the validation seed is
# only used to pick the listwise perceptron's learning rate.
STREAM = dict(m=20, d=20, grades=5, margin=0.08, score_fraction=0.7)
TEST_SEED, VALIDATION_SEED = 0, 1
SLAM_ETAS = [1, 3, 10, 30, 100, 300]
LISTNET_ETAS = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 100]


def stream(seed=TEST_SEED):
    return SeparableStream(SeparableStreamConfig(**STREAM, seed=seed))


def experiment(**kw):
    base = dict(source="separable", seed=TEST_SEED, **STREAM)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def slam_eta():
    """Learning rate for the listwise perceptron, chosen on a validation stream."""
    res = sweep_eta(experiment(seed=VALIDATION_SEED, horizon=5000), SLAM_ETAS, window=None)
    return res.best.eta


def random_instances(n, rng, max_m=10):
    for _ in range(n):
        m = int(rng.integers(2, max_m + 1))
        yield rng.standard_normal(m), rng.integers(0, 5, m)


def surrogate(s, R, measure, k=None):
    c = canonicalize(None, R, s)
    return slam_loss(c.scores, c.grades, surrogate_weights(c.grades, measure, k))


def test_01_upper_bound_property(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 10_000:
        s, R = next(random_instances(1, rng))
        B = binarize(R)
        if B.sum() == 0:
            continue
        worst = max(worst, (1 - ndcg_at_k(s, R)) - surrogate(s, R, "ndcg"),
                    (1 - average_precision(s, B)) - surrogate(s, B, "ap"))
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    report(1, ok, f"listwise surrogate >= 1-NDCG and 1-AP on {checked} instances; "
                  f"worst excess {worst:.3g} (tol 1e-12); {elapsed:.1f}s (< 10s)")
    assert ok


def test_02_truncated_upper_bound(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for s, R in random_instances(10_000, rng):
        top = np.sort(R)[::-1]
        for k in range(1, len(R) + 1):
            if top[:k].max() == 0:
                continue
            worst = max(worst, (1 - ndcg_at_k(s, R, k)) - surrogate(s, R, "ndcg_k", k))
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 30
    report(2, ok, f"top-k surrogate >= 1-NDCG@k on {checked} (draw, k) pairs; "
                  f"worst excess {worst:.3g}; {elapsed:.1f}s (< 30s)")
    assert ok


def test_03_ideal_dcg_oracle(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 7))
        R = rng.integers(0, 5, m)
        k = int(rng.integers(1, m + 1))
        worst = max(worst, abs(ideal_dcg_at_k(R, k) - brute_force_dcg_max(R, k)))
    ok = worst <= 1e-12
    report(3, ok, f"sorted-grade ideal DCG == brute force on 1000 instances; max |diff| {worst:.3g}")
    assert ok


def test_04_self_bounding_audits(report):
    src = RandomStreamConfig(m=10, d=10, grades=5, seed=4)
    out = {}
    for algo in ("slam_perceptron", "pairwise_perceptron"):
        tr = run_stream(LearnerConfig(algo), RandomStream(src), 5000)
        upd = tr.updated
        out[algo] = (int(upd.sum()), int(np.sum(tr.grad_sq_norm[upd] > tr.grad_bound[upd] + 1e-9)))
    ok = all(v == 0 for _, v in out.values()) and all(n > 0 for n, _ in out.values())
    report(4, ok, "gradient-norm self-bounding on random stream, 5000 rounds: "
                  f"listwise {out['slam_perceptron'][1]} violations / {out['slam_perceptron'][0]} mistakes, "
                  f"pairwise {out['pairwise_perceptron'][1]} / {out['pairwise_perceptron'][0]}")
    assert ok


def test_05_listwise_constant_loss(report, slam_eta):
    t0 = time.perf_counter()
    res = run_experiment(experiment(horizon=20_000, eta=slam_eta), write=False)
    elapsed = time.perf_counter() - t0
    tr, audit = res.trace, res.audits[0]
    tail = tr.rml[-2000:]
    nz = np.nonzero(tr.rml)[0]
    avg = tr.avg_ndcg[-1]
    ok = (audit.kind == "slam_cumulative" and audit.passed and not tail.any()
          and avg >= 0.99 and elapsed < 60)
    report(5, ok, f"listwise perceptron (eta={slam_eta:g} from validation sweep), T=20000: "
                  f"cum loss {audit.observed:.4g} <= {audit.theoretical:.4g}; "
                  f"loss in last 10%: {np.count_nonzero(tail)} rounds (last mistake round "
                  f"{nz[-1] + 1 if nz.size else 0}); avg NDCG@10 {avg:.5f} (>= 0.99); {elapsed:.1f}s (< 60s)")
    assert ok


def test_06_pairwise_constant_loss(report):
    t0 = time.perf_counter()
    res = run_experiment(experiment(horizon=20_000, algorithm="pairwise_perceptron"), write=False)
    elapsed = time.perf_counter() - t0
    audit = res.audits[0]
    ok = audit.kind == "pairwise_cumulative" and audit.passed and elapsed < 60
    report(6, ok, f"pairwise perceptron, T=20000: cum loss {audit.observed:.4g} <= "
                  f"4R^2/gamma^2 = {audit.theoretical:.4g}; {elapsed:.1f}s (< 60s)")
    assert ok


def test_07_topk_bound(report):
    res = run_experiment(experiment(horizon=20_000, measure="ndcg_k", k=5), write=False)
    audit = res.audits[0]
    # independent recomputation: v_max from the top-5 weights of every streamed grade vector
    v_max, r_x = 1.0, 0.0
    for q, _ in zip(stream(), range(20_000)):
        v_max = max(v_max, weight_ratio_max(weights_ndcg_k(np.sort(q.grades)[::-1], 5)))
        r_x = max(r_x, float(np.linalg.norm(q.features, axis=1).max()))
    kind, bound = cumulative_loss_bound("slam_perceptron", "ndcg_k", 5, r_x,
                                        res.metadata["certified_margin"], v_max, STREAM["m"])
    ok = (audit.kind == kind == "slam_topk_cumulative" and audit.passed
          and math.isclose(bound, audit.theoretical, rel_tol=1e-12))
    report(7, ok, f"listwise perceptron with top-5 weights, T=20000: cum (1-NDCG@5) "
                  f"{audit.observed:.4g} <= 4kR^2 v_max/gamma^2 = {audit.theoretical:.4g} "
                  f"(v_max {v_max:.4g}, k=5)")
    assert ok


def test_08_adversary_lower_bound(report):
    gamma, radius = 0.125, 1.0
    details, ok = [], True
    for algo in ("slam_perceptron", "pairwise_perceptron"):
        adv = Adversary(radius=radius, margin=gamma, m=3)
        T = math.floor(radius ** 2 / gamma ** 2) - 1
        tr = run_stream(LearnerConfig(algo), adv, T, keep_predictions=True)
        ap_loss = ndcg_loss = 0.0
        for q, perm in zip(adv.revealed, tr.predictions):
            s = np.empty(3)
            s[perm] = -np.arange(3.0)
            ap_loss += 1 - average_precision(s, q.grades)
            ndcg_loss += 1 - ndcg_at_k(s, q.grades)
        w = adv.certificate()
        margins = [min(q.features[i] @ w - q.features[j] @ w
                       for i in range(3) for j in range(3) if q.grades[i] > q.grades[j])
                   for q in adv.revealed]
        exact = max(abs(mg - gamma) for mg in margins)
        floor = T * (1 - 1 / math.log2(3))
        this = (len(tr) == T == 63 and adv.d >= T + 1 and ap_loss >= T / 2 and ndcg_loss >= floor - 1e-9
                and np.linalg.norm(w) <= 1 and exact <= 1e-12)
        ok &= this
        details.append(f"{algo}: AP loss {ap_loss:.4g} >= {T / 2}, NDCG loss {ndcg_loss:.4g} >= "
                       f"{floor:.4g} (0.369T), |w*| {np.linalg.norm(w):.4g}, margin err {exact:.2g}")
    report(8, ok, "adversary T=63, d=64: " + "; ".join(details))
    assert ok


def test_09_pairwise_eta_invariance(report):
    seqs = []
    for eta in (0.1, 1.0, 10.0):
        tr = run_stream(LearnerConfig("pairwise_perceptron", eta=eta), stream(), 2000, keep_predictions=True)
        seqs.append(np.array(tr.predictions))
    ok = np.array_equal(seqs[0], seqs[1]) and np.array_equal(seqs[1], seqs[2])
    report(9, ok, "pairwise perceptron predicted permutations identical for eta in {0.1, 1, 10} "
                  "over 2000 rounds")
    assert ok


def test_10_classification_mistake_bound(report):
    gamma, radius = 0.1, 1.0
    X, y, _ = separable_binary_stream(10_000, 20, gamma, radius=radius, seed=10)
    _, mistakes = run_classification_perceptron(X, y)
    n = int(mistakes.sum())
    bound = radius ** 2 / gamma ** 2
    ok = n <= bound
    report(10, ok, f"classification perceptron, T=10000, gamma=0.1: {n} mistakes <= {bound:g}")
    assert ok


def test_11_gradient_checks(report):
    rng = np.random.default_rng(11)
    eps, worst_slam, worst_ln, n = 1e-6, 0.0, 0.0, 0
    while n < 100:
        m, d = int(rng.integers(2, 11)), int(rng.integers(1, 8))
        X, R, w = rng.standard_normal((m, d)), rng.integers(0, 5, m), rng.standard_normal(d)
        loss, g = slam_objective(w, X, R)
        if loss == 0.0:
            continue
        num = np.array([(slam_objective(w + eps * e, X, R)[0] - slam_objective(w - eps * e, X, R)[0])
                        / (2 * eps) for e in np.eye(d)])
        worst_slam = max(worst_slam, np.linalg.norm(num - g) / np.linalg.norm(g))
        s = X @ w
        _, gs = listnet_loss(s, R)
        gw = X.T @ gs
        num = np.array([(listnet_loss(X @ (w + eps * e), R)[0] - listnet_loss(X @ (w - eps * e), R)[0])
                        / (2 * eps) for e in np.eye(d)])
        worst_ln = max(worst_ln, np.linalg.norm(num - gw) / max(np.linalg.norm(gw), 1e-12))
        n += 1
    ok = worst_slam <= 1e-4 and worst_ln <= 1e-4
    report(11, ok, f"central differences at 100 points: max relative error listwise "
                   f"{worst_slam:.2g}, ListNet {worst_ln:.2g} (<= 1e-4)")
    assert ok


def test_12_baseline_ordering(report, slam_eta):
    T = 5000
    slam = run_stream(LearnerConfig("slam_perceptron", eta=slam_eta), stream(), T).avg_ndcg[-1]
    pair = run_stream(LearnerConfig("pairwise_perceptron"), stream(), T).avg_ndcg[-1]
    # the baseline gets its best learning rate on the test stream itself
    ln = {eta: run_stream(LearnerConfig("listnet_ogd", eta=eta), stream(), T).avg_ndcg[-1]
          for eta in LISTNET_ETAS}
    best_eta = max(ln, key=ln.get)
    ok = slam > ln[best_eta] and pair > ln[best_eta]
    report(12, ok, f"avg NDCG@10 at T=5000: listwise {slam:.5f}, pairwise {pair:.5f}, "
                   f"ListNet best {ln[best_eta]:.5f} (eta={best_eta:g})")
    assert ok
