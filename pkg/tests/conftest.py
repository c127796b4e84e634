import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# Independent oracles written straight from the formulas, one loop at a time.

def oracle_ranking(s):
    return sorted(range(len(s)), key=lambda i: (-s[i], i))


def oracle_dcg(order, R, k):
    return sum((2.0 ** R[doc] - 1.0) / math.log2(pos + 2) for pos, doc in enumerate(order[:k]))


def oracle_ndcg(s, R, k=None):
    k = len(R) if k is None else k
    z = oracle_dcg(sorted(range(len(R)), key=lambda i: -R[i]), R, k)
    return 1.0 if z == 0 else oracle_dcg(oracle_ranking(s), R, k) / z


def oracle_ap(s, R):
    hits, total = 0, 0.0
    for pos, doc in enumerate(oracle_ranking(s), start=1):
        if R[doc]:
            hits += 1
            total += hits / pos
    return total / sum(R)


def oracle_slam(s, R, v, margin=1.0):
    total = 0.0
    for i in range(len(R)):
        c = 0.0
        for j in range(len(R)):
            if R[i] > R[j]:
                c = max(c, margin + s[j] - s[i])
        total += v[i] * c
    return total


@st.composite
def instances(draw, min_m=2, max_m=10, max_grade=4, binary=False):
    m = draw(st.integers(min_m, max_m))
    top = 1 if binary else max_grade
    R = np.array(draw(st.lists(st.integers(0, top), min_size=m, max_size=m)), dtype=np.int64)
    s = np.array(draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=m, max_size=m)))
    return s, R


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one ``PASS``/``FAIL`` line for an acceptance criterion and print it."""

    def _report(number: int, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} {number}: {detail}"
        request.config.acceptance_lines.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        print(line)
        return passed

    return _report
