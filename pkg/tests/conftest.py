from __future__ import annotations

from datetime import date

import numpy as np
import pytest
from hypothesis import strategies as st

from innercore.graph import SnapshotGraph

DAY = date(2022, 5, 8)


def make_graph(edges, day=DAY, nodes=None) -> SnapshotGraph:
    if not edges:
        return SnapshotGraph.from_edges(day, [], [], [], nodes=nodes)
    s, d, w = zip(*edges)
    return SnapshotGraph.from_edges(day, s, d, w, nodes=nodes)


def random_edges(rng: np.random.Generator, n: int, m: int, self_loops=False, weights=True):
    """``m`` random arcs over nodes ``0..n-1``; every node gets at least one arc."""
    edges = []
    order = rng.permutation(n)
    for k in range(n):
        a = int(order[k])
        b = int(order[(k + 1) % n])
        edges.append((a, b))
    while len(edges) < m:
        a, b = (int(x) for x in rng.integers(0, n, 2))
        if a == b and not self_loops:
            continue
        edges.append((a, b))
    w = rng.lognormal(0.0, 1.5, len(edges)) if weights else np.ones(len(edges))
    return [(a, b, float(x)) for (a, b), x in zip(edges, w)]


@st.composite
def edge_lists(draw, max_nodes=12, max_edges=40, self_loops=True, min_nodes=2):
    n = draw(st.integers(min_nodes, max_nodes))
    node = st.integers(0, n - 1)
    arcs = draw(st.lists(st.tuples(node, node), min_size=1, max_size=max_edges))
    if not self_loops:
        arcs = [(a, b) for a, b in arcs if a != b] or [(0, 1)]
    w = draw(st.lists(st.floats(0.01, 1e4, allow_nan=False), min_size=len(arcs), max_size=len(arcs)))
    return [(a, b, x) for (a, b), x in zip(arcs, w)]


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_RESULTS: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    mark = getattr(report, "_criterion", None)
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        notes = [f"{k}={v}" for k, v in report.user_properties]
        _RESULTS[mark] = [status, *notes]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep._criterion = f"{m.args[0]:>2}. {m.args[1]}"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k.split(".")[0])):
        status, *notes = _RESULTS[key]
        line = f"{status} {key}"
        if notes:
            line += "  (" + ", ".join(notes) + ")"
        terminalreporter.write_line(line)


# --------------------------------------------------------------------------
# worked-example occurrence fixture: counts per node over three days

OCCURRENCES = {
    "m4": {1: (5, 4, 3), 2: (15, 0, 9), 3: (0, 0, 0)},
    "m5": {1: (25, 0, 0), 2: (0, 7, 13), 3: (0, 23, 35)},
}
# printed scores, rounded to two decimals: (motif, node, day) -> score
PRINTED_SCORES = {
    ("m4", 1, 1): 0.0, ("m4", 1, 2): 0.0, ("m4", 1, 3): 0.0,
    ("m4", 2, 1): 0.13, ("m4", 2, 3): 0.13,
    ("m5", 1, 1): 0.48,
    ("m5", 2, 2): 0.04, ("m5", 2, 3): 0.05,
    ("m5", 3, 2): 0.14, ("m5", 3, 3): 0.13,
}


def occurrence_counts(m5_role=None):
    """MotifCounts for days 1..3; m4 maps to C4, m5 to ``m5_role`` (default: pooled C5)."""
    from innercore.motif import CenterRole, MotifCounts
    from innercore.ranking import COMBINED_M5

    roles = {"m4": CenterRole.C4, "m5": m5_role or COMBINED_M5}
    out = []
    for t in range(3):
        counts = {}
        for m, per_node in OCCURRENCES.items():
            for v, series in per_node.items():
                if series[t]:
                    counts[(roles[m], v)] = series[t]
        out.append(MotifCounts(t + 1, counts))
    return out, roles
