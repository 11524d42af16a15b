import numpy as np
import pytest
from hypothesis import strategies as st

from linkexclude.graph import Graph


@pytest.fixture
def p4():
    return Graph.from_edges([(0, 1), (1, 2), (2, 3)], 4)


@pytest.fixture
def triangle():
    return Graph.from_edges([(0, 1), (1, 2), (0, 2)], 3)


@pytest.fixture
def star4():
    return Graph.from_edges([(0, i) for i in range(1, 5)], 5)


@st.composite
def graphs(draw, max_nodes=30, min_nodes=2, max_edges=80):
    """Random simple undirected graphs as (num_nodes, canonical edge array)."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = draw(
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1]),
            max_size=max_edges,
        )
    )
    return Graph.from_edges(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), n)


def random_graph(rng, n, p):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(np.stack([iu[keep], ju[keep]], axis=1), n)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome, props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, outcome, detail in sorted(lines):
            verdict = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"criterion {number:2d} {verdict}: {detail}")
