import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from linkexclude.audit import AuditReport, LeakageGuard, assert_no_test_leakage, leakage_check
from linkexclude.graph import Graph
from linkexclude.sampling import EdgeSplit

from conftest import graphs, random_graph

EMPTY = np.empty((0, 2), dtype=np.int64)


def tri_split():
    return EdgeSplit(np.array([[0, 1]]), np.array([[0, 2]]), np.array([[1, 2]]))


def test_triangle_drop_both(triangle):
    g, rep = leakage_check(triangle, tri_split(), keep_valid=False)
    assert g.edge_set() == {(0, 1)}
    assert rep.test_present and rep.valid_present
    assert (rep.removed_test, rep.removed_valid) == (1, 1)
    assert rep.verdict == "leaked-and-fixed"


def test_triangle_keep_valid(triangle):
    g, rep = leakage_check(triangle, tri_split(), keep_valid=True)
    assert g.edge_set() == {(0, 1), (0, 2)}
    assert rep.removed_valid == 0 and rep.removed_test == 1


def test_clean_graph_is_untouched():
    g = Graph.from_edges([(0, 1)], 3)
    out, rep = leakage_check(g, tri_split(), keep_valid=False)
    assert out.edge_set() == g.edge_set()
    assert rep.verdict == "clean"


def test_reverse_orientation_counts_as_leak(triangle):
    split = EdgeSplit(np.array([[0, 1]]), EMPTY, np.array([[2, 1]]))
    _, rep = leakage_check(triangle, split, keep_valid=False)
    assert rep.test_present and rep.removed_test == 1


def test_missing_train_edges_warn(caplog):
    g = Graph.from_edges([(1, 2)], 3)
    _, rep = leakage_check(g, tri_split(), keep_valid=False)
    assert rep.train_missing == 1
    assert "absent" in caplog.text


def test_assert_no_test_leakage(triangle):
    split = tri_split()
    assert not assert_no_test_leakage(triangle, split)
    assert assert_no_test_leakage(leakage_check(triangle, split, True)[0], split)
    assert assert_no_test_leakage(triangle, EdgeSplit(triangle.edges, EMPTY, EMPTY))


def test_report_text_is_key_value(triangle):
    _, rep = leakage_check(triangle, tri_split(), keep_valid=False)
    lines = rep.to_text().splitlines()
    assert "verdict=leaked-and-fixed" in lines
    assert "keep_valid=false" in lines
    assert all("=" in line for line in lines)


def test_guard_follows_estimator_protocol(triangle):
    guard = LeakageGuard(keep_valid=True)
    assert clone(guard).get_params() == {"keep_valid": True}
    out = guard.fit(tri_split()).transform(triangle)
    assert out.edge_set() == {(0, 1), (0, 2)}
    assert isinstance(guard.report_, AuditReport)


def random_instance(rng):
    n = int(rng.integers(3, 12))
    full = random_graph(rng, n, 0.5)
    if full.num_edges < 3:
        full = Graph.from_edges([(0, 1), (1, 2), (0, 2)], n)
    labels = rng.integers(0, 3, size=full.num_edges)
    split = EdgeSplit(full.edges[labels == 0], full.edges[labels == 1], full.edges[labels == 2])
    # sometimes audit a graph that already lacks some split edges
    keep = rng.random(full.num_edges) < 0.8
    return Graph.from_edges(full.edges[keep], n), split


def test_randomized_reference_and_laws():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g, split = random_instance(rng)
        edges = g.edge_set()
        test, valid = {tuple(e) for e in split.test.tolist()}, {tuple(e) for e in split.valid.tolist()}
        for keep_valid in (False, True):
            out, rep = leakage_check(g, split, keep_valid)
            ref = edges - test - (set() if keep_valid else valid)
            assert out.edge_set() == ref
            assert rep.test_present == bool(edges & test)
            assert rep.valid_present == bool(edges & valid)
            again, rep2 = leakage_check(out, split, keep_valid)
            assert again.edge_set() == out.edge_set()
            assert rep2.removed_test == rep2.removed_valid == 0
            assert g.num_edges - out.num_edges == rep.removed_test + rep.removed_valid
        assert leakage_check(g, split, True)[0].edge_set() >= leakage_check(g, split, False)[0].edge_set()


@settings(max_examples=60)
@given(graphs(max_nodes=15), st.data(), st.booleans())
def test_idempotent_and_conservative(g, data, keep_valid):
    labels = data.draw(st.lists(st.integers(0, 2), min_size=g.num_edges, max_size=g.num_edges))
    labels = np.asarray(labels, dtype=np.int64)
    split = EdgeSplit(g.edges[labels == 0], g.edges[labels == 1], g.edges[labels == 2])
    out, rep = leakage_check(g, split, keep_valid)
    assert out.edge_set() <= g.edge_set()
    assert assert_no_test_leakage(out, split)
    again, rep2 = leakage_check(out, split, keep_valid)
    assert again.edge_set() == out.edge_set()
    if not keep_valid:
        assert rep2.verdict == "clean"
    assert rep.verdict == ("clean" if not (rep.valid_present or rep.test_present) else "leaked-and-fixed")
