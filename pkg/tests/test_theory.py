import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkexclude.gnn import ModelParams, init_params, propagation_matrix
from linkexclude.graph import Graph
from linkexclude.sampling import EdgeSplit, ExclusionPolicy
from linkexclude.synthetic import make_synthetic
from linkexclude.theory import (
    closed_form_drop,
    degree_change_profile,
    delta_sweep,
    effect_ratio_experiment,
    expected_effect_ratio,
    influence_jacobian,
    path_product_jacobian,
    sweep_csv,
    theorem_graph,
)

EMPTY = np.empty((0, 2), dtype=np.int64)


def test_closed_form_values():
    assert closed_form_drop(2) == pytest.approx(0.292893, abs=1e-6)
    assert closed_form_drop(5) == pytest.approx(0.105573, abs=1e-6)
    drops = [closed_form_drop(d) for d in range(2, 200)]
    assert all(b < a for a, b in zip(drops, drops[1:]))


def test_mean_aggregation_ratio_is_one():
    assert expected_effect_ratio(7, -1.0) == 1.0
    assert closed_form_drop(7, "sage") == 0.0


def test_jacobian_single_edge_identity():
    g = Graph.from_edges([(0, 1)], 2)
    params = ModelParams("gcn", [2, 2], [{"W": np.eye(2)}])
    X = np.array([[0.3, -0.2], [0.5, 0.1]])
    assert influence_jacobian(g, params, 0, 1, 0, 0, X) == pytest.approx(1.0, abs=1e-9)


def test_jacobian_zero_outside_receptive_field():
    g = Graph.from_edges([(0, 1), (1, 2), (2, 3)], 4)
    X = np.random.default_rng(0).normal(size=(4, 3))
    params = init_params("gcn", 3, 4, 3, 2, seed=1)
    assert influence_jacobian(g, params, 0, 3, 1, 2, X) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2]))
def test_jacobian_matches_single_path_product(seed, layers):
    # 3-node path 0-1-2: with one layer the walk is 0<-1, with two it is 0<-1<-2
    rng = np.random.default_rng(seed)
    g = Graph.from_edges([(0, 1), (1, 2)], 3)
    X = rng.normal(size=(3, 3))
    params = init_params("gcn", 3, 4, 3, layers, seed=seed)
    source = 1 if layers == 1 else 2
    path = [0, 1] if layers == 1 else [0, 1, 2]
    prop = propagation_matrix(g, "gcn").toarray()
    s, t = int(rng.integers(3)), int(rng.integers(3))
    expected = path_product_jacobian(params, prop, X, path, s, t)
    got = influence_jacobian(g, params, 0, source, s, t, X)
    assert got == pytest.approx(expected, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_theorem_graph_shape(layers):
    g, h, k = theorem_graph(4, layers)
    assert g.degree(h) == 4
    # every neighbour of h reaches k in exactly layers - 1 further hops
    if layers == 1:
        assert k in g.neighbors(h)
    else:
        assert g.degree(k) == 4


@pytest.mark.parametrize("layers", [1, 2])
@pytest.mark.parametrize("d", [2, 5, 11])
def test_effect_ratio_agrees_with_closed_form(d, layers):
    m = effect_ratio_experiment(d, layers, trials=40, seed=3)
    assert abs(m.empirical - m.closed_form) < 0.05
    assert m.trials + m.discarded == 40


def test_sage_extension_ratio():
    m = effect_ratio_experiment(5, 2, trials=20, seed=0, arch="sage")
    assert m.closed_form == 0.0
    assert abs(m.empirical) < 1e-6


def test_lower_degree_loses_more_influence():
    low = effect_ratio_experiment(2, 2, trials=40, seed=1)
    high = effect_ratio_experiment(10, 2, trials=40, seed=1)
    assert low.empirical > high.empirical


def test_effect_ratio_rejects_tiny_degree():
    with pytest.raises(ValueError):
        effect_ratio_experiment(1, 1, trials=2)


def star_split(n):
    g = Graph.from_edges([(0, i) for i in range(1, n + 1)], n + 1)
    return g, EdgeSplit(g.edges, EMPTY, EMPTY)


def test_profile_on_star_under_all():
    g, split = star_split(6)
    prof = degree_change_profile(g, split, ExclusionPolicy.all(), batch_size=1, hops=1, epochs=1)
    leaves = prof.degrees == 1
    assert np.all(prof.changes[leaves] == 1.0)
    assert np.allclose(prof.changes[prof.degrees == 6], 1 / 6)


def test_profile_values_and_buckets():
    g, split = make_synthetic("power-law", seed=0, n=800)
    prof = degree_change_profile(split.train_graph(g), split, ExclusionPolicy.all(), 128, 1, 1, 0)
    assert np.all((prof.changes >= 0) & (prof.changes <= 1))
    assert prof.bucket_count.sum() == len(prof.changes)
    assert prof.spearman() < 0
    assert prof.to_csv().startswith("degree_lo,degree_hi,mean_change,count\n")


def test_profile_under_none_is_zero():
    g, split = star_split(4)
    prof = degree_change_profile(g, split, ExclusionPolicy.none(), 2, 1, 1, 0)
    assert np.all(prof.changes == 0)


SWEEP_MODEL = dict(arch="sage", num_layers=1, hidden_dim=8, out_dim=8, epochs=2, batch_size=64, lr=0.05)


def test_sweep_extremes_match_policies():
    from linkexclude.estimator import LinkPredictor

    g, split = make_synthetic("power-law", seed=0, n=200, n_neg=20)
    rows = delta_sweep(g, split, SWEEP_MODEL, [0, math.inf], [0])
    for policy, row in zip(("none", "all"), rows):
        ref = LinkPredictor(**dict(SWEEP_MODEL, policy=policy, seed=0)).fit(g, split)
        assert ref.evaluate(g, split).metrics["mrr"] == row.values[0]
    text = sweep_csv(rows, [0])
    assert text.splitlines()[0] == "delta,mean,std,seed_0"
    assert text.splitlines()[2].startswith("inf,")


def test_sweep_requires_sorted_deltas():
    g, split = make_synthetic("path", n=6)
    with pytest.raises(ValueError):
        delta_sweep(g, split, SWEEP_MODEL, [2, 1], [0])


def test_sweep_records_failed_cells():
    g, split = make_synthetic("power-law", seed=0, n=100, n_neg=10)
    rows = delta_sweep(g, split, dict(SWEEP_MODEL, lr=1e300), [0], [0, 1])
    assert set(rows[0].errors) == {0, 1}
    assert "error" in sweep_csv(rows, [0, 1])
