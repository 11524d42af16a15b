import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from linkexclude.estimator import LinkPredictor, resolve_policy
from linkexclude.graph import Graph
from linkexclude.metrics import LeakageError
from linkexclude.sampling import EdgeSplit, ExclusionPolicy
from linkexclude.synthetic import make_synthetic

SMALL = dict(arch="sage", num_layers=2, hidden_dim=8, out_dim=8, epochs=3, batch_size=64, lr=0.05)


@pytest.fixture(scope="module")
def fitted():
    g, split = make_synthetic("power-law", seed=0, n=300, n_neg=20)
    return g, split, LinkPredictor(**SMALL).fit(g, split)


def test_params_round_trip_through_clone():
    model = LinkPredictor(**SMALL)
    assert clone(model).get_params() == model.get_params()
    assert model.set_params(epochs=7).epochs == 7


def test_fit_records_history_and_best_epoch(fitted):
    _, _, model = fitted
    assert len(model.history_) == 3
    assert 0 <= model.best_epoch_ < 3
    best = max(model.history_, key=lambda r: r["valid_mrr"])
    assert best["epoch"] == model.best_epoch_


def test_lowdeg_default_delta_is_rounded_average(fitted):
    g, split, model = fitted
    g_train = split.train_graph(g)
    expected = int(np.floor(2 * g_train.num_edges / g_train.num_nodes + 0.5))
    assert model.policy_ == ExclusionPolicy.low_degree(expected)


def test_random_rate_matches_lowdeg():
    g = Graph.from_edges([(0, 1), (1, 2), (2, 3)], 4)
    split = EdgeSplit(g.edges, np.empty((0, 2)), np.empty((0, 2)))
    assert resolve_policy("random", g, split, delta=2).rate == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        resolve_policy("sometimes", g, split)


def test_predictions(fitted):
    g, split, model = fitted
    pairs = split.test[:5]
    proba = model.predict_proba(pairs, g)
    assert proba.shape == (5, 2) and np.allclose(proba.sum(axis=1), 1)
    assert set(model.predict(pairs, g).tolist()) <= {0, 1}


def test_evaluate_sanitizes_by_default(fitted):
    g, split, model = fitted
    safe = model.evaluate(g, split)
    assert not safe.leakage
    with pytest.raises(LeakageError):
        model.evaluate(g, split, sanitize=False)
    leaky = model.evaluate(g, split, sanitize=False, allow_leakage=True)
    assert leaky.leakage


def test_same_seed_same_model(fitted):
    g, split, model = fitted
    again = LinkPredictor(**SMALL).fit(g, split)
    assert again.params_.allclose(model.params_)
    assert again.score(g, split) == model.score(g, split)


def test_unfitted_model_raises():
    g, split = make_synthetic("path", n=5)
    with pytest.raises(NotFittedError):
        LinkPredictor().evaluate(g, split)


def test_fit_validates_inputs():
    g, split = make_synthetic("path", n=5)
    with pytest.raises(ValueError):
        LinkPredictor(**SMALL).fit(Graph.from_edges(g.edges, g.num_nodes), split)
    bad = EdgeSplit(split.train, split.train, split.test)
    with pytest.raises(ValueError):
        LinkPredictor(**SMALL).fit(g, bad)
