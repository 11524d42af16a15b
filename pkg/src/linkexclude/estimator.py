"""Scikit-learn style link predictor wrapping sampler, GNN and evaluation."""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .audit import leakage_check
from .gnn import ModelParams, dot_decoder, gnn_forward, init_params, train_step
from .graph import Graph
from .metrics import RankedEval, evaluate
from .sampling import (
    EdgeBatchSampler,
    EdgeSplit,
    ExclusionPolicy,
    default_delta,
    match_random_rate,
)
from .validation import check_graph, check_pairs, check_split

logger = logging.getLogger(__name__)


def resolve_policy(policy: str, g_train: Graph, split: EdgeSplit, delta=None, rate=None) -> ExclusionPolicy:
    """Turn a policy name plus optional knobs into a concrete policy.

    ``lowdeg`` without ``delta`` uses the rounded average train degree;
    ``random`` without ``rate`` matches the low-degree rule's drop rate.
    """
    policy = policy.lower()
    if policy in ("none", "all"):
        return ExclusionPolicy(policy)
    if delta is None:
        delta = default_delta(g_train)
    if policy == "lowdeg":
        return ExclusionPolicy.low_degree(delta)
    if policy == "random":
        if rate is None:
            rate = match_random_rate(g_train, split, delta)
        return ExclusionPolicy.random(rate)
    raise ValueError(f"unknown policy {policy!r}")


class LinkPredictor(BaseEstimator):
    """GNN encoder + dot-product decoder trained on mini-batches of target edges.

    ``fit`` trains on ``split.train`` over the train-only graph, evaluates on
    validation after every epoch and keeps the weights of the best
    validation epoch. Validation always runs on a graph with validation and
    test edges removed.

    Parameters
    ----------
    arch : {"gcn", "sage"}
    num_layers, hidden_dim, out_dim : int
        Encoder depth and widths.
    policy : {"none", "all", "random", "lowdeg"}
        Training-time target exclusion.
    delta : float, optional
        Degree threshold for ``lowdeg`` (default: rounded average degree).
    rate : float, optional
        Drop rate for ``random`` (default: matched to ``lowdeg``).
    batch_size, hops, negs_per_pos : int
        Sampler settings; ``hops`` defaults to ``num_layers``.
    epochs, lr, momentum :
        SGD schedule.
    add_self_loops : bool
    keep_valid : bool
        Keep validation edges in the test-time inference graph.
    eval_mode : {"fixed", "exhaustive"}
    select_metric : str
        Validation metric used to pick the best epoch.
    seed : int
    """

    def __init__(
        self,
        arch="sage",
        num_layers=2,
        hidden_dim=64,
        out_dim=64,
        policy="lowdeg",
        delta=None,
        rate=None,
        batch_size=256,
        hops=None,
        negs_per_pos=1,
        epochs=10,
        lr=0.01,
        momentum=0.9,
        add_self_loops=False,
        keep_valid=True,
        eval_mode="fixed",
        select_metric="mrr",
        seed=0,
    ):
        self.arch = arch
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.policy = policy
        self.delta = delta
        self.rate = rate
        self.batch_size = batch_size
        self.hops = hops
        self.negs_per_pos = negs_per_pos
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.add_self_loops = add_self_loops
        self.keep_valid = keep_valid
        self.eval_mode = eval_mode
        self.select_metric = select_metric
        self.seed = seed

    def fit(self, graph: Graph, split: EdgeSplit, features: np.ndarray | None = None):
        graph = check_graph(graph, features)
        split = check_split(split, graph)
        X = graph.features
        g_train = split.train_graph(graph)
        self.policy_ = resolve_policy(self.policy, g_train, split, self.delta, self.rate)
        hops = self.num_layers if self.hops is None else self.hops
        sampler = EdgeBatchSampler(
            g_train, split, self.batch_size, hops, self.policy_, self.negs_per_pos, self.seed
        )
        params = init_params(
            self.arch,
            X.shape[1],
            self.hidden_dim,
            self.out_dim,
            self.num_layers,
            self.add_self_loops,
            seed=np.random.default_rng([self.seed, 7919]),
        )
        velocity = params.zeros_like()
        g_valid, _ = leakage_check(graph, split, keep_valid=False)

        self.history_ = []
        best_score, best_params, best_epoch = -np.inf, params.copy(), -1
        for epoch in range(self.epochs):
            losses = []
            for batch in sampler.epoch(epoch):
                params, loss = train_step(batch, X, params, self.lr, self.momentum, velocity)
                losses.append(loss)
            record = {"epoch": epoch, "loss": float(np.mean(losses))}
            if len(split.valid):
                res = evaluate(params, g_valid, split, self.eval_mode, which="valid", seed=self.seed)
                record.update({f"valid_{k}": v for k, v in res.metrics.items()})
                score = res.metrics[self.select_metric]
            else:
                score = -record["loss"]
            if score > best_score:
                best_score, best_params, best_epoch = score, params.copy(), epoch
            self.history_.append(record)
            logger.debug("epoch %d: %s", epoch, record)

        self.params_ = best_params
        self.last_params_ = params
        self.best_epoch_ = best_epoch
        self.n_features_in_ = X.shape[1]
        return self

    def embed(self, graph: Graph, features: np.ndarray | None = None) -> np.ndarray:
        check_is_fitted(self, "params_")
        graph = check_graph(graph, features)
        return gnn_forward(graph, graph.features, self.params_)

    def decision_function(self, pairs, graph: Graph, features: np.ndarray | None = None) -> np.ndarray:
        """Raw dot-product scores for node pairs, embedded on ``graph``."""
        E = self.embed(graph, features)
        return dot_decoder(E, check_pairs(pairs, len(E)))

    def predict_proba(self, pairs, graph: Graph, features: np.ndarray | None = None) -> np.ndarray:
        p = expit(self.decision_function(pairs, graph, features))
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, pairs, graph: Graph, features: np.ndarray | None = None) -> np.ndarray:
        return (self.decision_function(pairs, graph, features) > 0).astype(np.int64)

    def evaluate(
        self,
        graph: Graph,
        split: EdgeSplit,
        mode: str | None = None,
        ks=(1, 10, 50),
        *,
        allow_leakage: bool = False,
        sanitize: bool = True,
    ) -> RankedEval:
        """Test-split evaluation.

        With ``sanitize`` the graph first goes through the leakage check
        (honouring ``keep_valid``); otherwise ``graph`` is used as given and
        :func:`~linkexclude.metrics.evaluate` enforces the test-leak guard.
        """
        check_is_fitted(self, "params_")
        graph = check_graph(graph)
        if sanitize:
            graph, _ = leakage_check(graph, split, self.keep_valid)
        return evaluate(
            self.params_,
            graph,
            split,
            mode or self.eval_mode,
            ks,
            allow_leakage=allow_leakage,
            seed=self.seed,
        )

    def score(self, graph: Graph, split: EdgeSplit) -> float:
        """Test MRR on the leakage-checked inference graph."""
        return self.evaluate(graph, split).metrics["mrr"]
