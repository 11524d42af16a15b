"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .graph import Graph, canonical_edges
from .sampling import EdgeSplit


def check_graph(graph, features=None, *, require_features: bool = True) -> Graph:
    """Return a :class:`Graph` carrying features, attaching ``features`` if given."""
    if not isinstance(graph, Graph):
        raise TypeError(f"expected Graph, got {type(graph).__name__}")
    if features is not None:
        graph = graph.with_features(features)
    if require_features and graph.features is None:
        raise ValueError("graph has no node features")
    if graph.features is not None and not np.isfinite(graph.features).all():
        raise ValueError("node features contain non-finite values")
    return graph


def check_pairs(pairs, num_nodes: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise ValueError(f"pair ids must lie in [0, {num_nodes})")
    return pairs


def check_split(split, graph: Graph) -> EdgeSplit:
    """Validate ids and disjointness; returns the split unchanged."""
    if not isinstance(split, EdgeSplit):
        raise TypeError(f"expected EdgeSplit, got {type(split).__name__}")
    for name in ("train", "valid", "test"):
        edges = canonical_edges(getattr(split, name))
        if len(edges) and (edges.min() < 0 or edges.max() >= graph.num_nodes):
            raise ValueError(f"{name} split references nodes outside the graph")
        if len(edges) and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError(f"{name} split contains a self-loop")
    if len(split.train) == 0:
        raise ValueError("train split is empty")
    split.check_disjoint(graph.num_nodes)
    return split
