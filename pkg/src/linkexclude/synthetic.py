"""Seeded desk-scale benchmark graphs with 70/10/20 edge splits.

``power-law`` is a community-structured Chung-Lu graph; ``sparse`` mimics a
query/product graph with average degree near 1.4. Features are noisy
community centroids, so links are predictable from features and structure.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, unique_edges
from .sampling import EdgeSplit

KINDS = ("path", "star", "power-law", "sparse")
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


def split_edges(edges: np.ndarray, rng, fractions=SPLIT_FRACTIONS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded random partition of ``edges`` into train/valid/test."""
    edges = unique_edges(edges)
    order = rng.permutation(len(edges))
    n_train = int(round(fractions[0] * len(edges)))
    n_valid = int(round(fractions[1] * len(edges)))
    tr = order[:n_train]
    va = order[n_train : n_train + n_valid]
    te = order[n_train + n_valid :]
    return unique_edges(edges[tr]), unique_edges(edges[va]), unique_edges(edges[te])


def corrupt_negatives(
    positives: np.ndarray,
    num_nodes: int,
    known_keys: np.ndarray,
    n_neg: int,
    rng,
    candidates=None,
    keep_first: bool = False,
) -> np.ndarray:
    """``(len(positives), n_neg, 2)`` blocks corrupting one endpoint.

    The kept endpoint is random, or always the first with ``keep_first``.
    Replacement nodes are drawn from ``candidates`` (default: all nodes)
    and never form a known edge or a self-loop. If the kept endpoint has no
    valid partner the other endpoint is kept instead.

    Raises:
        ValueError: neither endpoint of some positive has a valid partner.
    """
    if candidates is None:
        candidates = np.arange(num_nodes)
    candidates = np.asarray(candidates, dtype=np.int64)
    known = set(known_keys.tolist())
    out = np.empty((len(positives), n_neg, 2), dtype=np.int64)

    def allowed(head):
        keys = np.minimum(head, candidates) * num_nodes + np.maximum(head, candidates)
        return candidates[(candidates != head) & ~np.isin(keys, known_keys)]

    for i, (u, v) in enumerate(positives):
        head = u if keep_first or rng.random() < 0.5 else v
        got = 0
        while got < n_neg:
            w = rng.choice(candidates, size=2 * (n_neg - got))
            before = got
            for x in w.tolist():
                if x == head:
                    continue
                a, b = (head, x) if head < x else (x, head)
                if a * num_nodes + b in known:
                    continue
                out[i, got] = (a, b)
                got += 1
                if got == n_neg:
                    break
            if got == before:
                # a whole round missed: fall back to the explicit partner list
                pool = allowed(head)
                if len(pool) == 0 and not keep_first:
                    head = v if head == u else u
                    pool = allowed(head)
                if len(pool) == 0:
                    raise ValueError(f"no valid negative partner for positive ({u}, {v})")
                x = rng.choice(pool, size=n_neg - got)
                out[i, got:] = np.stack([np.minimum(head, x), np.maximum(head, x)], axis=1)
                got = n_neg
    return out


def _features(
    communities: np.ndarray, n_comm: int, dim: int, noise: float, rng, types=None, id_dim: int = 0
) -> np.ndarray:
    """Noisy community centroids plus an optional node-specific block.

    Each node type gets its own centroid table. The ``id_dim`` block is pure
    per-node noise: it carries no link signal but makes nodes unique.
    """
    if types is None:
        types = np.zeros(len(communities), dtype=np.int64)
    n_types = int(types.max()) + 1
    centroids = rng.normal(size=(n_types, n_comm, dim))
    X = centroids[types, communities] + noise * rng.normal(size=(len(communities), dim))
    if id_dim:
        X = np.concatenate([X, rng.normal(size=(len(communities), id_dim))], axis=1)
    if n_types > 1:
        X = np.concatenate([X, np.eye(n_types)[types]], axis=1)
    return X


def _power_law_graph(n, avg_degree, exponent, n_comm, p_in, dim, noise, id_dim, rng):
    communities = rng.integers(0, n_comm, size=n)
    weights = (np.arange(n) + 1.0) ** (-1.0 / (exponent - 1.0))
    weights = weights[rng.permutation(n)]
    m = int(round(avg_degree * n / 2))
    prob = weights / weights.sum()
    members = [np.flatnonzero(communities == c) for c in range(n_comm)]
    member_prob = [prob[idx] / prob[idx].sum() for idx in members]

    u = rng.choice(n, size=m, p=prob)
    v = rng.choice(n, size=m, p=prob)
    inside = rng.random(m) < p_in
    for c in range(n_comm):
        sel = np.flatnonzero(inside & (communities[u] == c))
        v[sel] = rng.choice(members[c], size=len(sel), p=member_prob[c])
    keep = u != v
    edges = unique_edges(np.stack([u[keep], v[keep]], axis=1))
    X = _features(communities, n_comm, dim, noise, rng, id_dim=id_dim)
    return edges, X


def _sparse_graph(n, avg_degree, query_frac, n_comm, p_in, dim, noise, id_dim, rng):
    n_q = int(round(query_frac * n))
    n_p = n - n_q
    communities = rng.integers(0, n_comm, size=n)
    products = np.arange(n_q, n)
    pop = (np.arange(n_p) + 1.0) ** -0.8
    pop = pop[rng.permutation(n_p)]
    members = [products[communities[products] == c] for c in range(n_comm)]
    member_prob = [pop[m - n_q] / pop[m - n_q].sum() for m in members]

    target_edges = avg_degree * n / 2
    # every query gets >= 1 product; extra links are geometric
    extra_mean = max(target_edges / n_q - 1.0, 1e-9)
    deg = rng.geometric(1.0 / (1.0 + extra_mean), size=n_q)
    src, dst = [], []
    for q in range(n_q):
        for _ in range(deg[q]):
            c = communities[q] if rng.random() < p_in else rng.integers(n_comm)
            if len(members[c]) == 0:
                continue
            p = rng.choice(members[c], p=member_prob[c])
            src.append(q)
            dst.append(p)
    edges = unique_edges(np.stack([src, dst], axis=1))
    types = (np.arange(n) >= n_q).astype(np.int64)
    X = _features(communities, n_comm, dim, noise, rng, types, id_dim)
    return edges, X, products


def make_synthetic(kind: str, seed: int = 0, n_neg: int = 100, **size) -> tuple[Graph, EdgeSplit]:
    """Generate a graph (all edges, with features) and a seeded 70/10/20 split.

    Size parameters per kind:

    * ``path``: ``n`` (default 4)
    * ``star``: ``n`` leaves (default 5)
    * ``power-law``: ``n`` (10_000), ``avg_degree`` (4), ``exponent`` (2.2),
      ``communities`` (16), ``p_in`` (0.8), ``dim`` (16), ``noise`` (1.0)
    * ``sparse``: ``n`` (5_000), ``avg_degree`` (1.4), ``query_frac`` (0.6),
      ``communities`` (16), ``p_in`` (0.9), ``dim`` (16), ``noise`` (0.5),
      ``id_dim`` (32)

    Valid/test positives get ``n_neg`` fixed corruption negatives each.
    """
    kind = kind.lower()
    if kind == "sparse-bipartite-ish":
        kind = "sparse"
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng([seed, KINDS.index(kind)])
    candidates = None
    if kind == "path":
        n = int(size.get("n", 4))
        if n < 2:
            raise ValueError("path needs n >= 2")
        edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
        X = rng.normal(size=(n, int(size.get("dim", 4))))
    elif kind == "star":
        leaves = int(size.get("n", 5))
        if leaves < 1:
            raise ValueError("star needs n >= 1")
        n = leaves + 1
        edges = np.stack([np.zeros(leaves, dtype=np.int64), np.arange(1, n)], axis=1)
        X = rng.normal(size=(n, int(size.get("dim", 4))))
    elif kind == "power-law":
        n = int(size.get("n", 10_000))
        if n < 10:
            raise ValueError("power-law needs n >= 10")
        edges, X = _power_law_graph(
            n,
            float(size.get("avg_degree", 4.0)),
            float(size.get("exponent", 2.2)),
            int(size.get("communities", 16)),
            float(size.get("p_in", 0.8)),
            int(size.get("dim", 16)),
            float(size.get("noise", 1.0)),
            int(size.get("id_dim", 0)),
            rng,
        )
    else:
        n = int(size.get("n", 5_000))
        if n < 10:
            raise ValueError("sparse needs n >= 10")
        edges, X, candidates = _sparse_graph(
            n,
            float(size.get("avg_degree", 1.4)),
            float(size.get("query_frac", 0.6)),
            int(size.get("communities", 16)),
            float(size.get("p_in", 0.9)),
            int(size.get("dim", 16)),
            float(size.get("noise", 0.5)),
            int(size.get("id_dim", 32)),
            rng,
        )
    g = Graph.from_edges(edges, n, X)
    train, valid, test = split_edges(g.edges, rng)
    known = g.keys
    # sparse: queries have the lower ids, so keep the query and swap the product
    keep_first = candidates is not None
    valid_neg = corrupt_negatives(valid, n, known, n_neg, rng, candidates, keep_first) if len(valid) else None
    test_neg = corrupt_negatives(test, n, known, n_neg, rng, candidates, keep_first) if len(test) else None
    return g, EdgeSplit(train, valid, test, valid_neg, test_neg)
