"""Immutable undirected graphs in CSR form and the edge-set algebra built on them.

Edges are always handled as ``(m, 2)`` int64 arrays in canonical form
(``u < v``). Membership tests go through a scalar key ``u * n + v`` so that
set operations stay vectorised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

# keys are u * n + v; stay well inside int64
MAX_NODES = 2**31 - 1


class GraphFormatError(ValueError):
    """Raised when an edge-list or feature file cannot be parsed."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def canonical_edges(edges) -> np.ndarray:
    """Return ``edges`` as an ``(m, 2)`` int64 array with ``u < v`` per row.

    Accepts any iterable of pairs (or an existing array). Order and
    duplicates are preserved; use :func:`unique_edges` to deduplicate.
    """
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    return np.sort(arr, axis=1)


def unique_edges(edges) -> np.ndarray:
    """Canonicalize, deduplicate and lexicographically sort an edge array."""
    arr = canonical_edges(edges)
    if len(arr) == 0:
        return arr
    return np.unique(arr, axis=0)


def edge_keys(edges: np.ndarray, num_nodes: int) -> np.ndarray:
    """Scalar keys for canonical edges; order-preserving for sorted edge arrays."""
    edges = canonical_edges(edges)
    return edges[:, 0] * np.int64(num_nodes) + edges[:, 1]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored as CSR plus a canonical edge list.

    Attributes:
        num_nodes: Number of nodes; ids are ``0 .. num_nodes - 1``.
        indptr: Row offsets, length ``num_nodes + 1``.
        indices: Sorted neighbour ids, concatenated per row.
        edges: ``(m, 2)`` canonical edges sorted lexicographically.
        features: Optional ``(num_nodes, feat_dim)`` float array.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    edges: np.ndarray
    features: np.ndarray | None = None
    _keys: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, edges, num_nodes: int | None = None, features=None) -> "Graph":
        """Build a graph from any iterable of node pairs.

        Pairs are canonicalized and deduplicated. Self-loops raise ``ValueError``.
        """
        edges = unique_edges(edges)
        if len(edges) and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed in graph data")
        if len(edges) and edges.min() < 0:
            raise ValueError("node ids must be non-negative")
        inferred = int(edges.max()) + 1 if len(edges) else 0
        if num_nodes is None:
            num_nodes = inferred
        elif num_nodes < inferred:
            raise ValueError(f"num_nodes={num_nodes} but edge list references node {inferred - 1}")
        if num_nodes > MAX_NODES:
            raise ValueError(f"num_nodes={num_nodes} exceeds supported maximum {MAX_NODES}")
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != num_nodes:
                raise ValueError(
                    f"features must have shape ({num_nodes}, D), got {features.shape}"
                )
        indptr, indices = _build_csr(edges, num_nodes)
        keys = edges[:, 0] * np.int64(num_nodes) + edges[:, 1]
        return cls(num_nodes, indptr, indices, edges, features, keys)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feat_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @property
    def keys(self) -> np.ndarray:
        return self._keys

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree(self, u: int) -> int:
        """Number of 1-hop neighbours of ``u``."""
        u = int(u)
        if not 0 <= u < self.num_nodes:
            raise IndexError(f"node {u} out of range for graph with {self.num_nodes} nodes")
        return int(self.indptr[u + 1] - self.indptr[u])

    def neighbors(self, u: int) -> np.ndarray:
        u = int(u)
        if not 0 <= u < self.num_nodes:
            raise IndexError(f"node {u} out of range for graph with {self.num_nodes} nodes")
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edges(self, probe) -> np.ndarray:
        """Boolean mask: which probe pairs are edges of this graph."""
        probe = canonical_edges(probe)
        if len(probe) == 0 or self.num_edges == 0:
            return np.zeros(len(probe), dtype=bool)
        in_range = (probe >= 0).all(axis=1) & (probe < self.num_nodes).all(axis=1)
        keys = probe[:, 0] * np.int64(self.num_nodes) + probe[:, 1]
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return in_range & (self._keys[pos] == keys)

    def with_features(self, features) -> "Graph":
        return Graph.from_edges(self.edges, self.num_nodes, features)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, feat_dim={self.feat_dim})"


def _build_csr(edges: np.ndarray, num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if len(edges) == 0:
        return np.zeros(num_nodes + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, dst.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Subgraph:
    """A node-induced subgraph with its local-to-global id map.

    Attributes:
        graph: The subgraph itself, in local ids.
        node_map: ``node_map[local] = global``; sorted ascending.
        seeds: Local ids of the seed nodes the subgraph was grown from.
    """

    graph: Graph
    node_map: np.ndarray
    seeds: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def to_local(self, global_ids) -> np.ndarray:
        """Translate global ids to local ids; raises ``KeyError`` for absent nodes."""
        global_ids = np.asarray(global_ids, dtype=np.int64)
        pos = np.searchsorted(self.node_map, global_ids)
        pos_c = np.minimum(pos, max(len(self.node_map) - 1, 0))
        if len(self.node_map) == 0 or np.any(self.node_map[pos_c] != global_ids):
            raise KeyError("node not present in subgraph")
        return pos

    def global_edges(self) -> np.ndarray:
        return self.node_map[self.graph.edges] if self.graph.num_edges else self.graph.edges.copy()

    def without_edges(self, drop_global) -> "Subgraph":
        """Remove parent-id edges from this subgraph; absent ones are ignored."""
        drop = canonical_edges(drop_global)
        if len(drop):
            keep = np.isin(drop, self.node_map).all(axis=1)
            drop = drop[keep]
        local = np.searchsorted(self.node_map, drop) if len(drop) else drop
        return Subgraph(remove_edges(self.graph, local), self.node_map, self.seeds)


def read_pairs(path) -> tuple[np.ndarray, int | None]:
    """Parse an edge-list file into canonical pairs in file order.

    Returns the pairs (duplicates kept) and the node count from a
    ``# nodes: N`` header, if any.

    Raises:
        GraphFormatError: malformed line, self-loop, or id overflow; the
            message carries the 1-based line number.
    """
    pairs: list[tuple[int, int]] = []
    header_nodes = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("nodes:"):
                    try:
                        header_nodes = int(body.split(":", 1)[1])
                    except ValueError as exc:
                        raise GraphFormatError(f"bad node-count header {line!r}", lineno) from exc
                continue
            parts = line.split()
            if len(parts) < 2:
                raise GraphFormatError(f"expected two node ids, got {line!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphFormatError(f"non-integer node id in {line!r}", lineno) from exc
            if u < 0 or v < 0:
                raise GraphFormatError(f"negative node id in {line!r}", lineno)
            if u >= MAX_NODES or v >= MAX_NODES:
                raise GraphFormatError(f"node id overflow in {line!r}", lineno)
            if u == v:
                raise GraphFormatError(f"self-loop {u}-{v} rejected", lineno)
            pairs.append((u, v))
    return canonical_edges(pairs), header_nodes


def load_edge_list(path, num_nodes: int | None = None, *, return_report: bool = False):
    """Read a whitespace-separated edge list into a :class:`Graph`.

    Lines starting with ``#`` are comments; ``# nodes: N`` sets the node
    count. Duplicate edges (either orientation) are dropped and counted.
    Node count defaults to ``1 + max id``.
    """
    arr, header_nodes = read_pairs(path)
    n = num_nodes if num_nodes is not None else header_nodes
    try:
        g = Graph.from_edges(arr, n)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from exc
    duplicates = len(arr) - g.num_edges
    if duplicates:
        logger.info("%s: dropped %d duplicate edges", path, duplicates)
    if return_report:
        return g, {"lines": len(arr), "edges": g.num_edges, "duplicates": duplicates}
    return g


def save_edge_list(path, edges, num_nodes: int | None = None) -> None:
    edges = canonical_edges(edges)
    with open(path, "w", encoding="utf-8") as fh:
        if num_nodes is not None:
            fh.write(f"# nodes: {num_nodes}\n")
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")


def load_features(path) -> np.ndarray:
    """Read a dense feature file: header ``N D`` then N rows of D reals."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise GraphFormatError("feature header must be 'N D'", 1)
        n, d = int(header[0]), int(header[1])
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            vals = line.split()
            if len(vals) != d:
                raise GraphFormatError(f"expected {d} values, got {len(vals)}", lineno)
            rows.append([float(x) for x in vals])
    if len(rows) != n:
        raise GraphFormatError(f"header declares {n} rows, found {len(rows)}")
    return np.asarray(rows, dtype=np.float64).reshape(n, d)


def save_features(path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float64)
    n, d = features.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d}\n")
        for row in features:
            # repr round-trips float64 exactly
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def degree(g: Graph, u: int) -> int:
    return g.degree(u)


def khop_nodes(g: Graph, seeds, k: int) -> np.ndarray:
    """Sorted ids of ``seeds`` plus every node within ``k`` hops of them."""
    if k < 0:
        raise ValueError("hop count must be >= 0")
    seeds = np.unique(np.asarray(seeds, dtype=np.int64))
    visited = np.zeros(g.num_nodes, dtype=bool)
    visited[seeds] = True
    frontier = seeds
    for _ in range(k):
        if len(frontier) == 0:
            break
        starts, ends = g.indptr[frontier], g.indptr[frontier + 1]
        nbrs = _gather_ranges(g.indices, starts, ends)
        nbrs = nbrs[~visited[nbrs]]
        frontier = np.unique(nbrs)
        visited[frontier] = True
    return np.flatnonzero(visited)


def _gather_ranges(values: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    lengths = ends - starts
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=values.dtype)
    offsets = np.repeat(starts - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return values[np.arange(total) + offsets]


def induced_subgraph(g: Graph, nodes, seeds=None) -> Subgraph:
    """Subgraph on ``nodes`` keeping every parent edge between them."""
    node_map = np.unique(np.asarray(nodes, dtype=np.int64))
    inside = np.zeros(g.num_nodes, dtype=bool)
    inside[node_map] = True
    starts, ends = g.indptr[node_map], g.indptr[node_map + 1]
    src = np.repeat(node_map, ends - starts)
    dst = _gather_ranges(g.indices, starts, ends)
    keep = inside[dst] & (src < dst)
    local = np.searchsorted(node_map, np.stack([src[keep], dst[keep]], axis=1))
    features = None if g.features is None else g.features[node_map]
    sub = Graph.from_edges(local, len(node_map), features)
    seed_local = (
        np.empty(0, dtype=np.int64)
        if seeds is None
        else np.searchsorted(node_map, np.unique(np.asarray(seeds, dtype=np.int64)))
    )
    return Subgraph(sub, node_map, seed_local)


def khop_message_graph(g: Graph, targets, k: int) -> Subgraph:
    """Induced subgraph over target endpoints and their <= k-hop neighbours.

    Target edges themselves are kept; exclusion happens later.
    """
    targets = canonical_edges(targets)
    if len(targets) and (targets.min() < 0 or targets.max() >= g.num_nodes):
        raise IndexError("target endpoint out of range")
    seeds = np.unique(targets.ravel())
    return induced_subgraph(g, khop_nodes(g, seeds, k), seeds)


def remove_edges(g: Graph, drop, *, return_ignored: bool = False):
    """Graph with ``drop`` removed. Node count is unchanged.

    Pairs in ``drop`` that are not edges of ``g`` are ignored; pass
    ``return_ignored=True`` to also get how many were.
    """
    drop = unique_edges(drop)
    present = g.has_edges(drop)
    ignored = int(len(drop) - present.sum())
    if present.any():
        drop_keys = drop[present, 0] * np.int64(g.num_nodes) + drop[present, 1]
        keep = ~np.isin(g.keys, drop_keys, assume_unique=True)
        out = Graph.from_edges(g.edges[keep], g.num_nodes, g.features)
    else:
        out = g
    if return_ignored:
        return out, ignored
    return out


def contains_edges(g: Graph, probe) -> tuple[bool, list[tuple[int, int]]]:
    """Whether any probe pair is an edge of ``g``, plus the canonical present ones."""
    probe = unique_edges(probe)
    mask = g.has_edges(probe)
    present = [(int(u), int(v)) for u, v in probe[mask]]
    return bool(present), present
