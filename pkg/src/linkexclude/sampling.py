"""Edge splits, seeded mini-batch construction and target-edge exclusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .graph import (
    Graph,
    Subgraph,
    canonical_edges,
    edge_keys,
    khop_message_graph,
    read_pairs,
    save_edge_list,
    unique_edges,
)

POLICY_KINDS = ("none", "all", "random", "lowdeg")


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    """Positive target edges for train/valid/test plus optional fixed negatives.

    ``valid_neg`` / ``test_neg`` have shape ``(n_pos, n_neg, 2)``: one block
    of negative pairs per positive, aligned with ``valid`` / ``test``.
    """

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    valid_neg: np.ndarray | None = None
    test_neg: np.ndarray | None = None

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, canonical_edges(getattr(self, name)))
        for name in ("valid_neg", "test_neg"):
            neg = getattr(self, name)
            if neg is not None:
                neg = np.sort(np.asarray(neg, dtype=np.int64), axis=-1)
                object.__setattr__(self, name, neg)

    def check_disjoint(self, num_nodes: int) -> None:
        """Raise ``ValueError`` if the three positive sets overlap."""
        keys = [set(edge_keys(e, num_nodes).tolist()) for e in (self.train, self.valid, self.test)]
        for (a, b), label in zip(((0, 1), (0, 2), (1, 2)), ("train/valid", "train/test", "valid/test")):
            common = keys[a] & keys[b]
            if common:
                raise ValueError(f"{label} splits share {len(common)} edges")

    def train_graph(self, g: Graph) -> Graph:
        """Graph over ``g``'s nodes and features holding only the train edges."""
        return Graph.from_edges(self.train, g.num_nodes, g.features)


@dataclass(frozen=True)
class ExclusionPolicy:
    """Which training target edges are dropped from a batch's message graph.

    ``kind`` is one of ``none``, ``all``, ``random`` (uses ``rate``) or
    ``lowdeg`` (uses ``delta``; an edge is dropped when either endpoint has
    degree below ``delta``).
    """

    kind: str = "none"
    rate: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    @classmethod
    def none(cls) -> "ExclusionPolicy":
        return cls("none")

    @classmethod
    def all(cls) -> "ExclusionPolicy":
        return cls("all")

    @classmethod
    def random(cls, rate: float) -> "ExclusionPolicy":
        return cls("random", rate=float(rate))

    @classmethod
    def low_degree(cls, delta: float) -> "ExclusionPolicy":
        return cls("lowdeg", delta=float(delta))

    def __str__(self) -> str:
        if self.kind == "random":
            return f"random({self.rate:g})"
        if self.kind == "lowdeg":
            return f"lowdeg({self.delta:g})"
        return self.kind


class OpCounter:
    """Counts per-edge examinations made while deciding exclusions."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _degrees_of(g_or_degrees) -> np.ndarray:
    if isinstance(g_or_degrees, Graph):
        return g_or_degrees.degrees()
    return np.asarray(g_or_degrees)


def low_degree_targets(targets, g_or_degrees, delta: float, counter: OpCounter | None = None) -> np.ndarray:
    """Targets with at least one endpoint of degree strictly below ``delta``.

    Degrees come from the full training graph (pass the graph or its
    precomputed degree array).
    """
    targets = canonical_edges(targets)
    deg = _degrees_of(g_or_degrees)
    if counter is not None:
        counter.add(len(targets))
    if len(targets) == 0:
        return targets
    low = np.minimum(deg[targets[:, 0]], deg[targets[:, 1]]) < delta
    return targets[low]


def apply_exclusion(
    targets,
    g_or_degrees,
    policy: ExclusionPolicy,
    rng: np.random.Generator | int | None = None,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Edges among ``targets`` to drop from the message graph under ``policy``.

    Linear in ``len(targets)`` once degrees are known.
    """
    targets = canonical_edges(targets)
    if policy.kind == "none":
        if counter is not None:
            counter.add(len(targets))
        return targets[:0]
    if policy.kind == "all":
        if counter is not None:
            counter.add(len(targets))
        return targets.copy()
    if policy.kind == "random":
        rng = np.random.default_rng(rng)
        n_drop = half_up(policy.rate * len(targets))
        if counter is not None:
            counter.add(len(targets))
        idx = np.sort(rng.choice(len(targets), size=n_drop, replace=False))
        return targets[idx]
    return low_degree_targets(targets, g_or_degrees, policy.delta, counter)


def match_random_rate(g: Graph, split: EdgeSplit, delta: float) -> float:
    """Fraction of train targets the low-degree rule drops at ``delta``.

    Configure the random policy with this rate for a like-for-like baseline.
    """
    if len(split.train) == 0:
        raise ValueError("train split is empty")
    return len(low_degree_targets(split.train, g, delta)) / len(split.train)


def default_delta(g: Graph) -> int:
    """Rounded average degree of the training graph."""
    if g.num_nodes == 0:
        return 0
    return half_up(2.0 * g.num_edges / g.num_nodes)


class NegativeSamplingError(RuntimeError):
    pass


def negative_sample(
    g: Graph,
    positives,
    n_per_pos: int,
    rng: np.random.Generator | int | None = None,
    max_rounds: int = 100,
) -> np.ndarray:
    """Uniform non-edges by rejection sampling.

    Returns ``n_per_pos * len(positives)`` canonical pairs that are neither
    edges of ``g`` nor among ``positives``. Pairs may repeat.

    Raises:
        NegativeSamplingError: no non-edges exist, or the rejection budget
            ran out (graph nearly complete).
    """
    positives = canonical_edges(positives)
    need = n_per_pos * len(positives)
    if need == 0:
        return np.empty((0, 2), dtype=np.int64)
    n = g.num_nodes
    total_pairs = n * (n - 1) // 2
    forbidden = np.union1d(g.keys, edge_keys(positives, n)) if len(positives) else g.keys
    if total_pairs - len(forbidden) <= 0:
        raise NegativeSamplingError("graph has no non-edges to sample from")
    rng = np.random.default_rng(rng)
    out = []
    got = 0
    for _ in range(max_rounds):
        m = max(2 * (need - got), 16)
        u = rng.integers(0, n, size=m)
        v = rng.integers(0, n, size=m)
        ok = u != v
        pairs = np.sort(np.stack([u[ok], v[ok]], axis=1), axis=1)
        keys = pairs[:, 0] * np.int64(n) + pairs[:, 1]
        pairs = pairs[~np.isin(keys, forbidden)]
        out.append(pairs[: need - got])
        got += len(out[-1])
        if got >= need:
            return np.concatenate(out)
    raise NegativeSamplingError(
        f"rejection budget exhausted after {max_rounds} rounds ({got}/{need} negatives)"
    )


@dataclass(frozen=True, eq=False)
class Batch:
    """One training step: targets plus the post-exclusion message graph.

    Attributes:
        positives: Global train target edges.
        negatives: Global negative pairs.
        message_graph: k-hop subgraph after excluded edges were removed.
        excluded: Global edges removed from the message graph.
        epoch, index: Position in the sampler's deterministic sequence.
    """

    positives: np.ndarray
    negatives: np.ndarray
    message_graph: Subgraph
    excluded: np.ndarray
    epoch: int = 0
    index: int = 0

    def local_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        to_local = self.message_graph.to_local
        pos = to_local(self.positives) if len(self.positives) else self.positives
        neg = to_local(self.negatives) if len(self.negatives) else self.negatives
        return pos, neg


class EdgeBatchSampler:
    """Deterministic mini-batch sampler over the train target edges.

    Each epoch shuffles the train edges with a stream seeded by
    ``(seed, epoch)`` and cuts them into consecutive batches, so every train
    edge is a positive exactly once per epoch. Batch ``i`` of epoch ``e``
    draws its negatives and random exclusions from ``(seed, e, i)``, so any
    batch can be rebuilt independently.

    Args:
        g: Training graph (train edges only). Never mutated.
        split: Edge split; only ``split.train`` is used.
        batch_size: Positive targets per batch; the last batch may be short.
        hops: Radius of the message graph around target endpoints.
        policy: Exclusion policy.
        negs_per_pos: Negatives drawn per positive.
        seed: Base seed.
    """

    def __init__(
        self,
        g: Graph,
        split: EdgeSplit,
        batch_size: int,
        hops: int,
        policy: ExclusionPolicy,
        negs_per_pos: int = 1,
        seed: int = 0,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(split.train) == 0:
            raise ValueError("train split is empty")
        self.g = g
        self.train = unique_edges(split.train)
        self.batch_size = int(batch_size)
        self.hops = int(hops)
        self.policy = policy
        self.negs_per_pos = int(negs_per_pos)
        self.seed = int(seed)
        # full training-graph degrees, fixed for the whole run
        self.degrees = g.degrees()

    def __len__(self) -> int:
        return -(-len(self.train) // self.batch_size)

    def epoch_order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, epoch])
        return rng.permutation(len(self.train))

    def batch(self, epoch: int, index: int, order: np.ndarray | None = None) -> Batch:
        if order is None:
            order = self.epoch_order(epoch)
        sel = order[index * self.batch_size : (index + 1) * self.batch_size]
        positives = self.train[sel]
        rng = np.random.default_rng([self.seed, epoch, index])
        negatives = negative_sample(self.g, positives, self.negs_per_pos, rng)
        seeds_edges = np.concatenate([positives, negatives]) if len(negatives) else positives
        full = khop_message_graph(self.g, seeds_edges, self.hops)
        excluded = apply_exclusion(positives, self.degrees, self.policy, rng)
        message_graph = full.without_edges(excluded) if len(excluded) else full
        return Batch(positives, negatives, message_graph, excluded, epoch, index)

    def epoch(self, epoch: int) -> Iterator[Batch]:
        order = self.epoch_order(epoch)
        for i in range(len(self)):
            yield self.batch(epoch, i, order)


def sample_batch(
    g: Graph,
    split: EdgeSplit,
    batch_size: int,
    k: int,
    policy: ExclusionPolicy,
    negs_per_pos: int = 1,
    seed: int = 0,
    epoch: int = 0,
    index: int = 0,
) -> Batch:
    """Build batch ``index`` of ``epoch``; see :class:`EdgeBatchSampler`."""
    sampler = EdgeBatchSampler(g, split, batch_size, k, policy, negs_per_pos, seed)
    return sampler.batch(epoch, index)


SPLIT_FILES = ("train.tsv", "valid.tsv", "test.tsv")


def _write_neg_blocks(path: Path, blocks: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, block in enumerate(blocks):
            if i:
                fh.write("\n")
            for u, v in block:
                fh.write(f"{u}\t{v}\n")


def _read_neg_blocks(path: Path) -> np.ndarray:
    blocks: list[list[tuple[int, int]]] = [[]]
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("#"):
                continue
            if not line:
                if blocks[-1]:
                    blocks.append([])
                continue
            u, v = line.split()[:2]
            blocks[-1].append((int(u), int(v)))
    if not blocks[-1]:
        blocks.pop()
    sizes = {len(b) for b in blocks}
    if len(sizes) > 1:
        raise ValueError(f"{path}: negative blocks have unequal sizes {sorted(sizes)}")
    if not blocks:
        return np.empty((0, 0, 2), dtype=np.int64)
    return np.asarray(blocks, dtype=np.int64)


def save_split(directory, split: EdgeSplit) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, edges in zip(SPLIT_FILES, (split.train, split.valid, split.test)):
        save_edge_list(directory / name, edges)
    if split.valid_neg is not None:
        _write_neg_blocks(directory / "valid_neg.tsv", split.valid_neg)
    if split.test_neg is not None:
        _write_neg_blocks(directory / "test_neg.tsv", split.test_neg)


def load_split(directory) -> EdgeSplit:
    directory = Path(directory)
    parts = [read_pairs(directory / name)[0] for name in SPLIT_FILES]
    negs = []
    for name in ("valid_neg.tsv", "test_neg.tsv"):
        path = directory / name
        negs.append(_read_neg_blocks(path) if path.exists() else None)
    return EdgeSplit(*parts, *negs)
