"""Ranking metrics for link prediction and leakage-guarded evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, edge_keys, unique_edges
from .gnn import ModelParams, dot_decoder, gnn_forward
from .sampling import EdgeSplit

MODES = ("fixed", "exhaustive")
EXHAUSTIVE_CAP = 10**6


class LeakageError(RuntimeError):
    """Evaluation was asked to run on a graph that still holds test edges."""


def _check_scores(*arrays):
    for a in arrays:
        if np.isnan(a).any():
            raise ValueError("NaN score")


def rank_positive(pos_score: float, neg_scores) -> float:
    """1-based rank of a positive among its negatives; ties count half."""
    neg = np.asarray(neg_scores, dtype=np.float64)
    _check_scores(np.asarray([pos_score], dtype=np.float64), neg)
    return 1.0 + np.sum(neg > pos_score) + 0.5 * np.sum(neg == pos_score)


def ranks_against_blocks(pos_scores: np.ndarray, neg_blocks: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rank_positive` for ``(n,)`` positives vs ``(n, m)`` negatives."""
    pos = np.asarray(pos_scores, dtype=np.float64)[:, None]
    neg = np.asarray(neg_blocks, dtype=np.float64)
    _check_scores(pos, neg)
    return 1.0 + (neg > pos).sum(axis=1) + 0.5 * (neg == pos).sum(axis=1)


def ranks_against_pool(pos_scores: np.ndarray, pool_scores: np.ndarray) -> np.ndarray:
    """Rank each positive against one shared negative pool (sorted search)."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    pool = np.sort(np.asarray(pool_scores, dtype=np.float64))
    _check_scores(pos, pool)
    below = np.searchsorted(pool, pos, side="left")
    not_above = np.searchsorted(pool, pos, side="right")
    greater = len(pool) - not_above
    ties = not_above - below
    return 1.0 + greater + 0.5 * ties


def mrr(ranks) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("empty rank list")
    return float(np.mean(1.0 / ranks))


def hits_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("empty rank list")
    return float(np.mean(ranks <= k))


def auc(pos_scores, neg_scores) -> float:
    """P(random positive outscores random negative), ties counted as 1/2.

    Exact pair counting through one sort of the pooled scores.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    _check_scores(pos, neg)
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    ties = np.searchsorted(neg_sorted, pos, side="right") - below
    # integer counts keep the result exact
    wins2 = 2 * int(below.sum()) + int(ties.sum())
    return wins2 / (2 * pos.size * neg.size)


def auc_bruteforce(pos_scores, neg_scores) -> float:
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (pos.size * neg.size)


@dataclass
class RankedEval:
    """Per-positive ranks and scores from one evaluation pass."""

    positives: np.ndarray
    pos_scores: np.ndarray
    ranks: np.ndarray
    neg_scores: np.ndarray
    candidate_size: np.ndarray
    neg_blocks: np.ndarray | None = None
    leakage: bool = False
    pool_cap: int | None = None
    metrics: dict[str, float] = field(default_factory=dict)

    def summary(self, ks=(1, 10, 50)) -> dict[str, float]:
        return summarize(self.ranks, self.pos_scores, self.neg_scores, ks)


def summarize(ranks, pos_scores, neg_scores, ks=(1, 10, 50)) -> dict[str, float]:
    out = {"mrr": mrr(ranks)}
    for k in ks:
        out[f"hits@{k}"] = hits_at_k(ranks, k)
    out["auc"] = auc(pos_scores, neg_scores)
    return out


def negative_pool(num_nodes: int, split: EdgeSplit, rng, cap: int = EXHAUSTIVE_CAP) -> tuple[np.ndarray, int | None]:
    """Every pair outside train/valid/test, subsampled to ``cap`` when larger.

    Returns the pool and the cap if it was applied (``None`` otherwise).
    """
    n = num_nodes
    known = np.unique(
        np.concatenate([edge_keys(unique_edges(e), n) for e in (split.train, split.valid, split.test)])
    )
    total = n * (n - 1) // 2 - len(known)
    if total <= 0:
        raise ValueError("no negative pairs available")
    if total <= cap:
        iu, ju = np.triu_indices(n, k=1)
        keys = iu.astype(np.int64) * n + ju
        keep = ~np.isin(keys, known)
        return np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64), None
    rng = np.random.default_rng(rng)
    chosen: set[int] = set()
    known_set = set(known.tolist())
    while len(chosen) < cap:
        m = 2 * (cap - len(chosen))
        u = rng.integers(0, n, size=m)
        v = rng.integers(0, n, size=m)
        ok = u != v
        lo, hi = np.minimum(u[ok], v[ok]), np.maximum(u[ok], v[ok])
        for key in (lo * n + hi).tolist():
            if key not in known_set and key not in chosen:
                chosen.add(key)
                if len(chosen) == cap:
                    break
    keys = np.sort(np.fromiter(chosen, dtype=np.int64))
    return np.stack([keys // n, keys % n], axis=1), cap


def evaluate(
    params: ModelParams,
    g_infer: Graph,
    split: EdgeSplit,
    mode: str = "fixed",
    ks=(1, 10, 50),
    *,
    which: str = "test",
    allow_leakage: bool = False,
    features: np.ndarray | None = None,
    seed: int = 0,
    embeddings: np.ndarray | None = None,
) -> RankedEval:
    """Score ``split.<which>`` positives against negatives on ``g_infer``.

    ``fixed`` uses the split's per-positive negative blocks; ``exhaustive``
    ranks every positive against all pairs outside the three splits
    (seeded subsample above ``EXHAUSTIVE_CAP``).

    Raises:
        LeakageError: ``g_infer`` contains test edges and ``allow_leakage``
            is false.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    leaky = bool(g_infer.has_edges(split.test).any()) if len(split.test) else False
    if leaky and not allow_leakage:
        raise LeakageError("inference graph contains test edges; refusing to evaluate")
    if embeddings is None:
        X = g_infer.features if features is None else features
        if X is None:
            raise ValueError("no node features available")
        embeddings = gnn_forward(g_infer, X, params)
    E = embeddings

    positives = getattr(split, which)
    if len(positives) == 0:
        raise ValueError(f"{which} split is empty")
    pos_scores = dot_decoder(E, positives)
    pool_cap = None
    neg_blocks = None
    if mode == "fixed":
        neg_blocks = getattr(split, f"{which}_neg")
        if neg_blocks is None or neg_blocks.size == 0:
            raise ValueError(f"fixed mode needs {which}_neg negatives")
        m = neg_blocks.shape[1]
        neg_scores = dot_decoder(E, neg_blocks.reshape(-1, 2)).reshape(-1, m)
        ranks = ranks_against_blocks(pos_scores, neg_scores)
        candidate = np.full(len(ranks), m + 1)
        flat_neg = neg_scores.ravel()
    else:
        pool, pool_cap = negative_pool(g_infer.num_nodes, split, seed)
        flat_neg = dot_decoder(E, pool)
        ranks = ranks_against_pool(pos_scores, flat_neg)
        candidate = np.full(len(ranks), len(pool) + 1)
        neg_scores = flat_neg
    result = RankedEval(
        positives=positives,
        pos_scores=pos_scores,
        ranks=ranks,
        neg_scores=flat_neg,
        candidate_size=candidate,
        neg_blocks=neg_scores if mode == "fixed" else None,
        leakage=leaky,
        pool_cap=pool_cap,
    )
    result.metrics = summarize(ranks, pos_scores, flat_neg, ks)
    return result


def parse_bucket(text: str) -> tuple[str, float]:
    """``"min_lt:5"`` -> ``("min_lt", 5.0)``."""
    kind, _, value = text.partition(":")
    if kind not in ("min_lt", "max_lt", "min_eq") or not value:
        raise ValueError(f"bad bucket predicate {text!r}")
    return kind, float(value)


def bucket_mask(edges: np.ndarray, degrees: np.ndarray, predicate) -> np.ndarray:
    kind, value = parse_bucket(predicate) if isinstance(predicate, str) else predicate
    du, dv = degrees[edges[:, 0]], degrees[edges[:, 1]]
    if kind == "min_lt":
        return np.minimum(du, dv) < value
    if kind == "max_lt":
        return np.maximum(du, dv) < value
    return np.minimum(du, dv) == value


def bucket_name(predicate) -> str:
    kind, value = parse_bucket(predicate) if isinstance(predicate, str) else predicate
    return f"{kind}:{value:g}"


def stratified_eval(result: RankedEval, g_train: Graph, predicates, ks=(1, 10, 50)) -> dict[str, dict | None]:
    """Metrics restricted to positives in each degree bucket.

    Degrees are training-graph degrees. Empty buckets map to ``None``.
    Bucket AUC compares bucket positives with their own negatives in fixed
    mode and with the full pool otherwise.
    """
    degrees = g_train.degrees()
    out: dict[str, dict | None] = {}
    for pred in predicates:
        mask = bucket_mask(result.positives, degrees, pred)
        name = bucket_name(pred)
        if not mask.any():
            out[name] = None
            continue
        negs = result.neg_blocks[mask].ravel() if result.neg_blocks is not None else result.neg_scores
        metrics = summarize(result.ranks[mask], result.pos_scores[mask], negs, ks)
        metrics["count"] = int(mask.sum())
        out[name] = metrics
    return out


def format_report(metrics: dict[str, float], count: int, buckets: dict | None = None, leakage: bool = False) -> str:
    """Report lines ``metric,bucket,value,count`` with 6-decimal floats."""
    lines = ["metric,bucket,value,count"]
    for name, value in metrics.items():
        lines.append(f"{name},all,{value:.6f},{count}")
    for bucket, bm in (buckets or {}).items():
        if bm is None:
            lines.append(f"count,{bucket},absent,0")
            continue
        for name, value in bm.items():
            if name == "count":
                continue
            lines.append(f"{name},{bucket},{value:.6f},{bm['count']}")
    lines.append(f"leakage,all,{str(leakage).lower()},{count}")
    return "\n".join(lines) + "\n"


def mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan, math.nan
    return float(values.mean()), float(values.std(ddof=1)) if values.size > 1 else 0.0
