"""Numerical checks of how removing one incident edge changes node influence.

For an untrained GCN the expected ratio of the Jacobian
``d x_h / d x_k`` after vs. before dropping one edge at ``h`` is
``sqrt(1 - 1/d_h)``, so the relative drop ``1 - sqrt(1 - 1/d_h)`` shrinks
with degree. More generally, with aggregation weights proportional to
``d_h ** m`` the ratio is ``((d_h - 1) / d_h) ** (m + 1)``: ``m = -1/2`` for
symmetric GCN normalisation and ``m = -1`` for mean aggregation.

The Jacobians are measured on the real forward pass by central differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .gnn import ModelParams, _forward, gnn_forward, init_params, propagation_matrix
from .graph import Graph, remove_edges
from .sampling import EdgeBatchSampler, EdgeSplit, ExclusionPolicy

logger = logging.getLogger(__name__)

AGGREGATION_EXPONENT = {"gcn": -0.5, "sage": -1.0}


def expected_effect_ratio(degree: float, m: float) -> float:
    """Expected Jacobian ratio after removing one of ``degree`` incident edges."""
    return ((degree - 1.0) / degree) ** (m + 1.0)


def closed_form_drop(degree: float, arch: str = "gcn") -> float:
    """``1 - E[ratio]``; for GCN this is ``1 - sqrt(1 - 1/degree)``."""
    return 1.0 - expected_effect_ratio(degree, AGGREGATION_EXPONENT[arch])


def influence_jacobian(
    g: Graph,
    params: ModelParams,
    h: int,
    k: int,
    s: int,
    t: int,
    X: np.ndarray | None = None,
    eps: float = 1e-4,
    prop=None,
) -> float:
    """Central-difference estimate of ``d out[h, s] / d X[k, t]``.

    ``eps`` is relative to the largest absolute feature value. Exactly zero
    when ``k`` lies outside ``h``'s receptive field. ``prop`` may carry a
    precomputed propagation matrix for ``g`` to skip rebuilding it.
    """
    X = g.features if X is None else X
    X = np.array(X, dtype=np.float64, copy=True)
    if prop is None:
        gnn_forward(g, X, params)  # validates shapes
        prop = propagation_matrix(g, params.arch, params.add_self_loops)
    step = eps * max(float(np.abs(X).max(initial=0.0)), 1.0)
    orig = X[k, t]
    X[k, t] = orig + step
    up = _forward(prop, X, params)[0][h, s]
    X[k, t] = orig - step
    down = _forward(prop, X, params)[0][h, s]
    return float((up - down) / (2 * step))


def path_product_jacobian(params: ModelParams, prop: np.ndarray, X: np.ndarray, path, s: int, t: int) -> float:
    """Analytic Jacobian summed over one explicit walk ``path`` (``h`` first).

    ``prop`` is the dense propagation matrix. Only valid for GCN where the
    walk is the sole route from ``path[-1]`` to ``path[0]``.
    """
    if params.arch != "gcn":
        raise ValueError("path products are defined for GCN only")
    L = params.num_layers
    if len(path) != L + 1:
        raise ValueError("path must have num_layers + 1 nodes")
    # hidden pre-activations give the ReLU masks
    H = X
    masks = []
    for i, layer in enumerate(params.layers):
        Z = prop @ H @ layer["W"]
        if i < L - 1:
            masks.append((Z > 0).astype(np.float64))
            H = np.maximum(Z, 0.0)
    # walk from the source (layer 0 input) up to h
    vec = np.zeros(params.in_dim)
    vec[t] = 1.0
    coeff = 1.0
    for i in range(L):
        src, dst = path[L - i], path[L - i - 1]
        coeff *= prop[dst, src]
        vec = vec @ params.layers[i]["W"]
        if i < L - 1:
            vec = vec * masks[i][dst]
    return float(coeff * vec[s])


def theorem_graph(degree: int, layers: int) -> tuple[Graph, int, int]:
    """Construction graph for the effect-ratio experiment.

    Node ``h = 0`` has ``degree`` neighbours. With one layer the source
    ``k`` is one of them; with more layers each neighbour starts its own
    chain of ``layers - 2`` extra nodes ending at a shared ``k``, so ``k``
    reaches ``h`` equally through every neighbour and no walk returns.
    """
    if degree < 2:
        raise ValueError("degree must be >= 2")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    edges = [(0, i) for i in range(1, degree + 1)]
    if layers == 1:
        return Graph.from_edges(edges, degree + 1), 0, 1
    next_id = degree + 1
    tails = []
    for i in range(1, degree + 1):
        prev = i
        for _ in range(layers - 2):
            edges.append((prev, next_id))
            prev = next_id
            next_id += 1
        tails.append(prev)
    k = next_id
    edges.extend((tail, k) for tail in tails)
    return Graph.from_edges(edges, k + 1), 0, k


@dataclass
class InfluenceMeasurement:
    """Monte Carlo estimate of the relative influence drop at one degree."""

    degree: int
    layers: int
    arch: str
    ratios: np.ndarray
    discarded: int
    closed_form: float
    before: np.ndarray = field(repr=False, default=None)

    @property
    def trials(self) -> int:
        return len(self.ratios)

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def empirical(self) -> float:
        return 1.0 - self.mean_ratio

    @property
    def stderr(self) -> float:
        if len(self.ratios) < 2:
            return 0.0
        return float(np.std(self.ratios, ddof=1) / math.sqrt(len(self.ratios)))


def effect_ratio_experiment(
    degree: int,
    layers: int,
    trials: int = 200,
    seed: int = 0,
    *,
    arch: str = "gcn",
    feat_dim: int = 4,
    hidden_dim: int = 8,
    eps: float = 1e-4,
) -> InfluenceMeasurement:
    """Empirical vs closed-form influence drop at ``h`` with the given degree.

    Each trial draws fresh weights, one shared random feature vector for all
    nodes, and a random entry ``(s, t)``. The removed edge is averaged over
    all ``degree`` edges at ``h``: the per-trial ratio is the mean of
    ``J_after / J_before`` over those removals. Trials whose baseline
    Jacobian vanishes (dead ReLUs) are discarded and counted.

    Raises:
        RuntimeError: every trial was degenerate.
    """
    g, h, k = theorem_graph(degree, layers)
    removals = [remove_edges(g, [(h, int(n))]) for n in g.neighbors(h)]
    props = propagation_matrix(g, arch).toarray()
    removal_props = [propagation_matrix(gr, arch).toarray() for gr in removals]
    rng = np.random.default_rng([seed, degree, layers])
    ratios, befores = [], []
    discarded = 0
    for _ in range(trials):
        params = init_params(arch, feat_dim, hidden_dim, feat_dim, layers, False, seed=rng)
        x = rng.normal(size=feat_dim)
        X = np.tile(x, (g.num_nodes, 1))
        s, t = int(rng.integers(feat_dim)), int(rng.integers(feat_dim))
        before = influence_jacobian(g, params, h, k, s, t, X, eps, props)
        if abs(before) < 1e-10:
            discarded += 1
            continue
        after = [
            influence_jacobian(gr, params, h, k, s, t, X, eps, pr) for gr, pr in zip(removals, removal_props)
        ]
        ratios.append(float(np.mean(after)) / before)
        befores.append(before)
    if not ratios:
        raise RuntimeError(f"all {trials} trials degenerate at degree {degree}")
    return InfluenceMeasurement(
        degree, layers, arch, np.asarray(ratios), discarded, closed_form_drop(degree, arch), np.asarray(befores)
    )


def verify_theorem(degrees, layers_list, trials: int = 200, seed: int = 0, arch: str = "gcn") -> list[InfluenceMeasurement]:
    return [
        effect_ratio_experiment(d, L, trials, seed, arch=arch) for L in layers_list for d in degrees
    ]


@dataclass
class DegreeChangeProfile:
    """Relative degree loss of target endpoints, grouped by training degree.

    ``bucket_edges`` are log2-spaced lower bounds; bucket ``i`` covers
    ``[bucket_edges[i], bucket_edges[i + 1])``.
    """

    degrees: np.ndarray
    changes: np.ndarray
    bucket_edges: np.ndarray
    bucket_mean: np.ndarray
    bucket_count: np.ndarray

    def mean_change(self, min_degree: float = 0, max_degree: float = math.inf) -> float:
        mask = (self.degrees >= min_degree) & (self.degrees < max_degree)
        return float(self.changes[mask].mean()) if mask.any() else math.nan

    def spearman(self) -> float:
        """Rank correlation between bucket lower bound and bucket mean; ``nan`` if undefined."""
        ok = self.bucket_count > 0
        if ok.sum() < 2 or np.ptp(self.bucket_mean[ok]) == 0:
            return math.nan
        return float(spearmanr(self.bucket_edges[:-1][ok], self.bucket_mean[ok]).statistic)

    def to_csv(self) -> str:
        lines = ["degree_lo,degree_hi,mean_change,count"]
        for lo, hi, mean, count in zip(
            self.bucket_edges[:-1], self.bucket_edges[1:], self.bucket_mean, self.bucket_count
        ):
            if count:
                lines.append(f"{int(lo)},{int(hi)},{mean:.6f},{int(count)}")
        return "\n".join(lines) + "\n"


def degree_change_profile(
    g: Graph,
    split: EdgeSplit,
    policy: ExclusionPolicy,
    batch_size: int,
    hops: int = 1,
    epochs: int = 1,
    seed: int = 0,
    negs_per_pos: int = 1,
) -> DegreeChangeProfile:
    """Per-batch relative degree change of positive-target endpoints.

    For every batch and every endpoint of a positive target, record
    ``(before - after) / before`` where the degrees are taken in the batch
    message graph before and after exclusion. ``g`` is the training graph.
    """
    sampler = EdgeBatchSampler(g, split, batch_size, hops, policy, negs_per_pos, seed)
    train_deg = g.degrees()
    degs, changes = [], []
    for epoch in range(epochs):
        for batch in sampler.epoch(epoch):
            sub = batch.message_graph
            nodes = np.unique(batch.positives.ravel())
            local = sub.to_local(nodes)
            after = sub.graph.degrees()[local]
            lost = np.zeros(sub.num_nodes, dtype=np.int64)
            if len(batch.excluded):
                np.add.at(lost, sub.to_local(batch.excluded.ravel()), 1)
            before = after + lost[local]
            ok = before > 0
            degs.append(train_deg[nodes[ok]])
            changes.append((before[ok] - after[ok]) / before[ok])
    degs = np.concatenate(degs) if degs else np.empty(0, dtype=np.int64)
    changes = np.concatenate(changes) if changes else np.empty(0)
    top = int(degs.max()) if len(degs) else 1
    n_bins = max(1, int(math.floor(math.log2(top))) + 1)
    edges = 2 ** np.arange(n_bins + 1)
    which = np.clip(np.floor(np.log2(np.maximum(degs, 1))).astype(int), 0, n_bins - 1)
    count = np.bincount(which, minlength=n_bins)
    total = np.bincount(which, weights=changes, minlength=n_bins)
    mean = np.divide(total, count, out=np.zeros(n_bins), where=count > 0)
    return DegreeChangeProfile(degs, changes, edges.astype(np.int64), mean, count)


@dataclass
class SweepRow:
    delta: float
    values: dict[int, float]
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        vals = list(self.values.values())
        return float(np.mean(vals)) if vals else math.nan

    @property
    def std(self) -> float:
        vals = list(self.values.values())
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def delta_sweep(
    g: Graph,
    split: EdgeSplit,
    model_params: dict,
    deltas,
    seeds,
    metric: str = "mrr",
) -> list[SweepRow]:
    """Train one low-degree-exclusion model per ``(delta, seed)`` and score it.

    ``model_params`` are :class:`~linkexclude.estimator.LinkPredictor`
    keyword arguments. A failing cell is recorded in ``errors`` and the
    sweep moves on.
    """
    from .estimator import LinkPredictor

    deltas = list(deltas)
    if deltas != sorted(deltas):
        raise ValueError("deltas must be sorted ascending")
    rows = []
    for delta in deltas:
        row = SweepRow(float(delta), {})
        for seed in seeds:
            kwargs = dict(model_params, policy="lowdeg", delta=float(delta), seed=int(seed))
            try:
                model = LinkPredictor(**kwargs).fit(g, split)
                row.values[int(seed)] = model.evaluate(g, split).metrics[metric]
            except (FloatingPointError, ValueError, RuntimeError) as exc:
                logger.warning("sweep cell delta=%s seed=%s failed: %s", delta, seed, exc)
                row.errors[int(seed)] = str(exc)
        rows.append(row)
    return rows


def sweep_csv(rows: list[SweepRow], seeds) -> str:
    header = ["delta", "mean", "std"] + [f"seed_{s}" for s in seeds]
    lines = [",".join(header)]
    for row in rows:
        cells = [f"{row.delta:g}", f"{row.mean:.6f}", f"{row.std:.6f}"]
        for s in seeds:
            v = row.values.get(int(s))
            cells.append("error" if v is None else f"{v:.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
