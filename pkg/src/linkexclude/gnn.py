"""Small numpy GNN encoders (GCN, mean-SAGE) with a dot-product link decoder.

Dense features and weights, sparse propagation. Backprop is written by hand
and checked against finite differences in :func:`grad_check`.

Weights are stored ``in_dim x out_dim`` and applied as ``H @ W``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph, Subgraph

logger = logging.getLogger(__name__)

ARCHS = ("gcn", "sage")
CHECKPOINT_MAGIC = "LXCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """Architecture tag, options and per-layer weights.

    For GCN each layer is ``{"W": ...}``; for SAGE ``{"W_self": ...,
    "W_neigh": ...}``. ReLU sits between layers, not after the last one.
    """

    arch: str
    dims: list[int]
    layers: list[dict[str, np.ndarray]]
    add_self_loops: bool = False

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if len(self.dims) < 2:
            raise ValueError("need at least one layer")
        if len(self.layers) != len(self.dims) - 1:
            raise ValueError("layer count does not match dims")
        for i, layer in enumerate(self.layers):
            for name, w in layer.items():
                if w.shape != (self.dims[i], self.dims[i + 1]):
                    raise ValueError(
                        f"layer {i} {name} has shape {w.shape}, expected {(self.dims[i], self.dims[i + 1])}"
                    )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def weight_names(self) -> tuple[str, ...]:
        return ("W",) if self.arch == "gcn" else ("W_self", "W_neigh")

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            list(self.dims),
            [{k: w.copy() for k, w in layer.items()} for layer in self.layers],
            self.add_self_loops,
        )

    def zeros_like(self) -> list[dict[str, np.ndarray]]:
        return [{k: np.zeros_like(w) for k, w in layer.items()} for layer in self.layers]

    def allclose(self, other: "ModelParams", atol: float = 0.0) -> bool:
        if (self.arch, self.dims, self.add_self_loops) != (other.arch, other.dims, other.add_self_loops):
            return False
        return all(
            np.allclose(a[k], b[k], rtol=0, atol=atol) for a, b in zip(self.layers, other.layers) for k in a
        )


def init_params(
    arch: str,
    in_dim: int,
    hidden_dim: int,
    out_dim: int,
    num_layers: int,
    add_self_loops: bool = False,
    seed: int | np.random.Generator | None = 0,
) -> ModelParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` initialisation."""
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    arch = arch.lower()
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
    names = ("W",) if arch == "gcn" else ("W_self", "W_neigh")
    layers = []
    for i in range(num_layers):
        bound = 1.0 / math.sqrt(dims[i])
        layers.append({n: rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])) for n in names})
    return ModelParams(arch, dims, layers, add_self_loops)


def _as_graph(g: Graph | Subgraph) -> Graph:
    return g.graph if isinstance(g, Subgraph) else g


def propagation_matrix(g: Graph | Subgraph, arch: str, add_self_loops: bool = False) -> sp.csr_matrix:
    """Sparse aggregation operator for one layer.

    GCN: ``D^-1/2 A D^-1/2``; SAGE: row-mean ``D^-1 A``. Degrees are
    clamped to 1, so a node without neighbours aggregates zeros.
    """
    g = _as_graph(g)
    n = g.num_nodes
    data = np.ones(len(g.indices))
    adj = sp.csr_matrix((data, g.indices, g.indptr), shape=(n, n))
    if add_self_loops:
        adj = (adj + sp.identity(n, format="csr")).tocsr()
    deg = np.maximum(np.asarray(adj.sum(axis=1)).ravel(), 1.0)
    if arch == "gcn":
        dinv = 1.0 / np.sqrt(deg)
        return sp.diags(dinv) @ adj @ sp.diags(dinv)
    return (sp.diags(1.0 / deg) @ adj).tocsr()


@dataclass
class ForwardCache:
    prop: sp.csr_matrix
    inputs: list[np.ndarray] = field(default_factory=list)
    aggregated: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)


def _forward(prop, X: np.ndarray, params: ModelParams) -> tuple[np.ndarray, ForwardCache]:
    cache = ForwardCache(prop)
    H = X
    last = params.num_layers - 1
    for i, layer in enumerate(params.layers):
        agg = prop @ H
        if params.arch == "gcn":
            Z = agg @ layer["W"]
        else:
            Z = H @ layer["W_self"] + agg @ layer["W_neigh"]
        cache.inputs.append(H)
        cache.aggregated.append(agg)
        cache.pre.append(Z)
        H = Z if i == last else np.maximum(Z, 0.0)
    return H, cache


def _backward(dH: np.ndarray, cache: ForwardCache, params: ModelParams) -> list[dict[str, np.ndarray]]:
    grads: list[dict[str, np.ndarray]] = [None] * params.num_layers
    propT = cache.prop.T.tocsr()
    last = params.num_layers - 1
    for i in range(last, -1, -1):
        layer = params.layers[i]
        dZ = dH if i == last else dH * (cache.pre[i] > 0)
        H, agg = cache.inputs[i], cache.aggregated[i]
        if params.arch == "gcn":
            grads[i] = {"W": agg.T @ dZ}
            if i:
                dH = propT @ (dZ @ layer["W"].T)
        else:
            grads[i] = {"W_self": H.T @ dZ, "W_neigh": agg.T @ dZ}
            if i:
                dH = dZ @ layer["W_self"].T + propT @ (dZ @ layer["W_neigh"].T)
    return grads


def _check_features(X: np.ndarray, n: int, params: ModelParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError(f"expected {n} feature rows, got shape {X.shape}")
    if X.shape[1] != params.in_dim:
        raise ValueError(f"feature dim {X.shape[1]} does not match model input dim {params.in_dim}")
    return X


def gnn_forward(g: Graph | Subgraph, X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Node embeddings, one row per node of ``g`` (local ids for a subgraph)."""
    graph = _as_graph(g)
    X = _check_features(X, graph.num_nodes, params)
    prop = propagation_matrix(graph, params.arch, params.add_self_loops)
    out, _ = _forward(prop, X, params)
    return out


def dot_decoder(E: np.ndarray, pairs) -> np.ndarray:
    """Inner product of embedding rows for each ``(i, j)`` pair."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= len(E)):
        raise IndexError("pair id out of range")
    return np.einsum("ij,ij->i", E[pairs[:, 0]], E[pairs[:, 1]])


def bce_logit_loss(scores, labels) -> tuple[float, np.ndarray]:
    """Mean sigmoid cross-entropy and its gradient with respect to ``scores``.

    The gradient is ``(sigmoid(s) - y) / N``, i.e. of the mean.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    if len(s) == 0:
        raise ValueError("empty input")
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    return loss, (expit(s) - y) / len(s)


def _decoder_backward(E: np.ndarray, pairs: np.ndarray, dscore: np.ndarray) -> np.ndarray:
    dE = np.zeros_like(E)
    np.add.at(dE, pairs[:, 0], dscore[:, None] * E[pairs[:, 1]])
    np.add.at(dE, pairs[:, 1], dscore[:, None] * E[pairs[:, 0]])
    return dE


def _batch_inputs(batch, X: np.ndarray):
    sub = batch.message_graph
    pos, neg = batch.local_pairs()
    pairs = np.concatenate([pos, neg]) if len(neg) else pos
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return sub, np.asarray(X, dtype=np.float64)[sub.node_map], pairs, labels


def loss_and_grads(graph: Graph | Subgraph, X: np.ndarray, params: ModelParams, pairs, labels):
    """Loss over scored pairs and gradients for every weight matrix."""
    graph = _as_graph(graph)
    X = _check_features(X, graph.num_nodes, params)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    prop = propagation_matrix(graph, params.arch, params.add_self_loops)
    E, cache = _forward(prop, X, params)
    loss, dscore = bce_logit_loss(dot_decoder(E, pairs), labels)
    grads = _backward(_decoder_backward(E, pairs, dscore), cache, params)
    return loss, grads, cache


def batch_loss(batch, X: np.ndarray, params: ModelParams) -> float:
    sub, X_local, pairs, labels = _batch_inputs(batch, X)
    E = gnn_forward(sub, X_local, params)
    return bce_logit_loss(dot_decoder(E, pairs), labels)[0]


def train_step(
    batch,
    X: np.ndarray,
    params: ModelParams,
    lr: float,
    momentum: float = 0.0,
    velocity: list[dict[str, np.ndarray]] | None = None,
) -> tuple[ModelParams, float]:
    """One SGD step on a batch; returns new params and the pre-update loss.

    ``velocity`` (from :meth:`ModelParams.zeros_like`) is updated in place
    when momentum is used.

    Raises:
        FloatingPointError: the loss is not finite.
    """
    sub, X_local, pairs, labels = _batch_inputs(batch, X)
    # divergence is reported below as an exception, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grads, _ = loss_and_grads(sub, X_local, params, pairs, labels)
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss at epoch {batch.epoch} batch {batch.index}")
    new = params.copy()
    for i, layer in enumerate(new.layers):
        for name in layer:
            step = grads[i][name]
            if momentum and velocity is not None:
                v = velocity[i][name]
                v *= momentum
                v += step
                step = v
            layer[name] -= lr * step
    return new, loss


def near_relu_kink(cache: ForwardCache, tol: float, arch: str = "sage") -> bool:
    """Whether any hidden pre-activation lies within ``tol`` of zero.

    Rows whose layer inputs are all zero are exempt: their pre-activation is
    zero for every weight setting, so a perturbation cannot cross the kink.
    """
    for H, agg, Z in zip(cache.inputs[:-1], cache.aggregated[:-1], cache.pre[:-1]):
        live = np.any(agg != 0, axis=1)
        if arch == "sage":
            live |= np.any(H != 0, axis=1)
        if np.any(np.abs(Z[live]) < tol):
            return True
    return False


def grad_check(params: ModelParams, batch, X: np.ndarray, epsilon: float = 1e-4) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``batch`` may be a sampler :class:`~linkexclude.sampling.Batch` or a
    ``(graph, X_local, pairs, labels)`` tuple, in which case ``X`` is
    ignored. Returns ``nan`` when a hidden pre-activation sits close enough
    to the ReLU kink that the finite difference would straddle it.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    if isinstance(batch, tuple):
        graph, X_local, pairs, labels = batch
    else:
        graph, X_local, pairs, labels = _batch_inputs(batch, X)
    graph = _as_graph(graph)
    _, grads, cache = loss_and_grads(graph, X_local, params, pairs, labels)
    if near_relu_kink(cache, 10 * epsilon * max(1.0, float(np.abs(X_local).max(initial=0.0))), params.arch):
        logger.info("grad_check skipped: pre-activation near ReLU kink")
        return math.nan

    def f(p):
        return loss_and_grads(graph, X_local, p, pairs, labels)[0]

    probe = params.copy()
    worst = 0.0
    for i, layer in enumerate(probe.layers):
        for name, w in layer.items():
            flat = w.reshape(-1)
            ana = grads[i][name].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + epsilon
                up = f(probe)
                flat[j] = orig - epsilon
                down = f(probe)
                flat[j] = orig
                num = (up - down) / (2 * epsilon)
                denom = max(abs(ana[j]), abs(num), 1e-8)
                worst = max(worst, abs(ana[j] - num) / denom)
    return worst


def save_checkpoint(path, params: ModelParams) -> None:
    """Write params as a text header followed by raw float64 matrices.

    Layout::

        LXCKPT 1
        arch=<gcn|sage>
        layers=<count>
        dims=<d0,d1,...>
        add_self_loops=<true|false>
        weights=<comma-separated names per layer>
        end
        <row-major little-endian float64 bytes, layer by layer, names in order>
    """
    names = params.weight_names()
    header = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"arch={params.arch}",
        f"layers={params.num_layers}",
        "dims=" + ",".join(str(d) for d in params.dims),
        f"add_self_loops={str(params.add_self_loops).lower()}",
        "weights=" + ",".join(names),
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for layer in params.layers:
            for name in names:
                fh.write(np.ascontiguousarray(layer[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise ValueError(f"{path}: not a checkpoint (missing header terminator)")
    lines = raw[:cut].decode("ascii").split("\n")
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = dict(line.split("=", 1) for line in lines[1:])
    dims = [int(d) for d in meta["dims"].split(",")]
    names = meta["weights"].split(",")
    body = raw[cut + len(marker) :]
    offset = 0
    layers = []
    for i in range(int(meta["layers"])):
        layer = {}
        for name in names:
            count = dims[i] * dims[i + 1]
            w = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
            layer[name] = w.reshape(dims[i], dims[i + 1]).astype(np.float64)
            offset += 8 * count
        layers.append(layer)
    if offset != len(body):
        raise ValueError(f"{path}: {len(body) - offset} trailing bytes")
    return ModelParams(meta["arch"], dims, layers, meta["add_self_loops"] == "true")
