"""MLP, GCN, GAT, GraphSAGE and TAGCN node classifiers sharing one architecture.

Every model is ``in_dim -> depth x hidden_dim (ReLU) -> out_dim``. Hidden layers
and the output layer are of the model's own kind; the MLP ignores edges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .errors import BadConfigError, BadIndexError, ShapeError
from .tensor import Tensor

KINDS = ("mlp", "gcn", "gat", "sage", "tagcn")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp"
    depth: int = 2
    hidden_dim: int = 16
    in_dim: int = 6
    out_dim: int = 8
    tagcn_k: int = 3
    gat_heads: int = 1
    gat_slope: float = 0.2
    seed: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise BadConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.depth < 1:
            raise BadConfigError("depth must be >= 1")
        if min(self.hidden_dim, self.in_dim, self.out_dim) < 1:
            raise BadConfigError("layer dimensions must be positive")
        if self.tagcn_k < 0 or self.gat_heads < 1:
            raise BadConfigError("tagcn_k must be >= 0 and gat_heads >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# --- graph structure ------------------------------------------------------------------


class GraphOps:
    """Index arrays and normalization weights for message passing on one graph.

    Duplicate and self edges in the input are dropped; ``src``/``dst`` hold
    both directions of every remaining edge, and the ``loop_*`` arrays add
    exactly one self-loop per node.
    """

    def __init__(self, edges, n_nodes: int):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n_nodes):
            raise BadIndexError(f"edge endpoint out of range [0, {n_nodes})")
        e = e[e[:, 0] != e[:, 1]]
        e = np.unique(np.sort(e, axis=1), axis=0)
        self.n_nodes = n_nodes
        self.src = np.concatenate([e[:, 0], e[:, 1]])
        self.dst = np.concatenate([e[:, 1], e[:, 0]])
        nodes = np.arange(n_nodes)
        self.loop_src = np.concatenate([self.src, nodes])
        self.loop_dst = np.concatenate([self.dst, nodes])

    @cached_property
    def gcn_weight(self) -> np.ndarray:
        """Per-edge coefficient of D^-1/2 (A + I) D^-1/2, aligned with ``loop_src``."""
        deg = np.bincount(self.loop_dst, minlength=self.n_nodes).astype(np.float64)
        inv_sqrt = 1.0 / np.sqrt(deg)
        return (inv_sqrt[self.loop_src] * inv_sqrt[self.loop_dst])[:, None]

    @cached_property
    def gcn_matrix(self):
        """Sparse D^-1/2 (A + I) D^-1/2."""
        n = self.n_nodes
        return sp.csr_matrix((self.gcn_weight[:, 0], (self.loop_dst, self.loop_src)), shape=(n, n))

    @cached_property
    def mean_matrix(self):
        """Sparse row-normalized adjacency (no self-loops); isolated nodes get zero rows."""
        n = self.n_nodes
        deg = np.bincount(self.dst, minlength=n).astype(np.float64)
        w = 1.0 / deg[self.dst]
        return sp.csr_matrix((w, (self.dst, self.src)), shape=(n, n))


def graph_ops(g_or_edges, n_nodes=None) -> GraphOps:
    if isinstance(g_or_edges, GraphOps):
        return g_or_edges
    if hasattr(g_or_edges, "features"):
        cached = g_or_edges.__dict__.get("_graph_ops")
        if cached is None:
            cached = GraphOps(g_or_edges.edges, g_or_edges.features.shape[0])
            g_or_edges.__dict__["_graph_ops"] = cached
        return cached
    return GraphOps(g_or_edges, n_nodes)


def normalized_propagate(H, ops: GraphOps) -> Tensor:
    """D^-1/2 (A + I) D^-1/2 H."""
    return T.sparse_matmul(ops.gcn_matrix, H)


def neighbor_mean(H, ops: GraphOps) -> Tensor:
    return T.sparse_matmul(ops.mean_matrix, H)


# --- layers ---------------------------------------------------------------------------


def _n(H):
    return T.as_tensor(H).shape[0]


def _with_bias(out, bias):
    return out if bias is None else T.bias_add(out, bias)


def dense_forward(H, W, bias=None) -> Tensor:
    return _with_bias(T.matmul(H, W), bias)


def gcn_forward(H, edges, W, bias=None) -> Tensor:
    ops = graph_ops(edges, _n(H))
    return _with_bias(normalized_propagate(T.matmul(H, W), ops), bias)


def gat_attention(H, edges, W, a, slope: float = 0.2):
    """Attention coefficients over each node's neighbourhood plus itself.

    Returns ``(Wh, alpha, ops)`` where ``alpha`` is aligned with
    ``ops.loop_src``/``ops.loop_dst`` (source j, target i).
    """
    ops = graph_ops(edges, _n(H))
    Wh = T.matmul(H, W)
    f_out = Wh.shape[1]
    a = T.reshape(a, (2 * f_out, 1))
    a_dst = T.gather(a, np.arange(f_out))
    a_src = T.gather(a, np.arange(f_out, 2 * f_out))
    score = T.add(
        T.gather(T.matmul(Wh, a_dst), ops.loop_dst),
        T.gather(T.matmul(Wh, a_src), ops.loop_src),
    )
    alpha = T.segment_softmax(T.leaky_relu(score, slope), ops.loop_dst, ops.n_nodes)
    return Wh, alpha, ops


def gat_forward(H, edges, W, a, bias=None, slope: float = 0.2) -> Tensor:
    Wh, alpha, ops = gat_attention(H, edges, W, a, slope)
    out = T.segment_sum(T.mul(T.gather(Wh, ops.loop_src), alpha), ops.loop_dst, ops.n_nodes)
    return _with_bias(out, bias)


def sage_forward(H, edges, W_self, W_neigh, bias=None) -> Tensor:
    ops = graph_ops(edges, _n(H))
    neigh = neighbor_mean(H, ops)
    return _with_bias(T.add(T.matmul(H, W_self), T.matmul(neigh, W_neigh)), bias)


def tagcn_forward(H, edges, Ws, bias=None) -> Tensor:
    """Sum over hops k of M^k H W_k, with M the self-looped normalized adjacency."""
    ops = graph_ops(edges, _n(H))
    out = T.matmul(H, Ws[0])
    hop = H
    for W in Ws[1:]:
        hop = normalized_propagate(hop, ops)
        out = T.add(out, T.matmul(hop, W))
    return _with_bias(out, bias)


# --- model ----------------------------------------------------------------------------


def _glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)), requires_grad=True)


def _zeros(n):
    return Tensor(np.zeros(n), requires_grad=True)


def _init_layer(rng, cfg: ModelConfig, f_in: int, f_out: int) -> dict:
    kind = cfg.kind
    if kind in ("mlp", "gcn"):
        params = {"weight": _glorot(rng, f_in, f_out)}
    elif kind == "sage":
        params = {"weight_self": _glorot(rng, f_in, f_out), "weight_neigh": _glorot(rng, f_in, f_out)}
    elif kind == "tagcn":
        params = {f"weight_{k}": _glorot(rng, f_in, f_out) for k in range(cfg.tagcn_k + 1)}
    else:
        params = {}
        for h in range(cfg.gat_heads):
            params[f"weight_{h}"] = _glorot(rng, f_in, f_out)
            params[f"att_{h}"] = _glorot(rng, 1, 2 * f_out, shape=(2 * f_out,))
    params["bias"] = _zeros(f_out)
    return params


class Model:
    def __init__(self, config: ModelConfig, layers: list):
        self.config = config
        self.layers = layers
        self.epochs_trained = 0
        self.optimizer_state = None

    def named_parameters(self):
        return [(f"layers.{i}.{name}", p) for i, layer in enumerate(self.layers) for name, p in layer.items()]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        for name, p in self.named_parameters():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ShapeError(f"{name}: expected shape {p.data.shape}, got {value.shape}")
            p.data = value.copy()

    def layer_forward(self, i: int, H, ops):
        cfg, p = self.config, self.layers[i]
        if cfg.kind == "mlp":
            return dense_forward(H, p["weight"], p["bias"])
        if cfg.kind == "gcn":
            return gcn_forward(H, ops, p["weight"], p["bias"])
        if cfg.kind == "sage":
            return sage_forward(H, ops, p["weight_self"], p["weight_neigh"], p["bias"])
        if cfg.kind == "tagcn":
            Ws = [p[f"weight_{k}"] for k in range(cfg.tagcn_k + 1)]
            return tagcn_forward(H, ops, Ws, p["bias"])
        heads = [
            gat_forward(H, ops, p[f"weight_{h}"], p[f"att_{h}"], slope=cfg.gat_slope)
            for h in range(cfg.gat_heads)
        ]
        out = heads[0]
        for extra in heads[1:]:
            out = T.add(out, extra)
        if cfg.gat_heads > 1:
            out = T.scale(out, 1.0 / cfg.gat_heads)
        return T.bias_add(out, p["bias"])

    def _hidden(self, g):
        x = np.asarray(g.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.in_dim:
            raise ShapeError(f"expected features of width {self.config.in_dim}, got shape {x.shape}")
        ops = None if self.config.kind == "mlp" else graph_ops(g)
        h = Tensor(x)
        for i in range(self.config.depth):
            h = T.relu(self.layer_forward(i, h, ops))
        return h, ops

    def forward(self, g) -> Tensor:
        h, ops = self._hidden(g)
        return self.layer_forward(self.config.depth, h, ops)

    __call__ = forward


def init_model(cfg: ModelConfig) -> Model:
    """Glorot-uniform weights and zero biases, drawn deterministically from ``cfg.seed``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dims = [cfg.in_dim] + [cfg.hidden_dim] * cfg.depth + [cfg.out_dim]
    layers = [_init_layer(rng, cfg, f_in, f_out) for f_in, f_out in zip(dims[:-1], dims[1:])]
    return Model(cfg, layers)


def model_forward(m: Model, g) -> Tensor:
    """Logits of shape (N, out_dim)."""
    return m.forward(g)


def node_embeddings(m: Model, g) -> np.ndarray:
    """Post-ReLU activations of the last hidden layer, shape (N, hidden_dim)."""
    h, _ = m._hidden(g)
    return h.data.copy()
