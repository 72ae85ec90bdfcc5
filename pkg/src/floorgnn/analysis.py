"""Untrained-model node embeddings and exact t-SNE."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BadPerplexityError, EmptyDataError, IOFailure, SchemaError, ShapeError
from .graph import batch_graphs
from .models import ModelConfig, init_model, node_embeddings


@dataclass
class EmbeddingDump:
    plan_ids: list
    node_index: np.ndarray
    labels: np.ndarray
    embeddings: np.ndarray  # (R, hidden_dim)

    def __len__(self):
        return len(self.plan_ids)


def export_embeddings(kind, graphs, cap: int = 10000, seed: int = 0, sample_seed: Optional[int] = None, **model_kw) -> EmbeddingDump:
    """Embed nodes with a randomly initialized (untrained) model.

    Takes the first ``cap`` nodes in dataset order, or ``cap`` nodes drawn
    uniformly without replacement when ``sample_seed`` is given.
    """
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataError("no graphs to embed")
    m = init_model(ModelConfig(kind=kind, seed=seed, **model_kw))
    total = sum(len(g.labels) for g in graphs)
    if sample_seed is None:
        keep = np.arange(min(cap, total))
    else:
        rng = np.random.default_rng(sample_seed)
        keep = np.sort(rng.choice(total, size=min(cap, total), replace=False))
    limit = keep[-1] + 1 if len(keep) else 0

    plan_ids, node_index, labels, chunks = [], [], [], []
    seen = 0
    for start in range(0, len(graphs), 256):
        if seen >= limit:
            break
        chunk = graphs[start : start + 256]
        bg = batch_graphs(chunk)
        emb = node_embeddings(m, bg)
        local = np.concatenate([np.arange(len(g.labels)) for g in chunk])
        pos = np.arange(seen, seen + len(bg.labels))
        sel = np.isin(pos, keep)
        plan_ids.extend(bg.plan_ids[k] for k in bg.graph_of_node[sel])
        node_index.append(local[sel])
        labels.append(bg.labels[sel])
        chunks.append(emb[sel])
        seen += len(bg.labels)
    return EmbeddingDump(plan_ids, np.concatenate(node_index), np.concatenate(labels), np.concatenate(chunks))


def write_embeddings_csv(dump: EmbeddingDump, path) -> None:
    dim = dump.embeddings.shape[1]
    _write_rows(
        path,
        ["plan_id", "node", "label"] + [f"e{k}" for k in range(dim)],
        dump.plan_ids,
        dump.node_index,
        dump.labels,
        dump.embeddings,
    )


def write_tsne_csv(dump: EmbeddingDump, coords: np.ndarray, path) -> None:
    _write_rows(path, ["plan_id", "node", "label", "x", "y"], dump.plan_ids, dump.node_index, dump.labels, coords)


def _write_rows(path, header, plan_ids, nodes, labels, values):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for pid, node, lab, vec in zip(plan_ids, nodes, labels, values):
                w.writerow([pid, int(node), int(lab)] + [repr(float(v)) for v in vec])
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_embeddings_csv(path) -> EmbeddingDump:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:3] != ["plan_id", "node", "label"] or len(header) < 4:
                raise SchemaError(f"unexpected embedding header {header}")
            rows = list(reader)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    try:
        return EmbeddingDump(
            [r[0] for r in rows],
            np.array([int(r[1]) for r in rows], dtype=np.int64),
            np.array([int(r[2]) for r in rows], dtype=np.int64),
            np.array([[float(v) for v in r[3:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 3),
        )
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"malformed embedding row: {exc}") from exc


# --- t-SNE ------------------------------------------------------------------------------


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_switch: int = 250
    seed: int = 0


@dataclass
class TsneResult:
    coords: np.ndarray
    kl: float
    P: np.ndarray = field(repr=False)
    perplexities: np.ndarray = field(repr=False)


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy(d, beta):
    """Natural-log entropy and normalized probabilities for one row of distances."""
    p = np.exp(-(d - d.min()) * beta)
    s = p.sum()
    p /= s
    return np.log(s) + beta * float(np.dot(d - d.min(), p)), p


def conditional_probabilities(D: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 50):
    """Per-row Gaussian conditionals whose perplexity matches ``perplexity``.

    Bisection on the precision beta; stops when |exp(H) - perplexity| <= tol.
    Returns ``(P_conditional, achieved_perplexities)``.
    """
    n = D.shape[0]
    P = np.zeros((n, n))
    achieved = np.zeros(n)
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        d = D[i, mask[i]]
        spread = d.mean() - d.min()
        beta = 1.0 / spread if spread > 0 else 1.0
        lo, hi = 0.0, np.inf
        for _ in range(max_iter):
            H, p = _row_entropy(d, beta)
            perp = np.exp(H)
            if abs(perp - perplexity) <= tol:
                break
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        P[i, mask[i]] = p
        achieved[i] = perp
    return P, achieved


def joint_probabilities(X: np.ndarray, perplexity: float):
    """Symmetrized P (sums to 1) plus the per-point achieved perplexities."""
    Pc, achieved = conditional_probabilities(squared_distances(np.asarray(X, dtype=np.float64)), perplexity)
    P = (Pc + Pc.T) / (2.0 * Pc.shape[0])
    return P, achieved


def _student_rows(Y, sq, s, block):
    """Unnormalized Student-t affinities for rows ``s:s+block``, diagonal zeroed."""
    num = 1.0 / (1.0 + np.maximum(sq[s : s + block, None] + sq[None, :] - 2.0 * Y[s : s + block] @ Y.T, 0.0))
    num[np.arange(num.shape[0]), np.arange(s, s + num.shape[0])] = 0.0
    return num


def _normalizer(Y, sq, block):
    return sum(_student_rows(Y, sq, s, block).sum() for s in range(0, Y.shape[0], block))


def _kl(P, Y, block):
    sq = (Y * Y).sum(axis=1)
    z = _normalizer(Y, sq, block)
    total = 0.0
    for s in range(0, Y.shape[0], block):
        p = P[s : s + block]
        q = _student_rows(Y, sq, s, block) / z
        nz = p > 0
        total += float(np.sum(p[nz] * np.log(p[nz] / np.maximum(q[nz], 1e-300))))
    return total


def _gradient(P, Y, exaggeration, block):
    sq = (Y * Y).sum(axis=1)
    z = _normalizer(Y, sq, block)
    grad = np.empty_like(Y)
    for s in range(0, Y.shape[0], block):
        num = _student_rows(Y, sq, s, block)
        W = (exaggeration * P[s : s + block] - num / z) * num
        grad[s : s + block] = 4.0 * (W.sum(axis=1)[:, None] * Y[s : s + block] - W @ Y)
    return grad


def tsne(X, cfg: TsneConfig = TsneConfig()) -> TsneResult:
    """Exact t-SNE with momentum gradient descent and per-coordinate adaptive gains."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3:
        raise ShapeError("t-SNE needs an (n, d) matrix with n >= 3")
    n = X.shape[0]
    if not 1 < cfg.perplexity < n:
        raise BadPerplexityError(f"perplexity {cfg.perplexity} must lie in (1, {n})")

    P, achieved = joint_probabilities(X, cfg.perplexity)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    block = max(1, min(n, 4_000_000 // n))

    for it in range(cfg.iterations):
        exaggeration = cfg.early_exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = 0.5 if it < cfg.momentum_switch else 0.8
        grad = _gradient(P, Y, exaggeration, block)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)

    return TsneResult(Y, _kl(P, Y, block), P, achieved)


def tsne_embed(X, cfg: TsneConfig = TsneConfig()) -> np.ndarray:
    """n x 2 t-SNE coordinates."""
    return tsne(X, cfg).coords
