"""Room-adjacency graphs built from normalized floor plans."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import FloorPlanRecord, normalize_plan
from .errors import (
    BadConfigError,
    EmptyBatchError,
    EmptyEdgesError,
    IOFailure,
    SchemaError,
)
from .vocab import CategoryVocab

N_FEATURES = 6
FEATURE_NAMES = ("area", "length", "width", "door_count", "is_parent", "is_child")


@dataclass(frozen=True)
class GraphBuildConfig:
    adjacency_threshold: float = 0.03
    nesting_ratio: float = 0.7

    def __post_init__(self):
        if not 0 < self.adjacency_threshold < 1:
            raise BadConfigError("adjacency_threshold must lie in (0, 1)")
        if not 0 < self.nesting_ratio <= 1:
            raise BadConfigError("nesting_ratio must lie in (0, 1]")


class _Connectivity:
    @cached_property
    def n_nodes(self) -> int:
        return int(self.features.shape[0])


@dataclass(eq=False)
class RoomGraph(_Connectivity):
    features: np.ndarray  # (N, 6)
    edges: np.ndarray  # (E, 2), i < j
    labels: np.ndarray  # (N,)
    plan_id: str = ""

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "x": self.features.tolist(),
            "edges": self.edges.tolist(),
            "y": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "RoomGraph":
        try:
            x = np.asarray(doc["x"], dtype=np.float64).reshape(-1, N_FEATURES)
            edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
            y = np.asarray(doc["y"], dtype=np.int64)
            plan_id = str(doc["plan_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed graph document: {exc}") from exc
        if y.shape != (x.shape[0],):
            raise SchemaError("label count does not match node count")
        if edges.size and (edges.min() < 0 or edges.max() >= x.shape[0]):
            raise SchemaError("edge endpoint out of range")
        return cls(x, edges, y, plan_id)


@dataclass(eq=False)
class BatchedGraph(_Connectivity):
    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    graph_of_node: np.ndarray
    plan_ids: tuple = ()
    edge_counts: tuple = field(default=(), repr=False)

    @property
    def n_graphs(self) -> int:
        return len(self.plan_ids)


# --- geometry ---------------------------------------------------------------------


def rect_gap_distance(a, b) -> float:
    """Euclidean distance between the closest points of two closed rectangles."""
    dx = max(a[0] - b[2], b[0] - a[2], 0.0)
    dy = max(a[1] - b[3], b[1] - a[3], 0.0)
    return float(np.hypot(dx, dy))


def _boxes(plan: FloorPlanRecord) -> np.ndarray:
    return np.array([r.bbox for r in plan.rooms], dtype=np.float64).reshape(-1, 4)


def pairwise_gaps(boxes: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = (boxes[:, k] for k in range(4))
    dx = np.maximum(np.maximum(x0[:, None] - x1[None, :], x0[None, :] - x1[:, None]), 0.0)
    dy = np.maximum(np.maximum(y0[:, None] - y1[None, :], y0[None, :] - y1[:, None]), 0.0)
    return np.hypot(dx, dy)


def build_adjacency(p: FloorPlanRecord, cfg: GraphBuildConfig = GraphBuildConfig()) -> np.ndarray:
    """Edges (i, j), i < j, for every room pair closer than the threshold."""
    gaps = pairwise_gaps(_boxes(p))
    i, j = np.nonzero(np.triu(gaps < cfg.adjacency_threshold, k=1))
    return np.stack([i, j], axis=1).astype(np.int64)


def detect_nesting(p: FloorPlanRecord, cfg: GraphBuildConfig = GraphBuildConfig()):
    """Flag rooms whose overlap with another room exceeds ``nesting_ratio`` of their area.

    Returns ``(is_parent, is_child)`` as 0/1 integer arrays.
    """
    b = _boxes(p)
    ix = np.maximum(np.minimum(b[:, None, 2], b[None, :, 2]) - np.maximum(b[:, None, 0], b[None, :, 0]), 0.0)
    iy = np.maximum(np.minimum(b[:, None, 3], b[None, :, 3]) - np.maximum(b[:, None, 1], b[None, :, 1]), 0.0)
    inter = ix * iy
    area = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    nested = inter > cfg.nesting_ratio * area[:, None]  # [child, parent]
    np.fill_diagonal(nested, False)
    return nested.any(axis=0).astype(np.int64), nested.any(axis=1).astype(np.int64)


def count_doors(p: FloorPlanRecord) -> np.ndarray:
    doors = np.zeros(len(p.rooms), dtype=np.int64)
    for wall in p.walls:
        if wall.has_door:
            for r in set(wall.room_ids):
                doors[r] += 1
    return doors


def extract_features(p: FloorPlanRecord, cfg: GraphBuildConfig = GraphBuildConfig()) -> np.ndarray:
    b = _boxes(p)
    dx = b[:, 2] - b[:, 0]
    dy = b[:, 3] - b[:, 1]
    is_parent, is_child = detect_nesting(p, cfg)
    return np.column_stack(
        [dx * dy, np.maximum(dx, dy), np.minimum(dx, dy), count_doors(p), is_parent, is_child]
    ).astype(np.float64)


def build_graph(
    p: FloorPlanRecord,
    vocab: CategoryVocab = CategoryVocab(),
    cfg: GraphBuildConfig = GraphBuildConfig(),
) -> RoomGraph:
    labels = np.array([vocab.encode(r.category) for r in p.rooms], dtype=np.int64)
    norm = normalize_plan(p)
    edges = build_adjacency(norm, cfg)
    if len(edges) == 0:
        raise EmptyEdgesError(f"plan {p.id!r} has no adjacent rooms")
    return RoomGraph(extract_features(norm, cfg), edges, labels, p.id)


# --- batching ---------------------------------------------------------------------


def batch_graphs(gs) -> BatchedGraph:
    """Disjoint union of ``gs`` with node indices offset per graph."""
    gs = list(gs)
    if not gs:
        raise EmptyBatchError("cannot batch an empty list of graphs")
    sizes = np.array([g.features.shape[0] for g in gs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    edges = np.concatenate(
        [np.asarray(g.edges, dtype=np.int64).reshape(-1, 2) + off for g, off in zip(gs, offsets)]
    )
    return BatchedGraph(
        features=np.concatenate([g.features for g in gs]),
        edges=edges,
        labels=np.concatenate([g.labels for g in gs]),
        graph_of_node=np.repeat(np.arange(len(gs)), sizes),
        plan_ids=tuple(g.plan_id for g in gs),
        edge_counts=tuple(len(g.edges) for g in gs),
    )


def unbatch(bg: BatchedGraph) -> list:
    out = []
    edge_start = 0
    for k, plan_id in enumerate(bg.plan_ids):
        nodes = np.flatnonzero(bg.graph_of_node == k)
        offset = nodes[0] if len(nodes) else 0
        e = bg.edges[edge_start : edge_start + bg.edge_counts[k]]
        edge_start += bg.edge_counts[k]
        out.append(RoomGraph(bg.features[nodes], e - offset, bg.labels[nodes], plan_id))
    return out


# --- graph dump I/O --------------------------------------------------------------


def save_graphs(graphs, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for g in graphs:
                fh.write(json.dumps(g.to_dict()) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def load_graphs(path) -> list:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    graphs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            graphs.append(RoomGraph.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc.args[0]}") from exc
    return graphs
