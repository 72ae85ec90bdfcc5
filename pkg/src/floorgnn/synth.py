"""Seeded synthetic floor plans used in place of the real dataset at desk scale.

Layout: the plan outline is cut recursively (guillotine splits) into tiling
rooms, each room is inset by a small wall margin, and occasionally a small room
(closet-like) is nested inside an existing one. Rooms that share a cut stay well
within the adjacency threshold, so every plan's room graph is connected.

Labels follow a fixed structural rule evaluated on the normalized plan:

* the largest-area room gets category 0;
* rooms nested inside another room get category 5;
* every other room gets ``degree mod n_categories`` where ``degree`` is the
  number of rooms within the adjacency threshold.

Each room's walls are its four bounding-box edges; door flags are drawn
independently, so the door-count feature carries no label information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FloorPlanRecord, RoomRecord, WallRecord, normalize_plan
from .errors import BadConfigError
from .graph import GraphBuildConfig, build_adjacency, detect_nesting
from .vocab import DEFAULT_LABELS, CategoryVocab

LARGEST_CATEGORY = 0
NESTED_CATEGORY = 5

_SOURCE_SCALE = 256.0
_DOOR_PROB = 0.3
_NESTED_PROB = 0.35
_MAX_INSET = 0.006


@dataclass(frozen=True)
class SynthConfig:
    n_plans: int = 100
    rooms_min: int = 3
    rooms_max: int = 8
    seed: int = 0
    n_categories: int = 8

    def validate(self):
        if self.n_plans < 1:
            raise BadConfigError("n_plans must be at least 1")
        if not 2 <= self.rooms_min <= self.rooms_max:
            raise BadConfigError("need 2 <= rooms_min <= rooms_max")
        if self.n_categories <= NESTED_CATEGORY:
            raise BadConfigError(f"n_categories must exceed {NESTED_CATEGORY}")


def synth_vocab(n_categories: int) -> CategoryVocab:
    if n_categories == len(DEFAULT_LABELS):
        return CategoryVocab(DEFAULT_LABELS)
    return CategoryVocab(tuple(f"category_{k}" for k in range(n_categories)))


def _guillotine(rng, width, height, n_tiles):
    rects = [(0.0, 0.0, width, height)]
    while len(rects) < n_tiles:
        areas = np.array([(r[2] - r[0]) * (r[3] - r[1]) for r in rects])
        k = int(rng.choice(len(rects), p=areas / areas.sum()))
        x0, y0, x1, y1 = rects.pop(k)
        t = rng.uniform(0.3, 0.7)
        if x1 - x0 >= y1 - y0:
            cut = x0 + t * (x1 - x0)
            rects[k:k] = [(x0, y0, cut, y1), (cut, y0, x1, y1)]
        else:
            cut = y0 + t * (y1 - y0)
            rects[k:k] = [(x0, y0, x1, cut), (x0, cut, x1, y1)]
    return rects


def label_rooms(plan: FloorPlanRecord, n_categories: int = 8, cfg: GraphBuildConfig = GraphBuildConfig()):
    """Category indices under the synthetic labelling rule (see module docstring)."""
    norm = normalize_plan(plan)
    n = len(norm.rooms)
    degree = np.zeros(n, dtype=np.int64)
    for i, j in build_adjacency(norm, cfg):
        degree[i] += 1
        degree[j] += 1
    _, is_child = detect_nesting(norm, cfg)
    labels = degree % n_categories
    labels[is_child == 1] = NESTED_CATEGORY
    areas = np.array([r.area for r in norm.rooms])
    labels[int(np.argmax(areas))] = LARGEST_CATEGORY
    return labels


def _make_plan(rng, cfg: SynthConfig, vocab: CategoryVocab, ordinal: int) -> FloorPlanRecord:
    n_rooms = int(rng.integers(cfg.rooms_min, cfg.rooms_max + 1))
    n_nested = int(n_rooms >= 3 and rng.random() < _NESTED_PROB)
    height = rng.uniform(0.5, 1.0)
    tiles = _guillotine(rng, 1.0, height, n_rooms - n_nested)

    boxes = []
    for x0, y0, x1, y1 in tiles:
        m = rng.uniform(0.0, _MAX_INSET, size=4)
        boxes.append((x0 + m[0], y0 + m[1], x1 - m[2], y1 - m[3]))
    for _ in range(n_nested):
        hx0, hy0, hx1, hy1 = boxes[int(rng.integers(len(boxes)))]
        w = (hx1 - hx0) * rng.uniform(0.2, 0.45)
        h = (hy1 - hy0) * rng.uniform(0.2, 0.45)
        cx = rng.uniform(hx0, hx1 - w)
        cy = rng.uniform(hy0, hy1 - h)
        boxes.append((cx, cy, cx + w, cy + h))

    origin = rng.uniform(0.0, 20.0, size=2)
    scaled = [
        tuple(
            round(float(v), 3)
            for v in (
                origin[0] + b[0] * _SOURCE_SCALE,
                origin[1] + b[1] * _SOURCE_SCALE,
                origin[0] + b[2] * _SOURCE_SCALE,
                origin[1] + b[3] * _SOURCE_SCALE,
            )
        )
        for b in boxes
    ]

    walls = []
    for r, (x0, y0, x1, y1) in enumerate(scaled):
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        doors = rng.random(4) < _DOOR_PROB
        for k in range(4):
            walls.append(WallRecord(corners[k], corners[(k + 1) % 4], (r,), bool(doors[k])))

    placeholder = tuple(RoomRecord(b, vocab.labels[0]) for b in scaled)
    plan = FloorPlanRecord(f"synth-{cfg.seed}-{ordinal:06d}", placeholder, tuple(walls), None)
    labels = label_rooms(plan, cfg.n_categories)
    rooms = tuple(RoomRecord(b, vocab.labels[int(c)]) for b, c in zip(scaled, labels))
    return FloorPlanRecord(plan.id, rooms, plan.walls, None)


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    vocab = synth_vocab(cfg.n_categories)
    return Dataset([_make_plan(rng, cfg, vocab, k) for k in range(cfg.n_plans)], vocab)
