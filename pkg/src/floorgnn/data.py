"""Vectorized floor-plan records: JSONL I/O, cleaning, splitting, normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadSplitError, DegenerateError, IOFailure, SchemaError
from .vocab import CategoryVocab


@dataclass(frozen=True)
class RoomRecord:
    bbox: tuple  # (x_min, y_min, x_max, y_max)
    category: str

    @property
    def width(self):
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self):
        return self.bbox[3] - self.bbox[1]

    @property
    def area(self):
        return self.width * self.height


@dataclass(frozen=True)
class WallRecord:
    p1: tuple
    p2: tuple
    room_ids: tuple
    has_door: bool


@dataclass(frozen=True)
class FloorPlanRecord:
    id: str
    rooms: tuple
    walls: tuple = ()
    source_image: Optional[str] = None


@dataclass
class Dataset:
    plans: list
    vocab: CategoryVocab

    def __len__(self):
        return len(self.plans)


# --- JSONL schema -----------------------------------------------------------


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    if not np.isfinite(value):
        raise SchemaError(f"{where}: non-finite number")
    return float(value)


def _point(value, where):
    if not isinstance(value, list) or len(value) != 2:
        raise SchemaError(f"{where}: expected [x, y]")
    return (_number(value[0], where), _number(value[1], where))


def plan_from_dict(doc) -> FloorPlanRecord:
    if not isinstance(doc, dict):
        raise SchemaError("plan document must be an object")
    for key in ("id", "rooms"):
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    if not isinstance(doc["id"], str):
        raise SchemaError("'id' must be a string")
    if not isinstance(doc["rooms"], list):
        raise SchemaError("'rooms' must be a list")

    rooms = []
    for r, room in enumerate(doc["rooms"]):
        where = f"rooms[{r}]"
        if not isinstance(room, dict):
            raise SchemaError(f"{where}: must be an object")
        if "bbox" not in room:
            raise SchemaError(f"{where}: missing field 'bbox'")
        if "category" not in room:
            raise SchemaError(f"{where}: missing field 'category'")
        bbox = room["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise SchemaError(f"{where}.bbox: expected [x0, y0, x1, y1]")
        cat = room["category"]
        if not isinstance(cat, str) or not cat:
            raise SchemaError(f"{where}.category: expected a non-empty string")
        rooms.append(RoomRecord(tuple(_number(v, f"{where}.bbox") for v in bbox), cat))

    walls = []
    for w, wall in enumerate(doc.get("walls", [])):
        where = f"walls[{w}]"
        if not isinstance(wall, dict):
            raise SchemaError(f"{where}: must be an object")
        for key in ("p1", "p2", "rooms", "door"):
            if key not in wall:
                raise SchemaError(f"{where}: missing field {key!r}")
        ids = wall["rooms"]
        if not isinstance(ids, list) or any(
            isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(rooms) for i in ids
        ):
            raise SchemaError(f"{where}.rooms: invalid room index list {ids!r}")
        if not isinstance(wall["door"], bool):
            raise SchemaError(f"{where}.door: expected a boolean")
        walls.append(
            WallRecord(_point(wall["p1"], where), _point(wall["p2"], where), tuple(ids), wall["door"])
        )

    source = doc.get("source_image")
    if source is not None and not isinstance(source, str):
        raise SchemaError("'source_image' must be a string or null")
    return FloorPlanRecord(doc["id"], tuple(rooms), tuple(walls), source)


def plan_to_dict(plan: FloorPlanRecord) -> dict:
    return {
        "id": plan.id,
        "rooms": [{"bbox": list(r.bbox), "category": r.category} for r in plan.rooms],
        "walls": [
            {"p1": list(w.p1), "p2": list(w.p2), "rooms": list(w.room_ids), "door": w.has_door}
            for w in plan.walls
        ],
        "source_image": plan.source_image,
    }


def load_dataset(path, format="jsonl", vocab: Optional[CategoryVocab] = None) -> Dataset:
    """Read one floor plan per line. Without ``vocab`` the sorted unique categories are used."""
    if format != "jsonl":
        raise SchemaError(f"unsupported format {format!r}")
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc

    plans = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            plans.append(plan_from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc.args[0]}") from exc

    if vocab is None:
        vocab = CategoryVocab.infer(r.category for p in plans for r in p.rooms)
    return Dataset(plans, vocab)


def save_dataset(dataset: Dataset, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for plan in dataset.plans:
                fh.write(json.dumps(plan_to_dict(plan)) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


# --- cleaning and splitting ---------------------------------------------------


def _plan_is_clean(plan: FloorPlanRecord) -> bool:
    if len(plan.rooms) < 2:
        return False
    return all(r.bbox[2] > r.bbox[0] and r.bbox[3] > r.bbox[1] for r in plan.rooms)


def clean_dataset(d: Dataset):
    """Drop single-room plans and plans with any zero-area or inverted room.

    Returns ``(cleaned, n_removed)``.
    """
    kept = [p for p in d.plans if _plan_is_clean(p)]
    return Dataset(kept, d.vocab), len(d.plans) - len(kept)


def split_dataset(d: Dataset, n_train: int, shuffle_seed: Optional[int] = None):
    """Prefix split: the first ``n_train`` plans train, the rest test.

    With ``shuffle_seed`` the plans are permuted by a seeded RNG before cutting.
    """
    n = len(d.plans)
    if not 0 < n_train < n:
        raise BadSplitError(f"n_train={n_train} must lie strictly between 0 and {n}")
    plans = list(d.plans)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
        plans = [plans[i] for i in order]
    return Dataset(plans[:n_train], d.vocab), Dataset(plans[n_train:], d.vocab)


# --- normalization --------------------------------------------------------------


def plan_extent(plan: FloorPlanRecord):
    xs = [v for r in plan.rooms for v in (r.bbox[0], r.bbox[2])]
    ys = [v for r in plan.rooms for v in (r.bbox[1], r.bbox[3])]
    for w in plan.walls:
        xs += [w.p1[0], w.p2[0]]
        ys += [w.p1[1], w.p2[1]]
    if not xs:
        raise DegenerateError(f"plan {plan.id!r} has no geometry")
    return min(xs), min(ys), max(xs), max(ys)


def normalize_plan(p: FloorPlanRecord) -> FloorPlanRecord:
    """Shift the plan's bounding box to the origin and divide by its longer side."""
    x0, y0, x1, y1 = plan_extent(p)
    scale = max(x1 - x0, y1 - y0)
    if scale <= 0:
        raise DegenerateError(f"plan {p.id!r} has zero spatial extent")

    def pt(x, y):
        return ((x - x0) / scale, (y - y0) / scale)

    rooms = tuple(
        replace(r, bbox=pt(r.bbox[0], r.bbox[1]) + pt(r.bbox[2], r.bbox[3])) for r in p.rooms
    )
    walls = tuple(replace(w, p1=pt(*w.p1), p2=pt(*w.p2)) for w in p.walls)
    return replace(p, rooms=rooms, walls=walls)
