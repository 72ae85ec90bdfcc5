"""Mini-batch training, accuracy evaluation, depth sweeps and checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadConfigError,
    ConfigMismatchError,
    EmptyDataError,
    FloorGNNError,
    IOFailure,
    SchemaError,
    ShapeError,
    VersionError,
)
from .graph import batch_graphs
from .models import KINDS, Model, ModelConfig, init_model
from .optim import AdamState, LrSchedule, adam_step, lr_at_epoch
from .tensor import Tape, log_softmax_np, softmax_cross_entropy

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
METRICS_HEADER = ("model", "depth", "epoch", "split", "loss", "accuracy")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    base_lr: float = 0.004
    lr_step: int = 10
    lr_gamma: float = 0.8
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise BadConfigError("epochs and batch_size must be >= 1")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.lr_step, self.lr_gamma)


@dataclass(frozen=True)
class MetricsRow:
    model_kind: str
    depth: int
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: Optional[float] = None  # not serialized

    def csv_fields(self):
        return (self.model_kind, str(self.depth), str(self.epoch), self.split, repr(self.loss), repr(self.accuracy))


def _check_graphs(m: Model, graphs):
    if not graphs:
        raise EmptyDataError("no graphs given")
    for g in graphs:
        if g.features.ndim != 2 or g.features.shape[1] != m.config.in_dim:
            raise ShapeError(f"graph {g.plan_id!r}: features must have width {m.config.in_dim}")
        if len(g.labels) and (g.labels.min() < 0 or g.labels.max() >= m.config.out_dim):
            raise ShapeError(f"graph {g.plan_id!r}: label outside [0, {m.config.out_dim})")


def train(m: Model, train_graphs, cfg: TrainConfig = TrainConfig(), test_graphs=None, eval_every: int = 0):
    """Train ``m`` in place with Adam on mean node cross-entropy.

    Returns ``(m, history)``: one train row per epoch (running loss/accuracy
    over the epoch's batches) plus test rows every ``eval_every`` epochs when
    ``test_graphs`` is given.
    """
    train_graphs = list(train_graphs)
    _check_graphs(m, train_graphs)
    rng = np.random.default_rng(cfg.seed)
    params = m.parameters()
    state = AdamState()
    schedule = cfg.schedule
    history = []
    n = len(train_graphs)

    fixed_batches = None
    if not cfg.shuffle_each_epoch:
        fixed_batches = [
            batch_graphs(train_graphs[i : i + cfg.batch_size]) for i in range(0, n, cfg.batch_size)
        ]

    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(schedule, epoch)
        if fixed_batches is None:
            order = rng.permutation(n)
            batches = (
                batch_graphs([train_graphs[k] for k in order[i : i + cfg.batch_size]])
                for i in range(0, n, cfg.batch_size)
            )
        else:
            batches = fixed_batches

        loss_sum = 0.0
        correct = 0
        total = 0
        for bg in batches:
            with Tape() as tape:
                logits = m.forward(bg)
                loss = softmax_cross_entropy(logits, bg.labels)
            grads = tape.backward(loss, params)
            adam_step(params, grads, state, lr)
            k = len(bg.labels)
            loss_sum += float(loss.data) * k
            correct += int((np.argmax(logits.data, axis=1) == bg.labels).sum())
            total += k

        m.epochs_trained += 1
        history.append(MetricsRow(m.config.kind, m.config.depth, epoch, "train", loss_sum / total, correct / total, lr))
        if test_graphs and eval_every and (epoch + 1) % eval_every == 0:
            tl, ta = evaluate_accuracy(m, test_graphs)
            history.append(MetricsRow(m.config.kind, m.config.depth, epoch, "test", tl, ta, lr))
    m.optimizer_state = state
    return m, history


def evaluate_accuracy(m: Model, graphs, batch_size: int = 512):
    """Mean node cross-entropy and micro accuracy (correct nodes / all nodes)."""
    graphs = list(graphs)
    _check_graphs(m, graphs)
    loss_sum = 0.0
    correct = 0
    total = 0
    for i in range(0, len(graphs), batch_size):
        bg = batch_graphs(graphs[i : i + batch_size])
        logits = m.forward(bg).data
        logp = log_softmax_np(logits)
        loss_sum += float(-logp[np.arange(len(bg.labels)), bg.labels].sum())
        correct += int((np.argmax(logits, axis=1) == bg.labels).sum())
        total += len(bg.labels)
    if total == 0:
        raise EmptyDataError("graphs contain no nodes")
    return loss_sum / total, correct / total


# --- depth sweep -------------------------------------------------------------------------


def cell_seed(seed: int, kind: str, depth: int) -> int:
    """Seed for one (kind, depth) cell, independent of which other cells run."""
    ss = np.random.SeedSequence([int(seed), KINDS.index(kind), int(depth)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_cell(kind, depth, train_graphs, test_graphs, cfg: TrainConfig, model_overrides=None):
    try:
        seed = cell_seed(cfg.seed, kind, depth)
        mcfg = ModelConfig(kind=kind, depth=depth, seed=seed, **(model_overrides or {}))
        m = init_model(mcfg)
        ccfg = TrainConfig(**{f.name: getattr(cfg, f.name) for f in fields(cfg)} | {"seed": seed})
        train(m, train_graphs, ccfg)
        last = cfg.epochs - 1
        rows = []
        for split, graphs in (("train", train_graphs), ("test", test_graphs)):
            loss, acc = evaluate_accuracy(m, graphs)
            rows.append(MetricsRow(kind, depth, last, split, loss, acc))
        log.info("cell %s depth %d: test accuracy %.4f", kind, depth, rows[1].accuracy)
        return rows
    except FloorGNNError as exc:
        raise type(exc)(f"cell ({kind}, depth {depth}): {exc.args[0] if exc.args else ''}") from exc


def depth_sweep(kinds, depths, train_graphs, test_graphs, cfg: TrainConfig = TrainConfig(), jobs: int = 1, model_overrides=None):
    """Train and evaluate every (kind, depth) cell; rows ordered by (kind, depth)."""
    kinds, depths = list(kinds), list(depths)
    if not kinds or not depths:
        raise BadConfigError("kinds and depths must be non-empty")
    for kind in kinds:
        if kind not in KINDS:
            raise BadConfigError(f"unknown model kind {kind!r}")
    cells = [(k, d) for k in kinds for d in depths]
    args = [(k, d, train_graphs, test_graphs, cfg, model_overrides) for k, d in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, *zip(*args)))
    else:
        results = [run_cell(*a) for a in args]
    return [row for rows in results for row in rows]


# --- metrics CSV ---------------------------------------------------------------------------


def write_metrics_csv(rows, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for row in rows:
                w.writerow(row.csv_fields())
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_metrics_csv(path) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != METRICS_HEADER:
                raise SchemaError(f"unexpected metrics header {reader.fieldnames}")
            return [
                MetricsRow(r["model"], int(r["depth"]), int(r["epoch"]), r["split"], float(r["loss"]), float(r["accuracy"]))
                for r in reader
            ]
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


# --- checkpoints ---------------------------------------------------------------------------


def save_checkpoint(m: Model, path, optimizer_state: Optional[AdamState] = None) -> None:
    """Write a self-describing JSON checkpoint atomically (temp file + rename)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "config": m.config.to_dict(),
        "epochs_trained": m.epochs_trained,
        "params": {name: p.data.tolist() for name, p in m.named_parameters()},
        "optimizer": optimizer_state.to_dict() if optimizer_state is not None else None,
    }
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path, expect=None) -> Model:
    """Load a checkpoint; ``expect`` (mapping of config fields) guards against mismatches."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"checkpoint {path} is not valid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise SchemaError("checkpoint lacks format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format_version {doc['format_version']!r}")
    try:
        cfg = ModelConfig(**doc["config"])
        params = doc["params"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed checkpoint: {exc}") from exc

    if expect:
        expect = expect.to_dict() if isinstance(expect, ModelConfig) else dict(expect)
        diffs = {k: (v, getattr(cfg, k, None)) for k, v in expect.items() if getattr(cfg, k, None) != v}
        if diffs:
            raise ConfigMismatchError(f"checkpoint config differs from expectation: {diffs}")

    m = init_model(cfg)
    names = [name for name, _ in m.named_parameters()]
    if sorted(names) != sorted(params):
        raise SchemaError("checkpoint parameter names do not match its config")
    try:
        m.load_state_dict(params)
    except (ValueError, TypeError, ShapeError) as exc:
        raise SchemaError(f"malformed parameter array: {exc}") from exc
    m.epochs_trained = int(doc.get("epochs_trained", 0))
    if doc.get("optimizer"):
        m.optimizer_state = AdamState.from_dict(doc["optimizer"])
    return m
