import json
from pathlib import Path

import numpy as np
import pytest

from floorgnn.data import FloorPlanRecord, RoomRecord, WallRecord
from floorgnn.graph import RoomGraph


def random_graph(rng, n_nodes, edge_prob=0.5, in_dim=6, n_classes=8, plan_id="g"):
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes) if rng.random() < edge_prob]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return RoomGraph(
        rng.normal(size=(n_nodes, in_dim)),
        edges,
        rng.integers(0, n_classes, size=n_nodes),
        plan_id,
    )


def random_plan(rng, n_rooms, plan_id="p"):
    rooms = []
    for _ in range(n_rooms):
        x0, y0 = rng.uniform(0, 0.8, size=2)
        w, h = rng.uniform(0.02, 0.4, size=2)
        rooms.append(RoomRecord((x0, y0, min(x0 + w, 1.0), min(y0 + h, 1.0)), "bedroom"))
    return FloorPlanRecord(plan_id, tuple(rooms), ())


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. the array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(docs, name="plans.jsonl"):
        path = tmp_path / name
        path.write_text("".join(json.dumps(d) + "\n" for d in docs))
        return path

    return _write


def plan_doc(pid, boxes, cats=None, walls=()):
    cats = cats or ["bedroom"] * len(boxes)
    return {
        "id": pid,
        "rooms": [{"bbox": list(b), "category": c} for b, c in zip(boxes, cats)],
        "walls": list(walls),
        "source_image": None,
    }


def run_pipeline(workdir, n_plans=30, n_train=24, model="tagcn", depth=2, epochs=5, seed=7):
    """synth -> split -> build -> train -> eval through the CLI; returns the eval metrics path."""
    from floorgnn.cli import main

    w = Path(workdir)
    w.mkdir(parents=True, exist_ok=True)
    steps = [
        ["synth", "--out", w / "plans.jsonl", "--n-plans", n_plans, "--seed", seed],
        ["split", "--in", w / "plans.jsonl", "--n-train", n_train, "--out-train", w / "train.jsonl", "--out-test", w / "test.jsonl"],
        ["build", "--in", w / "train.jsonl", "--out", w / "train.graphs.json"],
        ["build", "--in", w / "test.jsonl", "--out", w / "test.graphs.json"],
        ["train", "--graphs", w / "train.graphs.json", "--model", model, "--depth", depth, "--epochs", epochs,
         "--batch-size", 8, "--seed", seed, "--out-checkpoint", w / "model.json", "--out-metrics", w / "train.csv"],
        ["eval", "--graphs", w / "test.graphs.json", "--checkpoint", w / "model.json", "--out-metrics", w / "eval.csv"],
    ]
    for step in steps:
        code = main([str(a) for a in step])
        assert code == 0, step
    return w / "eval.csv"


# one pass/fail line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
