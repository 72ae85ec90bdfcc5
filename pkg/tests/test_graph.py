import numpy as np
import pytest

from floorgnn.data import FloorPlanRecord, RoomRecord, WallRecord
from floorgnn.errors import BadConfigError, EmptyBatchError, EmptyEdgesError, UnknownCategoryError
from floorgnn.graph import (
    GraphBuildConfig,
    RoomGraph,
    batch_graphs,
    build_adjacency,
    build_graph,
    count_doors,
    detect_nesting,
    extract_features,
    load_graphs,
    rect_gap_distance,
    save_graphs,
    unbatch,
)
from floorgnn.vocab import CategoryVocab

from conftest import random_plan
from oracles import oracle_adjacency, oracle_gap, oracle_nesting


def _plan(boxes, cats=None, walls=()):
    cats = cats or ["bedroom"] * len(boxes)
    return FloorPlanRecord("t", tuple(RoomRecord(tuple(b), c) for b, c in zip(boxes, cats)), tuple(walls))


def test_gap_overlap():
    assert rect_gap_distance((0, 0, 1, 1), (0.5, 0.5, 2, 2)) == 0.0


def test_gap_x_axis():
    assert rect_gap_distance((0, 0, 0.5, 0.5), (0.52, 0, 1.0, 0.5)) == pytest.approx(0.02, abs=1e-15)


def test_gap_corner_pythagoras():
    assert rect_gap_distance((0, 0, 1, 1), (4, 5, 5, 6)) == 5.0


def test_gap_symmetric(rng):
    for _ in range(100):
        a, b = (tuple(random_plan(rng, 1).rooms[0].bbox) for _ in range(2))
        assert rect_gap_distance(a, b) == rect_gap_distance(b, a)


def test_adjacency_threshold_cases():
    assert build_adjacency(_plan([(0, 0, 0.5, 0.5), (0.52, 0, 1, 0.5)])).tolist() == [[0, 1]]
    assert build_adjacency(_plan([(0, 0, 0.4, 0.5), (0.45, 0, 1, 0.5)])).tolist() == []
    # a gap that evaluates to exactly 0.03 in floating point is not adjacent
    plan = _plan([(0, 0, 0.0, 0.5), (0.03, 0, 1, 0.5)])
    assert rect_gap_distance(plan.rooms[0].bbox, plan.rooms[1].bbox) == 0.03
    assert build_adjacency(plan).tolist() == []


def test_adjacency_matches_oracle_and_symmetry(rng):
    cfg = GraphBuildConfig()
    for _ in range(200):
        plan = random_plan(rng, int(rng.integers(1, 9)))
        boxes = [r.bbox for r in plan.rooms]
        got = {tuple(e) for e in build_adjacency(plan, cfg).tolist()}
        assert got == oracle_adjacency(boxes, cfg.adjacency_threshold)
        assert all(i < j for i, j in got)


def test_adjacency_threshold_monotone(rng):
    for _ in range(100):
        plan = random_plan(rng, 6)
        small = {tuple(e) for e in build_adjacency(plan, GraphBuildConfig(0.02)).tolist()}
        large = {tuple(e) for e in build_adjacency(plan, GraphBuildConfig(0.1)).tolist()}
        assert small <= large


def test_nesting_full_containment():
    parent, child = detect_nesting(_plan([(0.1, 0.1, 0.2, 0.2), (0, 0, 0.5, 0.5)]))
    assert child.tolist() == [1, 0] and parent.tolist() == [0, 1]


def test_nesting_half_overlap():
    parent, child = detect_nesting(_plan([(0, 0, 0.2, 0.2), (0.1, 0, 0.5, 0.5)]))
    assert parent.tolist() == [0, 0] and child.tolist() == [0, 0]


def test_nesting_exactly_seventy_percent():
    # inner room 0.5 x 0.5; overlap 0.35 x 0.5 with the outer one
    boxes = [(0.0, 0.0, 0.5, 0.5), (0.15, 0.0, 1.0, 1.0)]
    inter = (0.5 - 0.15) * 0.5
    assert inter == 0.7 * 0.25  # the comparison really is on the boundary
    parent, child = detect_nesting(_plan(boxes))
    assert parent.tolist() == [0, 0] and child.tolist() == [0, 0]
    parent, child = detect_nesting(_plan(boxes), GraphBuildConfig(nesting_ratio=0.69))
    assert child.tolist() == [1, 0] and parent.tolist() == [0, 1]


def test_nesting_matches_oracle(rng):
    for _ in range(200):
        plan = random_plan(rng, int(rng.integers(1, 9)))
        boxes = [r.bbox for r in plan.rooms]
        parent, child = detect_nesting(plan)
        assert (parent.tolist(), child.tolist()) == oracle_nesting(boxes, 0.7)


def test_nesting_disjoint_rooms_never_flag(rng):
    for _ in range(100):
        plan = _plan([(0, 0, 0.3, 0.3), (0.4, 0.4, 0.6, 0.6)])
        parent, child = detect_nesting(plan)
        assert parent.sum() == 0 and child.sum() == 0


def test_count_doors():
    walls = [
        WallRecord((0, 0), (0, 1), (0, 1), True),
        WallRecord((0, 0), (1, 0), (2,), True),
        WallRecord((1, 0), (1, 1), (2,), True),
        WallRecord((1, 1), (0, 1), (2,), True),
        WallRecord((1, 1), (0, 1), (0,), False),
    ]
    plan = _plan([(0, 0, 1, 1)] * 4, walls=walls)
    assert count_doors(plan).tolist() == [1, 1, 3, 0]


def test_extract_features_hand_geometry():
    plan = _plan([(0.2, 0.3, 0.6, 0.8)], walls=[WallRecord((0.2, 0.3), (0.6, 0.3), (0,), True)])
    np.testing.assert_allclose(extract_features(plan)[0], [0.20, 0.5, 0.4, 1, 0, 0], atol=1e-15)


def test_extract_features_unit_square():
    assert extract_features(_plan([(0, 0, 1, 1)]))[0].tolist() == [1, 1, 1, 0, 0, 0]


def test_extract_features_nested_flags():
    x = extract_features(_plan([(0.1, 0.1, 0.2, 0.2), (0, 0, 0.5, 0.5)]))
    assert x[0, 4:].tolist() == [0, 1] and x[1, 4:].tolist() == [1, 0]


def test_feature_invariants(rng):
    for _ in range(50):
        x = extract_features(random_plan(rng, 6))
        np.testing.assert_allclose(x[:, 0], x[:, 1] * x[:, 2], atol=1e-9)
        assert set(np.unique(x[:, 4:])) <= {0.0, 1.0}


def test_build_graph_triangle():
    g = build_graph(_plan([(0, 0, 10, 10), (10, 0, 20, 10), (0, 10, 20, 20)], ["kitchen", "bedroom", "balcony"]))
    assert g.features.shape == (3, 6)
    assert g.edges.tolist() == [[0, 1], [0, 2], [1, 2]]
    assert g.labels.tolist() == [1, 2, 4]


def test_build_graph_unknown_category():
    with pytest.raises(UnknownCategoryError):
        build_graph(_plan([(0, 0, 1, 1), (1, 0, 2, 1)], ["bedroom", "spaceship"]))


def test_build_graph_empty_edges():
    with pytest.raises(EmptyEdgesError):
        build_graph(_plan([(0, 0, 0.25, 0.25), (0.75, 0.75, 1, 1)]))


def test_config_validation():
    with pytest.raises(BadConfigError):
        GraphBuildConfig(adjacency_threshold=0)
    with pytest.raises(BadConfigError):
        GraphBuildConfig(nesting_ratio=1.5)


def test_vocab_defaults():
    vocab = CategoryVocab()
    assert len(vocab) == 8
    with pytest.raises(BadConfigError):
        CategoryVocab(("a", "a"))


def _graph(n, edges, label=0, pid="g"):
    return RoomGraph(np.arange(n * 6, dtype=float).reshape(n, 6), np.array(edges).reshape(-1, 2), np.full(n, label), pid)


def test_batch_offsets():
    bg = batch_graphs([_graph(3, [(0, 1), (1, 2)], pid="a"), _graph(4, [(0, 1)], pid="b")])
    assert bg.features.shape == (7, 6)
    assert bg.edges.tolist() == [[0, 1], [1, 2], [3, 4]]
    assert bg.graph_of_node.tolist() == [0, 0, 0, 1, 1, 1, 1]


def test_batch_roundtrip(rng):
    from conftest import random_graph

    gs = [random_graph(rng, int(rng.integers(1, 8)), plan_id=str(k)) for k in range(6)]
    for sub in (gs[:1], gs):
        back = unbatch(batch_graphs(sub))
        for a, b in zip(sub, back):
            assert a.plan_id == b.plan_id
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.edges, b.edges)
            assert np.array_equal(a.labels, b.labels)


def test_batch_empty():
    with pytest.raises(EmptyBatchError):
        batch_graphs([])


def test_graph_dump_roundtrip(tmp_path, rng):
    from conftest import random_graph

    gs = [random_graph(rng, 5, plan_id=f"p{k}") for k in range(3)]
    save_graphs(gs, tmp_path / "g.jsonl")
    back = load_graphs(tmp_path / "g.jsonl")
    for a, b in zip(gs, back):
        assert np.array_equal(a.features, b.features) and np.array_equal(a.edges, b.edges)
