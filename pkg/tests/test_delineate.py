import math

import numpy as np
import pytest

from app.curvilinear.connectivity import GroundTruthOracle, OracleConfig, ProbabilityMapOracle
from app.curvilinear.delineate import (
    EPSILON,
    DelineationConfig,
    Delineator,
    MaxStepsExceeded,
    TraceState,
    delineate,
    link_shortest_path,
    link_window,
    path_cost,
    select_start,
    threshold_skeleton_graph,
    trace_report,
)
from app.curvilinear.graph import graph_to_raster, raster_to_graph
from app.curvilinear.imageio import dumps_graph
from app.curvilinear.metrics import EvalConfig, evaluate
from app.curvilinear.raster import BorderDetection
from conftest import hline, mask_from_points, vline

CFG = DelineationConfig()


def relaxed_costs(probmap, a):
    """Exact minimum costs from a by Bellman-Ford style relaxation over the whole grid."""
    h, w = probmap.shape
    dist = np.full((h, w), np.inf)
    dist[a] = 0.0
    changed = True
    while changed:
        changed = False
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                step = math.sqrt(2.0) if dr and dc else 1.0
                # candidate cost of reaching (r, c) from (r - dr, c - dc)
                src = np.full((h, w), np.inf)
                src[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)] = dist[
                    max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)
                ]
                cand = src + step * (1.0 - probmap + EPSILON)
                better = cand < dist - 1e-12
                if better.any():
                    dist = np.where(better, cand, dist)
                    changed = True
    return dist


def test_link_same_point():
    prob = np.full((5, 5), 0.3)
    assert link_shortest_path(prob, (2, 2), (2, 2), (0, 5, 0, 5)) == [(2, 2)]


def test_link_uniform_map_goes_straight():
    prob = np.full((5, 5), 0.5)
    path = link_shortest_path(prob, (0, 0), (0, 4), (0, 5, 0, 5))
    assert path == [(0, c) for c in range(5)]
    assert path_cost(prob, path) == pytest.approx(4 * (0.5 + EPSILON))


def test_link_follows_high_probability_corridor():
    prob = np.full((7, 7), 0.1)
    prob[0, :] = 0.9
    prob[:, 6] = 0.9
    path = link_shortest_path(prob, (0, 0), (6, 6), (0, 7, 0, 7))
    assert path[0] == (0, 0) and path[-1] == (6, 6)
    assert all(prob[p] == 0.9 for p in path)


def test_link_rejects_points_outside_window():
    with pytest.raises(ValueError):
        link_shortest_path(np.zeros((5, 5)), (0, 0), (4, 4), (0, 3, 0, 3))


def test_link_cost_matches_exhaustive_relaxation():
    rng = np.random.default_rng(20240611)
    for _ in range(200):
        h, w = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        prob = rng.random((h, w))
        a = (int(rng.integers(h)), int(rng.integers(w)))
        b = (int(rng.integers(h)), int(rng.integers(w)))
        path = link_shortest_path(prob, a, b, (0, h, 0, w))
        assert path[0] == a and path[-1] == b
        for p, q in zip(path, path[1:]):
            assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1
        assert path_cost(prob, path) == pytest.approx(relaxed_costs(prob, a)[b], abs=1e-9)


def test_link_window_is_clipped_union():
    assert link_window((5, 5), (10, 20), 9, (30, 30)) == (1, 15, 1, 25)
    assert link_window((0, 0), (2, 2), 33, (10, 12)) == (0, 10, 0, 12)


def test_select_start_first_call():
    prob = np.zeros((30, 40))
    prob[10, 20] = 0.97
    assert select_start(prob, TraceState(prob.shape), CFG) == (10, 20)
    prob[5, 30] = 0.97
    assert select_start(prob, TraceState(prob.shape), CFG) == (5, 30)
    assert select_start(np.zeros((30, 40)), TraceState((30, 40)), CFG) is None


def test_select_start_restart_rules():
    prob = np.zeros((80, 80))
    prob[10, 10] = 0.9
    prob[10, 30] = 0.95
    prob[70, 70] = 0.8
    prob[60, 10] = 0.5
    state = TraceState(prob.shape)
    state.starts.append((10, 10))
    state.visited_mask[10, 10] = True
    # (10, 30) is too close to the visited point, (60, 10) is below tau_restart
    assert select_start(prob, state, CFG) == (70, 70)
    state.visited_mask[70, 70] = True
    assert select_start(prob, state, CFG) is None


def test_all_zero_map_gives_empty_graph():
    prob = np.zeros((40, 40))
    engine = Delineator(prob, ProbabilityMapOracle(CFG.oracle), CFG)
    assert engine.run().is_empty()
    report = trace_report(engine.state)
    assert report.steps == 0 and report.restarts == 0 and report.starts == []


def test_clean_line_is_traced_end_to_end(line_scene):
    mask, prob = line_scene
    engine = Delineator(prob, GroundTruthOracle(mask, CFG.oracle), CFG)
    graph = engine.run()
    drawn = graph_to_raster(graph, graph.width, graph.height)
    rows = np.argwhere(drawn)[:, 0]
    assert np.all(np.abs(rows - 32) <= 2)
    covered = (drawn & mask).sum()
    assert covered >= 0.95 * mask.sum()
    report = trace_report(engine.state)
    assert report.restarts == 0
    assert report.steps > 0


def test_edge_endpoints_are_explored_points(line_scene):
    mask, prob = line_scene
    engine = Delineator(prob, GroundTruthOracle(mask, CFG.oracle), CFG)
    graph = engine.run()
    allowed = set(engine.state.visited) | set(engine.state.starts) | set(engine.state.tips)
    for e in graph.edges:
        assert e[0] in allowed and e[-1] in allowed
    assert len(engine.state.visited) == len(set(engine.state.visited))


def test_two_distant_lines_need_one_restart():
    mask = mask_from_points(hline(20, 10, 117) + hline(100, 10, 117), 128, 128)
    prob = mask.astype(np.float64)
    engine = Delineator(prob, ProbabilityMapOracle(CFG.oracle), CFG)
    graph = engine.run()
    report = trace_report(engine.state)
    assert report.restarts == 1
    assert report.starts == [[20, 10], [100, 10]]
    drawn = graph_to_raster(graph, 128, 128)
    assert drawn[20].sum() >= 100 and drawn[100].sum() >= 100


def test_trace_is_deterministic(line_scene):
    mask, prob = line_scene
    first = dumps_graph(delineate(prob, GroundTruthOracle(mask, CFG.oracle), CFG))
    second = dumps_graph(delineate(prob, GroundTruthOracle(mask, CFG.oracle), CFG))
    assert first == second


def test_max_steps_carries_partial_graph(line_scene):
    mask, prob = line_scene
    cfg = DelineationConfig(max_steps=2)
    with pytest.raises(MaxStepsExceeded) as info:
        delineate(prob, GroundTruthOracle(mask, cfg.oracle), cfg)
    assert info.value.report.steps == 2
    assert len(info.value.graph.edges) >= 2


def test_on_step_sees_every_step(line_scene):
    mask, prob = line_scene
    seen = []
    engine = Delineator(prob, GroundTruthOracle(mask, CFG.oracle), CFG, on_step=lambda s: seen.append(s.steps))
    engine.run()
    assert seen == list(range(1, engine.state.steps + 1))


def test_without_tail_completion_line_end_is_left_short(line_scene):
    mask, prob = line_scene
    cfg = DelineationConfig(complete_tails=False)
    graph = delineate(prob, GroundTruthOracle(mask, cfg.oracle), cfg)
    drawn = graph_to_raster(graph, graph.width, graph.height)
    assert drawn[32, 5:118].all()
    assert not drawn[32, 118:121].any()


class FixedOracle:
    def __init__(self, detections):
        self.detections = detections

    def predict(self, context, center):
        return list(self.detections)


def test_expand_discards_near_precedent_and_snaps_to_other_visits():
    prob = np.zeros((50, 50))
    cfg = DelineationConfig(complete_tails=False)
    oracle = FixedOracle([
        BorderDetection((10, 12), 0.9),
        BorderDetection((10, 28), 0.9),
        BorderDetection((27, 20), 0.9),
    ])
    engine = Delineator(prob, oracle, cfg)
    for p in ((10, 10), (30, 20), (10, 20)):
        engine._visit(p)
    engine._expand((10, 20), (10, 10))

    st = engine.state
    assert [entry.location for _, _, entry in st.bag] == [(10, 28)]
    assert st.discarded == 1 and st.snapped == 1
    assert [(e[0], e[-1]) for e in st.edges] == [((10, 20), (30, 20))]


def test_square_loop_closes_through_suppression():
    ring = hline(20, 20, 79) + hline(79, 20, 79) + vline(20, 21, 78) + vline(79, 21, 78)
    mask = mask_from_points(ring, 100, 100)
    engine = Delineator(mask.astype(np.float64), GroundTruthOracle(mask, CFG.oracle), CFG)
    graph = engine.run()
    report = trace_report(engine.state)
    assert report.restarts == 0
    assert report.discarded > 0 and report.snapped >= 1
    res = evaluate(graph, raster_to_graph(mask), EvalConfig())
    assert res.precision == 1.0 and res.connectivity == 1.0


def test_config_defaults_and_validation():
    assert CFG.restart_distance() == 33.0
    assert CFG.step_limit((64, 128)) == 4 * 64 * 128 // 5
    assert DelineationConfig(oracle=OracleConfig(k=15)).restart_distance() == 15.0
    with pytest.raises(ValueError):
        DelineationConfig(tau_conf=1.5)
    with pytest.raises(ValueError):
        DelineationConfig(r_nbhd=0)


def test_threshold_skeleton_baseline(line_scene):
    _, prob = line_scene
    g = threshold_skeleton_graph(prob, 0.5)
    assert len(g.edges) == 1
    assert threshold_skeleton_graph(np.zeros((10, 10)), 0.5).is_empty()
