import json
import math

import numpy as np
import pytest

from hybridfleet.errors import InvariantViolation, ParameterError, ParseError
from hybridfleet.scenario import (Edge, Point, RoadGraph, Scenario,
                                  generate_grid_scenario, load_scenario, los_blocked,
                                  nearest_node, save_scenario, scenario_to_dict,
                                  validate_scenario)


def test_grid_2x2_no_buildings():
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    assert len(sc.graph.nodes) == 4
    assert len(sc.graph.edges) == 4
    assert sc.buildings == []
    assert sc.depot == 0
    assert sc.graph.nodes[0] == Point(0.0, 0.0, 0.0)


def test_grid_3x3_one_building_per_cell():
    sc = generate_grid_scenario(3, 3, 100.0, 1, seed=7)
    assert len(sc.graph.nodes) == 9
    assert len(sc.graph.edges) == 12
    assert len(sc.buildings) == 4  # one per interior cell of a 3x3 grid


def test_grid_deterministic():
    a = generate_grid_scenario(5, 5, 100.0, 2, seed=42)
    b = generate_grid_scenario(5, 5, 100.0, 2, seed=42)
    assert json.dumps(scenario_to_dict(a)) == json.dumps(scenario_to_dict(b))
    c = generate_grid_scenario(5, 5, 100.0, 2, seed=43)
    assert json.dumps(scenario_to_dict(a)) != json.dumps(scenario_to_dict(c))


@pytest.mark.parametrize("rows,cols", [(1, 2), (2, 1), (0, 0)])
def test_grid_invalid_dimensions(rows, cols):
    with pytest.raises(ParameterError):
        generate_grid_scenario(rows, cols, 100.0, 0, seed=1)


def test_grid_invalid_spacing():
    with pytest.raises(ParameterError):
        generate_grid_scenario(2, 2, 0.0, 0, seed=1)


@pytest.mark.parametrize("seed", range(8))
def test_generated_scenarios_satisfy_invariants(seed):
    sc = generate_grid_scenario(4, 5, 80.0, 2, seed=seed)
    validate_scenario(sc)  # raises on violation


def test_nearest_node_corner():
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    assert nearest_node(sc, Point(10.0, 5.0)) == 0


def test_nearest_node_exact_hit():
    sc = generate_grid_scenario(3, 3, 100.0, 0, seed=1)
    for nid, p in sc.graph.nodes.items():
        assert nearest_node(sc, p) == nid


def test_nearest_node_tie_breaks_to_smaller_id():
    graph = RoadGraph({3: Point(0.0, 0.0), 5: Point(10.0, 0.0)},
                      [Edge(3, 5, 10.0, 8.0)])
    sc = Scenario(graph, [], depot=3, base_station=Point(5.0, 0.0, 30.0))
    assert nearest_node(sc, Point(5.0, 7.0)) == 3


def test_nearest_node_exhaustive_small_grid():
    sc = generate_grid_scenario(3, 4, 50.0, 0, seed=2)
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = Point(float(rng.uniform(-30, 200)), float(rng.uniform(-30, 150)))
        got = nearest_node(sc, p)
        best = min(math.hypot(q.x - p.x, q.y - p.y) for q in sc.graph.nodes.values())
        assert math.hypot(sc.graph.nodes[got].x - p.x,
                          sc.graph.nodes[got].y - p.y) <= best + 1e-12


def _one_building_scenario():
    from hybridfleet.scenario import Building
    fp = [Point(80.0, -10.0), Point(120.0, -10.0), Point(120.0, 10.0), Point(80.0, 10.0)]
    b = Building(0, fp, 10.0, Point(100.0, -10.0))
    graph = RoadGraph({0: Point(0.0, -50.0), 1: Point(200.0, -50.0)},
                      [Edge(0, 1, 200.0, 8.0)])
    return Scenario(graph, [b], depot=0, base_station=Point(100.0, -50.0, 30.0))


def test_los_blocked_through_building():
    sc = _one_building_scenario()
    assert los_blocked(sc, Point(0, 0, 1.5), Point(200, 0, 1.5)) is True


def test_los_clear_above_roof():
    sc = _one_building_scenario()
    assert los_blocked(sc, Point(0, 0, 50.0), Point(200, 0, 50.0)) is False


def test_los_no_buildings_never_blocked():
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = Point(*rng.uniform(-50, 150, 2), float(rng.uniform(0, 60)))
        b = Point(*rng.uniform(-50, 150, 2), float(rng.uniform(0, 60)))
        assert los_blocked(sc, a, b) is False


def test_los_endpoint_inside_building_blocked():
    sc = _one_building_scenario()
    assert los_blocked(sc, Point(100, 0, 5.0), Point(100, 0, 5.0)) is True
    assert los_blocked(sc, Point(100, 0, 5.0), Point(0, 0, 1.0)) is True


def test_los_symmetric():
    sc = generate_grid_scenario(4, 4, 100.0, 2, seed=3)
    rng = np.random.default_rng(2)
    for _ in range(200):
        a = Point(*rng.uniform(0, 300, 2), float(rng.uniform(0, 60)))
        b = Point(*rng.uniform(0, 300, 2), float(rng.uniform(0, 60)))
        assert los_blocked(sc, a, b) == los_blocked(sc, b, a)


def test_save_load_round_trip(tmp_path):
    sc = generate_grid_scenario(3, 3, 100.0, 1, seed=7)
    path = tmp_path / "scenario.json"
    save_scenario(sc, path)
    assert load_scenario(path) == sc


def test_load_disconnected_graph_names_invariant(tmp_path):
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    data = scenario_to_dict(sc)
    data["nodes"].append({"id": 99, "x": 500.0, "y": 500.0})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InvariantViolation, match="graph not connected"):
        load_scenario(path)


def test_load_short_edge_rejected(tmp_path):
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    data = scenario_to_dict(sc)
    data["edges"][0]["length_m"] = 50.0  # endpoints are 100 m apart
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InvariantViolation, match="edge length below endpoint distance"):
        load_scenario(path)


def test_load_parse_error_has_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"nodes": [,]}')
    with pytest.raises(ParseError, match="line"):
        load_scenario(path)


def test_load_missing_field_is_named(tmp_path):
    path = tmp_path / "missing.json"
    path.write_text(json.dumps({"nodes": [{"id": 0, "x": 0.0}],
                                "edges": [], "depot": 0,
                                "base_station": [0, 0, 30]}))
    with pytest.raises(ParseError, match="'y'"):
        load_scenario(path)
