import itertools
import math

import numpy as np
import pytest

from hybridfleet.errors import RoutingError, TspSizeError
from hybridfleet.jobs import generate_delivery_sets
from hybridfleet.routing import (priority_schedule, plain_schedule, shortest_path,
                                 travel_time_matrix, tsp_exact, tsp_heuristic)
from hybridfleet.scenario import DEFAULT_SPEED_MPS, Edge, Point, RoadGraph, Scenario, generate_grid_scenario



def brute_force_tsp(matrix, closed):
    """Independent factorial-enumeration oracle; start fixed at index 0."""
    n = matrix.shape[0]
    best_cost = math.inf
    best_order = None
    for perm in itertools.permutations(range(1, n)):
        order = (0,) + perm
        cost = sum(matrix[order[i], order[i + 1]] for i in range(n - 1))
        if closed:
            cost += matrix[order[-1], order[0]]
        if cost < best_cost:
            best_cost = cost
            best_order = order
    return list(best_order), best_cost


def square_matrix():
    pts = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]
    n = len(pts)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            m[i, j] = math.dist(pts[i], pts[j])
    return m


def test_shortest_path_grid_manhattan():
    sc = generate_grid_scenario(3, 3, 100.0, 0, seed=1)
    target = 5  # (200, 100)
    sp = shortest_path(sc.graph, 0, target)
    assert sp.total_length == pytest.approx(300.0)
    assert sp.travel_time == pytest.approx(300.0 / DEFAULT_SPEED_MPS)
    # lexicographically smallest among the Manhattan-optimal paths
    assert sp.nodes == [0, 1, 2, 5]


def test_shortest_path_identity():
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    sp = shortest_path(sc.graph, 3, 3)
    assert sp.nodes == [3]
    assert sp.total_length == 0.0
    assert sp.travel_time == 0.0


def test_shortest_path_single_edge():
    g = RoadGraph({0: Point(0, 0), 1: Point(100, 0)}, [Edge(0, 1, 100.0, 10.0)])
    sp = shortest_path(g, 0, 1)
    assert sp.nodes == [0, 1]
    assert sp.travel_time == pytest.approx(10.0)


def test_shortest_path_cost_self_consistent():
    sc = generate_grid_scenario(4, 4, 80.0, 0, seed=5)
    times = {}
    for e in sc.graph.edges:
        times[(e.a, e.b)] = times[(e.b, e.a)] = e.length / e.speed_limit
    rng = np.random.default_rng(0)
    nodes = sorted(sc.graph.nodes)
    for _ in range(30):
        a, b = rng.choice(nodes, 2, replace=False)
        sp = shortest_path(sc.graph, int(a), int(b))
        recomputed = sum(times[(u, v)] for u, v in zip(sp.nodes, sp.nodes[1:]))
        assert sp.travel_time == pytest.approx(recomputed, abs=1e-9)


def test_shortest_path_unknown_node():
    g = RoadGraph({0: Point(0, 0), 1: Point(1, 0)}, [Edge(0, 1, 1.0, 1.0)])
    with pytest.raises(RoutingError):
        shortest_path(g, 0, 7)


def test_matrix_single_stop():
    sc = generate_grid_scenario(2, 2, 100.0, 0, seed=1)
    assert travel_time_matrix(sc, [0]).tolist() == [[0.0]]


def test_matrix_two_stops_single_edge():
    g = RoadGraph({0: Point(0, 0), 1: Point(100, 0)}, [Edge(0, 1, 100.0, 10.0)])
    sc = Scenario(g, [], depot=0, base_station=Point(50, 0, 30.0))
    m = travel_time_matrix(sc, [0, 1])
    assert m[0, 1] == pytest.approx(10.0)
    assert m[1, 0] == pytest.approx(10.0)
    assert m[0, 0] == m[1, 1] == 0.0


def test_matrix_triangle_inequality_vs_pairwise_dijkstra():
    sc = generate_grid_scenario(4, 4, 90.0, 0, seed=2)
    stops = [0, 3, 5, 10, 15]
    m = travel_time_matrix(sc, stops)
    assert np.allclose(m, m.T)
    for i, a in enumerate(stops):
        for j, b in enumerate(stops):
            assert m[i, j] == pytest.approx(
                shortest_path(sc.graph, a, b).travel_time, abs=1e-9)
            for k in range(len(stops)):
                assert m[i, j] <= m[i, k] + m[k, j] + 1e-9


def test_tsp_exact_square_perimeter():
    order, cost = tsp_exact(square_matrix(), 0, closed=True)
    assert cost == pytest.approx(400.0)
    assert order == [0, 1, 2, 3]  # lexicographically smallest optimal tour


def test_tsp_exact_single_city():
    order, cost = tsp_exact(np.zeros((1, 1)), 0, closed=True)
    assert order == [0]
    assert cost == 0.0


@pytest.mark.parametrize("closed", [True, False])
def test_tsp_exact_matches_enumeration_7_stops(closed):
    rng = np.random.default_rng(17)
    for _ in range(10):
        m = rng.integers(1, 1000, (7, 7)).astype(float)
        m = (m + m.T) / 2.0
        np.fill_diagonal(m, 0.0)
        order, cost = tsp_exact(m, 0, closed)
        oracle_order, oracle_cost = brute_force_tsp(m, closed)
        assert cost == pytest.approx(oracle_cost, abs=1e-9)
        assert order == oracle_order


def test_tsp_exact_size_limit():
    with pytest.raises(TspSizeError):
        tsp_exact(np.zeros((13, 13)), 0, True)


def test_tsp_exact_nonzero_start():
    m = square_matrix()
    order, cost = tsp_exact(m, 2, closed=True)
    assert order[0] == 2
    assert cost == pytest.approx(400.0)


def test_tsp_heuristic_square_optimal():
    order, cost = tsp_heuristic(square_matrix(), 0, closed=True)
    _, exact_cost = tsp_exact(square_matrix(), 0, closed=True)
    assert cost == pytest.approx(exact_cost)
    assert sorted(order) == [0, 1, 2, 3]


def test_tsp_heuristic_preserves_optimal_construction():
    # on the square the nearest-neighbor tour is already optimal; 2-opt must
    # leave its cost unchanged
    order, cost = tsp_heuristic(square_matrix(), 0, closed=True)
    assert cost == pytest.approx(400.0)


def test_tsp_heuristic_quality_9_stops():
    rng = np.random.default_rng(23)
    ratios = []
    for _ in range(100):
        pts = rng.uniform(0, 1000, (9, 2))
        m = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        _, h = tsp_heuristic(m, 0, True)
        _, e = tsp_exact(m, 0, True)
        assert h >= e - 1e-9
        ratios.append(h / e)
    assert np.mean(ratios) <= 1.10


@pytest.mark.parametrize("closed", [True, False])
def test_tsp_solvers_permutation_valid(closed):
    rng = np.random.default_rng(31)
    for n in (1, 2, 5, 8):
        m = rng.uniform(1, 100, (n, n))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 0)
        for solver in (tsp_exact, tsp_heuristic):
            order, _ = solver(m, 0, closed)
            assert sorted(order) == list(range(n))
            assert order[0] == 0


def world_with_jobs(per_set, medical, seed=6):
    sc = generate_grid_scenario(5, 5, 100.0, 2, seed=19)
    dset = generate_delivery_sets(sc, 1, per_set, medical, seed=seed)[0]
    return sc, dset


def test_priority_schedule_forced_order():
    sc, dset = world_with_jobs(2, 1)
    tour = priority_schedule(sc, dset)
    medical = [j.id for j in dset.medical()]
    standard = [j.id for j in dset.standard()]
    assert tour.stops == medical + standard
    assert tour.closed
    assert tour.start == sc.depot


def test_priority_schedule_no_medical_equals_plain():
    sc, dset = world_with_jobs(6, 0)
    assert priority_schedule(sc, dset).stops == plain_schedule(sc, dset).stops


def test_priority_schedule_all_medical_first():
    sc, dset = world_with_jobs(15, 5)
    tour = priority_schedule(sc, dset)
    medical = {j.id for j in dset.medical()}
    positions = {j: i for i, j in enumerate(tour.stops)}
    worst_medical = max(positions[j] for j in medical)
    best_standard = min(positions[j] for j in tour.stops if j not in medical)
    assert worst_medical < best_standard
    assert sorted(tour.stops) == sorted(j.id for j in dset.jobs)


@pytest.mark.parametrize("solver", ["exact", "heuristic"])
def test_priority_schedule_solvers_agree_on_structure(solver):
    sc, dset = world_with_jobs(8, 3)
    tour = priority_schedule(sc, dset, solver)
    medical = [j.id for j in dset.medical()]
    assert set(tour.stops[:len(medical)]) == set(medical)
