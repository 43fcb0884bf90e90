"""Road-graph shortest paths, travel-time matrices, TSP solving, scheduling.

Tour construction minimizes truck travel time (edge length / edge speed
limit). All tie-breaking is lexicographic so results are deterministic.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import kernels
from .errors import RoutingError, TspSizeError
from .jobs import DeliverySet
from .scenario import RoadGraph, Scenario, nearest_node

EXACT_TSP_LIMIT = 12
Solver = Literal["exact", "heuristic"]


@dataclass
class RoutedPath:
    nodes: list[int]
    total_length: float    # meters
    travel_time: float     # seconds


@dataclass
class Tour:
    start: int             # depot node id
    stops: list[int]       # job ids in service order
    closed: bool = True


def _edge_maps(graph: RoadGraph):
    adj = graph.adjacency()
    time_of = {}
    length_of = {}
    for e in graph.edges:
        t = e.length / e.speed_limit
        time_of[(e.a, e.b)] = t
        time_of[(e.b, e.a)] = t
        length_of[(e.a, e.b)] = e.length
        length_of[(e.b, e.a)] = e.length
    return adj, time_of, length_of


def dijkstra_times(graph: RoadGraph, source: int) -> dict[int, float]:
    """Travel time (s) from source to every reachable node."""
    adj = graph.adjacency()
    if source not in adj:
        raise RoutingError(f"unknown node {source}")
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, length, speed in adj[u]:
            nd = d + length / speed
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(graph: RoadGraph, a: int, b: int) -> RoutedPath:
    """Minimal-travel-time path a -> b, lexicographically smallest on ties.

    The walk follows the shortest-path DAG induced by distances from b,
    always taking the smallest eligible neighbor; eligibility re-evaluates
    the exact float sums Dijkstra minimized, so ties resolve exactly.
    """
    if a not in graph.nodes or b not in graph.nodes:
        raise RoutingError(f"unknown endpoint {a if a not in graph.nodes else b}")
    if a == b:
        return RoutedPath([a], 0.0, 0.0)
    dist_b = dijkstra_times(graph, b)
    if a not in dist_b:
        raise RoutingError(f"node {b} unreachable from {a}")
    adj, time_of, length_of = _edge_maps(graph)
    path = [a]
    total_len = 0.0
    u = a
    while u != b:
        nxt = None
        for v, length, speed in sorted(adj[u]):
            if v in dist_b and dist_b[v] + length / speed == dist_b[u]:
                nxt = v
                break
        if nxt is None:  # float-noise fallback, tolerate 1e-9
            for v, length, speed in sorted(adj[u]):
                if v in dist_b and abs(dist_b[v] + length / speed - dist_b[u]) <= 1e-9:
                    nxt = v
                    break
        if nxt is None:
            raise RoutingError(f"no shortest-path successor at node {u}")
        total_len += length_of[(u, nxt)]
        path.append(nxt)
        u = nxt
    return RoutedPath(path, total_len, dist_b[a])


def travel_time_matrix(scenario: Scenario, stops: list[int]) -> np.ndarray:
    """Symmetric matrix of shortest-path travel times between stop nodes."""
    g = scenario.graph
    n = len(stops)
    mat = np.zeros((n, n), np.float64)
    dists = {}
    for s in set(stops):
        dists[s] = dijkstra_times(g, s)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                t = dists[stops[i]][stops[j]]
            except KeyError:
                raise RoutingError(f"node {stops[j]} unreachable from {stops[i]}") from None
            mat[i, j] = t
            mat[j, i] = t
    return mat


def tsp_exact(matrix: np.ndarray, start_index: int = 0,
              closed: bool = True) -> tuple[list[int], float]:
    """Globally optimal tour over the cost matrix from start_index.

    Held-Karp subset DP; ties broken to the lexicographically smallest
    order. Limited to 12 cities.
    """
    matrix = np.asarray(matrix, np.float64)
    n = matrix.shape[0]
    if n > EXACT_TSP_LIMIT:
        raise TspSizeError(f"exact solver limited to {EXACT_TSP_LIMIT} stops, got {n}")
    perm = _rotation(n, start_index)
    sub = matrix[np.ix_(perm, perm)]
    order, cost = kernels.held_karp(np.ascontiguousarray(sub), closed)
    return [perm[i] for i in order], float(cost)


def tsp_heuristic(matrix: np.ndarray, start_index: int = 0,
                  closed: bool = True) -> tuple[list[int], float]:
    """Nearest-neighbor construction plus 2-opt to a local optimum."""
    matrix = np.asarray(matrix, np.float64)
    n = matrix.shape[0]
    if n == 1:
        return [start_index], 0.0
    order = kernels.nearest_neighbor_order(matrix, start_index)
    cost = kernels.two_opt(matrix, order, closed)
    return [int(i) for i in order], float(cost)


def _rotation(n: int, start: int) -> list[int]:
    if not 0 <= start < n:
        raise RoutingError(f"start_index {start} out of range for {n} stops")
    return [start] + [i for i in range(n) if i != start]


def _solve(matrix: np.ndarray, closed: bool, solver: Solver) -> tuple[list[int], float]:
    if solver == "exact":
        return tsp_exact(matrix, 0, closed)
    return tsp_heuristic(matrix, 0, closed)


def job_nodes(scenario: Scenario, dset: DeliverySet) -> dict[int, int]:
    """job id -> nearest road node to the job's target."""
    return {j.id: nearest_node(scenario, j.target) for j in dset.jobs}


def priority_schedule(scenario: Scenario, dset: DeliverySet,
                      solver: Solver = "heuristic") -> Tour:
    """Medical-first tour: open TSP over medical jobs from the depot, then an
    open TSP over standard jobs starting at the last medical stop, closed by
    the return to the depot. Falls back to a plain closed TSP when either
    category is empty.
    """
    nodes_of = job_nodes(scenario, dset)
    medical = [j.id for j in dset.medical()]
    std = [j.id for j in dset.standard()]
    depot = scenario.depot

    if not medical or not std:
        jobs = medical or std
        if not jobs:
            return Tour(depot, [], True)
        mat = travel_time_matrix(scenario, [depot] + [nodes_of[j] for j in jobs])
        order, _ = _solve(mat, True, solver)
        return Tour(depot, [jobs[i - 1] for i in order[1:]], True)

    mat_m = travel_time_matrix(scenario, [depot] + [nodes_of[j] for j in medical])
    order_m, _ = _solve(mat_m, False, solver)
    med_seq = [medical[i - 1] for i in order_m[1:]]

    anchor = nodes_of[med_seq[-1]]
    mat_s = travel_time_matrix(scenario, [anchor] + [nodes_of[j] for j in std])
    order_s, _ = _solve(mat_s, False, solver)
    std_seq = [std[i - 1] for i in order_s[1:]]

    return Tour(depot, med_seq + std_seq, True)


def plain_schedule(scenario: Scenario, dset: DeliverySet,
                   solver: Solver = "heuristic") -> Tour:
    """Closed TSP over all jobs from the depot, ignoring categories."""
    nodes_of = job_nodes(scenario, dset)
    jobs = [j.id for j in dset.jobs]
    if not jobs:
        return Tour(scenario.depot, [], True)
    mat = travel_time_matrix(scenario, [scenario.depot] + [nodes_of[j] for j in jobs])
    order, _ = _solve(mat, True, solver)
    return Tour(scenario.depot, [jobs[i - 1] for i in order[1:]], True)
