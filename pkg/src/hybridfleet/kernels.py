"""Hot numerical kernels.

Every function here is compiled with numba's ``@njit`` unless the environment
variable ``HYBRIDFLEET_NO_JIT`` is set to 1/true/yes, in which case the same
code runs as plain Python/numpy. Both paths execute the identical statements,
so results are bit-identical; only speed differs. ``benchmarks/bench_kernels.py``
times the two paths against each other.

Kernels operate on primitive numpy arrays only; the domain modules own all
object <-> array conversion.
"""
from __future__ import annotations

import math
import os

import numpy as np

JIT_ENABLED = os.environ.get("HYBRIDFLEET_NO_JIT", "0").lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        JIT_ENABLED = False

if not JIT_ENABLED:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def _jit(func):
    if JIT_ENABLED:
        return njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# geometry


@_jit
def pairwise_distances(x, y):
    """Condensed upper-triangle Euclidean distances of a 2D point set."""
    n = x.shape[0]
    out = np.empty(n * (n - 1) // 2, np.float64)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            out[k] = math.sqrt(dx * dx + dy * dy)
            k += 1
    return out


@_jit
def _point_in_poly(px, py, vx, vy, lo, hi):
    # even-odd rule over vertices vx[lo:hi], vy[lo:hi]
    inside = False
    j = hi - 1
    for i in range(lo, hi):
        yi = vy[i]
        yj = vy[j]
        if (yi > py) != (yj > py):
            xcross = vx[i] + (py - yi) / (yj - yi) * (vx[j] - vx[i])
            if px < xcross:
                inside = not inside
        j = i
    return inside


@_jit
def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if v > 0.0:
        return 1
    if v < 0.0:
        return -1
    return 0


@_jit
def _on_segment(ax, ay, bx, by, px, py):
    return (
        min(ax, bx) <= px <= max(ax, bx)
        and min(ay, by) <= py <= max(ay, by)
    )


@_jit
def _segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if o2 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    if o3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if o4 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    return False


@_jit
def _segment_hits_volume(ax, ay, az, bx, by, bz, vx, vy, lo, hi, height):
    # Clip the segment's parameter range to altitudes [0, height], then test
    # the clipped 2D projection against the footprint polygon.
    t0 = 0.0
    t1 = 1.0
    dz = bz - az
    if dz != 0.0:
        ta = (0.0 - az) / dz
        tb = (height - az) / dz
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    else:
        if az < 0.0 or az > height:
            return False
    p0x = ax + (bx - ax) * t0
    p0y = ay + (by - ay) * t0
    p1x = ax + (bx - ax) * t1
    p1y = ay + (by - ay) * t1
    if _point_in_poly(p0x, p0y, vx, vy, lo, hi):
        return True
    if _point_in_poly(p1x, p1y, vx, vy, lo, hi):
        return True
    j = hi - 1
    for i in range(lo, hi):
        if _segments_intersect(p0x, p0y, p1x, p1y, vx[j], vy[j], vx[i], vy[i]):
            return True
        j = i
    return False


@_jit
def los_blocked_batch(ax, ay, az, bx, by, bz,
                      vert_x, vert_y, offsets, heights,
                      bb_minx, bb_maxx, bb_miny, bb_maxy):
    """True per segment iff it pierces any extruded building footprint."""
    n = ax.shape[0]
    nb = offsets.shape[0] - 1
    out = np.zeros(n, np.bool_)
    for k in range(n):
        sminx = min(ax[k], bx[k])
        smaxx = max(ax[k], bx[k])
        sminy = min(ay[k], by[k])
        smaxy = max(ay[k], by[k])
        for b in range(nb):
            if smaxx < bb_minx[b] or sminx > bb_maxx[b]:
                continue
            if smaxy < bb_miny[b] or sminy > bb_maxy[b]:
                continue
            if min(az[k], bz[k]) > heights[b]:
                continue
            if _segment_hits_volume(ax[k], ay[k], az[k], bx[k], by[k], bz[k],
                                    vert_x, vert_y, offsets[b], offsets[b + 1],
                                    heights[b]):
                out[k] = True
                break
    return out


# ---------------------------------------------------------------------------
# TSP


@_jit
def tour_cost(matrix, order, closed):
    c = 0.0
    for i in range(order.shape[0] - 1):
        c += matrix[order[i], order[i + 1]]
    if closed and order.shape[0] > 1:
        c += matrix[order[-1], order[0]]
    return c


@_jit
def nearest_neighbor_order(matrix, start):
    n = matrix.shape[0]
    order = np.empty(n, np.int64)
    used = np.zeros(n, np.bool_)
    order[0] = start
    used[start] = True
    cur = start
    for k in range(1, n):
        best = -1
        best_d = np.inf
        for j in range(n):
            if not used[j] and matrix[cur, j] < best_d:
                best_d = matrix[cur, j]
                best = j
        order[k] = best
        used[best] = True
        cur = best
    return order


@_jit
def two_opt(matrix, order, closed):
    """First-improvement 2-opt sweeps until no move improves.

    order[0] stays fixed. Works on both open paths and closed tours;
    requires a symmetric cost matrix.
    """
    n = order.shape[0]
    if n < 3:
        return tour_cost(matrix, order, closed)
    eps = 1e-9
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            a = order[i]
            for j in range(i + 1, n):
                b = order[i + 1]
                c = order[j]
                if j < n - 1:
                    d = order[j + 1]
                    delta = matrix[a, c] + matrix[b, d] - matrix[a, b] - matrix[c, d]
                elif closed:
                    d = order[0]
                    delta = matrix[a, c] + matrix[b, d] - matrix[a, b] - matrix[c, d]
                else:
                    delta = matrix[a, c] - matrix[a, b]
                if delta < -eps:
                    lo = i + 1
                    hi = j
                    while lo < hi:
                        tmp = order[lo]
                        order[lo] = order[hi]
                        order[hi] = tmp
                        lo += 1
                        hi -= 1
                    improved = True
    return tour_cost(matrix, order, closed)


@_jit
def held_karp(matrix, closed):
    """Exact TSP from city 0 by subset DP; lexicographically smallest optimum.

    g[S, j] = cheapest way to leave city j+1, visit exactly the cities in
    bitmask S (over cities 1..n-1), then close to city 0 if requested. The
    forward walk re-evaluates the same float expressions the DP minimized,
    so optimal-tie detection is exact and the smallest next city wins.
    """
    n = matrix.shape[0]
    order = np.empty(n, np.int64)
    order[0] = 0
    if n == 1:
        return order, 0.0
    m = n - 1
    size = 1 << m
    g = np.empty((size, m), np.float64)
    for j in range(m):
        g[0, j] = matrix[j + 1, 0] if closed else 0.0
    for s in range(1, size):
        for j in range(m):
            if s & (1 << j):
                continue
            best = np.inf
            for c in range(m):
                if s & (1 << c):
                    v = matrix[j + 1, c + 1] + g[s & ~(1 << c), c]
                    if v < best:
                        best = v
            g[s, j] = best
    s = size - 1
    last = -1
    for pos in range(1, n):
        best = np.inf
        pick = -1
        for c in range(m):
            if s & (1 << c):
                if last < 0:
                    v = matrix[0, c + 1] + g[s & ~(1 << c), c]
                else:
                    v = matrix[last + 1, c + 1] + g[s & ~(1 << c), c]
                if v < best:
                    best = v
                    pick = c
        order[pos] = pick + 1
        s &= ~(1 << pick)
        last = pick
    return order, tour_cost(matrix, order, closed)


# ---------------------------------------------------------------------------
# drone sorties against a truck timetable
#
# The truck path is given as parallel arrays: node ids, xy coordinates, and
# arrive/depart times per path position. A drone launches when the truck
# departs a path position and must be picked up at a strictly later position.

SORTIE_OK = 0
SORTIE_NO_NODE = 1
SORTIE_ENDURANCE = 2


@_jit
def sortie_from_launch(path_x, path_y, arrive, depart, launch_idx,
                       tx, ty, speed, service, endurance):
    """Earliest feasible rendezvous for a launch at path position launch_idx.

    Returns (status, rdv_idx, deliver_time, rdv_arrival, rdv_time). The drone
    may land any time up to the truck's departure from a node; rendezvous time
    is the later of drone arrival and truck arrival. Rendezvous times are
    non-decreasing along the path, so the first feasible node minimizes
    airborne time and a single endurance check there suffices.
    """
    n = path_x.shape[0]
    t0 = depart[launch_idx]
    dx = path_x[launch_idx] - tx
    dy = path_y[launch_idx] - ty
    t_deliver = t0 + math.sqrt(dx * dx + dy * dy) / speed
    t_leave = t_deliver + service
    for r in range(launch_idx + 1, n):
        bx = path_x[r] - tx
        by = path_y[r] - ty
        t_arr = t_leave + math.sqrt(bx * bx + by * by) / speed
        if t_arr <= depart[r]:
            t_rdv = arrive[r] if arrive[r] > t_arr else t_arr
            if t_rdv - t0 <= endurance:
                return SORTIE_OK, r, t_deliver, t_arr, t_rdv
            return SORTIE_ENDURANCE, r, t_deliver, t_arr, t_rdv
    return SORTIE_NO_NODE, -1, t_deliver, 0.0, 0.0


@_jit
def best_sortie(path_x, path_y, path_node, arrive, depart, n_graph_nodes,
                free_time, tx, ty, speed, service, endurance):
    """Completion-minimizing sortie over all candidate launch nodes.

    A candidate launch node is represented by its first path occurrence whose
    departure is at or after free_time (the same rule the plan builder uses to
    re-anchor committed sorties). Returns
    (launch_idx, rdv_idx, completion, deliver_time, rdv_arrival, rdv_time)
    with launch_idx = -1 when no feasible sortie exists.
    """
    n = path_x.shape[0]
    seen = np.zeros(n_graph_nodes, np.bool_)
    best_completion = np.inf
    b_li = -1
    b_r = -1
    b_deliver = 0.0
    b_arr = 0.0
    b_rdv = 0.0
    for li in range(n - 1):
        t0 = depart[li]
        if t0 < free_time:
            continue
        if t0 + service >= best_completion:
            break  # departures are non-decreasing; no later launch can win
        nid = path_node[li]
        if seen[nid]:
            continue
        seen[nid] = True
        status, r, t_deliver, t_arr, t_rdv = sortie_from_launch(
            path_x, path_y, arrive, depart, li, tx, ty, speed, service, endurance)
        if status == SORTIE_OK:
            completion = t_deliver + service
            if completion < best_completion:
                best_completion = completion
                b_li = li
                b_r = r
                b_deliver = t_deliver
                b_arr = t_arr
                b_rdv = t_rdv
    return b_li, b_r, best_completion, b_deliver, b_arr, b_rdv


@_jit
def build_timetable(step_times, services):
    """Arrive/depart times along a path from per-step travel and service times.

    step_times[i] is the travel time from position i to i+1; services[i] is
    the stop time spent at position i. The recurrence matches the simulator's
    event arithmetic exactly.
    """
    n = services.shape[0]
    arrive = np.empty(n, np.float64)
    depart = np.empty(n, np.float64)
    arrive[0] = 0.0
    for i in range(n):
        depart[i] = arrive[i] + services[i]
        if i + 1 < n:
            arrive[i + 1] = depart[i] + step_times[i]
    return arrive, depart
