"""Deterministic discrete-event execution of a hybrid plan.

The engine recomputes all motion and service times from the scenario and
fleet configuration (it only takes routing decisions - stop order, launch and
rendezvous nodes - from the plan), so completion-time agreement with the
planner is a genuine cross-check rather than a copy. A single run is
sequential; separate runs share only immutable inputs.
"""
from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError, PlanConsistencyError
from .hybrid import FleetConfig, HybridPlan, Sortie, validate_fleet
from .scenario import Scenario

_SLACK = 1e-9
_CLIMB_RATE_MPS = 10.0  # vertical transition rate for trajectory altitude ramps

KIND_TRUCK_ARRIVE = "truck_arrive"
KIND_TRUCK_SERVE = "truck_serve"
KIND_DRONE_LAUNCH = "drone_launch"
KIND_DRONE_DELIVER = "drone_deliver"
KIND_DRONE_RENDEZVOUS = "drone_rendezvous"
KIND_TOUR_COMPLETE = "tour_complete"

_KIND_RANK = {
    KIND_TRUCK_ARRIVE: 0,
    KIND_DRONE_RENDEZVOUS: 1,
    KIND_TRUCK_SERVE: 2,
    KIND_DRONE_LAUNCH: 3,
    KIND_DRONE_DELIVER: 4,
    KIND_TOUR_COMPLETE: 9,
}


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    vehicle: str
    job: int | None
    node: int | None
    x: float
    y: float
    z: float


@dataclass
class Trajectory:
    """Piecewise-linear position over time."""
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def at(self, t: float) -> tuple[float, float, float]:
        return (float(np.interp(t, self.times, self.x)),
                float(np.interp(t, self.times, self.y)),
                float(np.interp(t, self.times, self.z)))


@dataclass
class DeliveryTrace:
    events: list[SimEvent]
    completion: dict[int, float]
    trajectories: dict[str, Trajectory]

    @property
    def end_time(self) -> float:
        return self.events[-1].time if self.events else 0.0

    def airborne_windows(self) -> dict[str, list[tuple[float, float]]]:
        """vehicle -> [(launch, rendezvous)] intervals, from the event log."""
        out: dict[str, list[tuple[float, float]]] = {}
        open_at: dict[str, float] = {}
        for ev in self.events:
            if ev.kind == KIND_DRONE_LAUNCH:
                open_at[ev.vehicle] = ev.time
            elif ev.kind == KIND_DRONE_RENDEZVOUS and ev.vehicle in open_at:
                out.setdefault(ev.vehicle, []).append((open_at.pop(ev.vehicle), ev.time))
        return out


def position_at(trace: DeliveryTrace, vehicle: str, t: float) -> tuple[float, float, float]:
    """Linear interpolation on the vehicle's trajectory."""
    if vehicle not in trace.trajectories:
        raise ParameterError(f"unknown vehicle {vehicle!r}")
    traj = trace.trajectories[vehicle]
    if t < traj.times[0] - _SLACK or t > traj.times[-1] + _SLACK:
        raise ParameterError(f"t={t} outside trajectory range "
                             f"[{traj.times[0]}, {traj.times[-1]}]")
    return traj.at(t)


def _validate(scenario: Scenario, plan: HybridPlan, fleet: FleetConfig) -> None:
    validate_fleet(fleet)
    g = scenario.graph
    nodes = plan.timetable.nodes
    if not nodes:
        raise PlanConsistencyError("plan has an empty truck path")
    edge_ok = {(e.a, e.b) for e in g.edges} | {(e.b, e.a) for e in g.edges}
    for n in nodes:
        if n not in g.nodes:
            raise PlanConsistencyError(f"path node {n} not in scenario graph")
    for u, v in zip(nodes, nodes[1:]):
        if u != v and (u, v) not in edge_ok:
            raise PlanConsistencyError(f"path step {u}->{v} is not a road edge")
    for j, pos in plan.stop_positions.items():
        if not 0 <= pos < len(nodes):
            raise PlanConsistencyError(f"stop position for job {j} outside path")
    path_set = set(nodes)
    for s in plan.sorties:
        if s.drone_id < 0 or s.drone_id >= fleet.drone_count:
            raise PlanConsistencyError(f"sortie for job {s.job_id} uses drone "
                                       f"{s.drone_id} outside fleet of {fleet.drone_count}")
        if s.launch_node not in path_set or s.rendezvous_node not in path_set:
            raise PlanConsistencyError(f"sortie for job {s.job_id} references nodes "
                                       "off the truck path")


def simulate(scenario: Scenario, plan: HybridPlan, fleet: FleetConfig,
             targets: dict[int, tuple[float, float]] | None = None) -> DeliveryTrace:
    """Execute the plan; returns events, completions, and trajectories.

    ``targets`` optionally overrides job id -> delivery coordinates; by
    default they are reconstructed from the plan's sortie geometry for drone
    jobs (truck jobs are served at path nodes).
    """
    _validate(scenario, plan, fleet)
    g = scenario.graph
    nodes = plan.timetable.nodes
    n = len(nodes)
    npos = {nid: p for nid, p in g.nodes.items()}

    edge_time = {}
    for e in g.edges:
        t = e.length / min(fleet.truck_speed, e.speed_limit)
        edge_time[(e.a, e.b)] = t
        edge_time[(e.b, e.a)] = t

    job_at_pos = {pos: j for j, pos in plan.stop_positions.items()}

    def target_xy(s: Sortie) -> tuple[float, float]:
        if targets and s.job_id in targets:
            return targets[s.job_id]
        return (s.target_x, s.target_y)

    pending: dict[int, list[Sortie]] = {}
    for s in sorted(plan.sorties, key=lambda s: (s.drone_id, s.launch_time)):
        pending.setdefault(s.drone_id, []).append(s)
    drone_free = {d: 0.0 for d in range(fleet.drone_count)}
    aboard = {d: True for d in range(fleet.drone_count)}
    rendezvous_at: dict[int, list[tuple[int, float, Sortie, tuple[float, float]]]] = {}

    raw_events: list[tuple] = []
    completion: dict[int, float] = {}
    truck_frames: list[tuple[float, float, float]] = []  # (t, x, y)
    sortie_frames: dict[int, list[list[tuple]]] = {d: [] for d in range(fleet.drone_count)}

    def emit(time, kind, vehicle, job, node, x, y, z):
        raw_events.append((time, _KIND_RANK[kind], vehicle, len(raw_events),
                           kind, job, node, x, y, z))

    # The heap drives (time, priority, seq, tag, payload) entries; truck
    # motion, services, launches and recoveries all schedule one another.
    heap: list = []
    seq = 0

    def push(time, prio, tag, payload):
        nonlocal seq
        heapq.heappush(heap, (time, prio, seq, tag, payload))
        seq += 1

    has_jobs = bool(plan.stop_positions) or bool(plan.sorties)
    p0 = npos[nodes[0]]
    truck_frames.append((0.0, p0.x, p0.y))
    push(0.0, 0, "truck_at", 0)
    tour_end = 0.0

    while heap:
        t, _prio, _seq, tag, payload = heapq.heappop(heap)
        if tag == "truck_at":
            pos = payload
            node = nodes[pos]
            p = npos[node]
            if pos > 0:
                truck_frames.append((t, p.x, p.y))
                emit(t, KIND_TRUCK_ARRIVE, "truck", None, node, p.x, p.y, 0.0)
            for d, t_arr, s, txy in rendezvous_at.pop(pos, []):
                t_rdv = t if t > t_arr else t_arr
                push(t_rdv, 1, "rendezvous", (d, s, t_arr, txy, pos))
            if pos in job_at_pos:
                t_dep = t + fleet.truck_service
                emit(t_dep, KIND_TRUCK_SERVE, "truck", job_at_pos[pos], node,
                     p.x, p.y, 0.0)
                completion[job_at_pos[pos]] = t_dep
                truck_frames.append((t_dep, p.x, p.y))
                push(t_dep, 3, "truck_depart", pos)
            else:
                push(t, 3, "truck_depart", pos)
        elif tag == "truck_depart":
            pos = payload
            node = nodes[pos]
            p = npos[node]
            for d in range(fleet.drone_count):
                if not aboard[d] or not pending.get(d):
                    continue
                s = pending[d][0]
                if s.launch_node != node or t < drone_free[d] - _SLACK:
                    continue
                pending[d].pop(0)
                aboard[d] = False
                txy = target_xy(s)
                out_d = math.hypot(p.x - txy[0], p.y - txy[1])
                t_deliver = t + out_d / fleet.drone_speed
                t_complete = t_deliver + fleet.drone_service
                emit(t, KIND_DRONE_LAUNCH, f"drone{d}", s.job_id, node, p.x, p.y, 0.0)
                push(t_complete, 4, "deliver", (d, s, t_deliver, txy))
                rp = npos[s.rendezvous_node]
                back_d = math.hypot(rp.x - txy[0], rp.y - txy[1])
                t_arr = t_complete + back_d / fleet.drone_speed
                rpos = _rendezvous_position(plan, pos, s.rendezvous_node, t_arr)
                rendezvous_at.setdefault(rpos, []).append((d, t_arr, s, txy))
                sortie_frames[d].append([
                    (t, p.x, p.y), (t_deliver, txy[0], txy[1]),
                    (t_complete, txy[0], txy[1]), (t_arr, rp.x, rp.y)])
            if pos + 1 < n:
                u, v = nodes[pos], nodes[pos + 1]
                dt = 0.0 if u == v else edge_time[(u, v)]
                push(t + dt, 0, "truck_at", pos + 1)
            else:
                push(t, 9, "tour_complete", None)
        elif tag == "deliver":
            d, s, t_deliver, txy = payload
            completion[s.job_id] = t
            emit(t, KIND_DRONE_DELIVER, f"drone{d}", s.job_id, None,
                 txy[0], txy[1], fleet.drone_altitude)
        elif tag == "rendezvous":
            d, s, t_arr, txy, rpos = payload
            rp = npos[s.rendezvous_node]
            emit(t, KIND_DRONE_RENDEZVOUS, f"drone{d}", s.job_id,
                 s.rendezvous_node, rp.x, rp.y, 0.0)
            aboard[d] = True
            drone_free[d] = t + fleet.turnaround
            sortie_frames[d][-1].append((t, rp.x, rp.y))
        elif tag == "tour_complete":
            tour_end = t
            p = npos[nodes[-1]]
            emit(t, KIND_TOUR_COMPLETE, "truck", None, nodes[-1], p.x, p.y, 0.0)

    for d in range(fleet.drone_count):
        if not aboard[d] or pending.get(d):
            raise PlanConsistencyError(f"drone {d} was not recovered or has "
                                       "unflown sorties")

    events = [SimEvent(e[0], e[4], e[2], e[5], e[6], e[7], e[8], e[9])
              for e in sorted(raw_events)]
    if not has_jobs:
        events = [ev for ev in events if ev.kind == KIND_TOUR_COMPLETE]

    trajectories = _build_trajectories(truck_frames, sortie_frames, fleet, tour_end)
    return DeliveryTrace(events, completion, trajectories)


def _rendezvous_position(plan: HybridPlan, after_pos: int, node: int,
                         t_arr: float) -> int:
    tt = plan.timetable
    first = -1
    for i in range(after_pos + 1, len(tt.nodes)):
        if tt.nodes[i] == node:
            if first < 0:
                first = i
            if tt.depart[i] >= t_arr - 1e-6:
                return i
    if first < 0:
        raise PlanConsistencyError(f"rendezvous node {node} not on path after launch")
    return first


def _build_trajectories(truck_frames, sortie_frames, fleet: FleetConfig,
                        tour_end: float) -> dict[str, Trajectory]:
    tf = _dedupe(truck_frames)
    if tf[-1][0] < tour_end:
        tf.append((tour_end, tf[-1][1], tf[-1][2]))
    t_t = np.array([f[0] for f in tf])
    t_x = np.array([f[1] for f in tf])
    t_y = np.array([f[2] for f in tf])
    out = {"truck": Trajectory(t_t, t_x, t_y, np.zeros(len(tf)))}

    for d, flights in sortie_frames.items():
        frames: list[tuple[float, float, float, float]] = []
        t_cursor = 0.0
        for fl in flights:
            launch_t = fl[0][0]
            frames.extend(_truck_slice(t_t, t_x, t_y, t_cursor, launch_t))
            frames.extend(_with_altitude(_dedupe(fl), fleet.drone_altitude))
            t_cursor = fl[-1][0]
        frames.extend(_truck_slice(t_t, t_x, t_y, t_cursor, tour_end))
        ded: list[tuple[float, float, float, float]] = []
        for fr in frames:
            if ded and fr[0] == ded[-1][0]:
                ded[-1] = fr
            else:
                ded.append(fr)
        out[f"drone{d}"] = Trajectory(np.array([f[0] for f in ded]),
                                      np.array([f[1] for f in ded]),
                                      np.array([f[2] for f in ded]),
                                      np.array([f[3] for f in ded]))
    return out


def _dedupe(frames):
    out = []
    for fr in frames:
        if out and fr[0] == out[-1][0]:
            out[-1] = fr
        else:
            out.append(fr)
    return out


def _with_altitude(fl, alt: float):
    """Attach a trapezoidal altitude profile to a sortie's xy keyframes.

    The drone ramps between ground and cruise altitude at a fixed vertical
    rate at the start and end of the flight (clipped to a triangle for very
    short sorties), so it spends nearly the whole sortie at altitude while
    the position-over-time function stays continuous.
    """
    t0 = fl[0][0]
    te = fl[-1][0]
    if te <= t0:
        return [(t0, fl[-1][1], fl[-1][2], 0.0)]
    tc = alt / _CLIMB_RATE_MPS
    if 2.0 * tc < te - t0:
        breakpoints = {t0 + tc, te - tc}
    else:
        breakpoints = {(t0 + te) / 2.0}
    ts = np.array([f[0] for f in fl])
    xs = np.array([f[1] for f in fl])
    ys = np.array([f[2] for f in fl])
    all_t = sorted(set(ts.tolist()) | breakpoints)
    frames = []
    for t in all_t:
        z = alt * min(1.0, (t - t0) / tc, (te - t) / tc)
        frames.append((t, float(np.interp(t, ts, xs)), float(np.interp(t, ts, ys)),
                       max(0.0, z)))
    return frames


def _truck_slice(t_t, t_x, t_y, t_lo, t_hi):
    """Truck position frames covering [t_lo, t_hi], z = 0."""
    if t_hi < t_lo:
        t_hi = t_lo
    frames = [(t_lo, float(np.interp(t_lo, t_t, t_x)),
               float(np.interp(t_lo, t_t, t_y)), 0.0)]
    for i in range(len(t_t)):
        if t_lo < t_t[i] < t_hi:
            frames.append((float(t_t[i]), float(t_x[i]), float(t_y[i]), 0.0))
    frames.append((t_hi, float(np.interp(t_hi, t_t, t_x)),
                   float(np.interp(t_hi, t_t, t_y)), 0.0))
    return frames


# ---------------------------------------------------------------------------
# trace files: CSV event log plus a JSON sidecar with trajectories


def trace_sidecar_path(csv_path) -> str:
    return str(csv_path) + ".traj.json"


def save_trace(trace: DeliveryTrace, csv_path) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "kind", "vehicle", "job", "node", "x", "y", "z"])
        for ev in trace.events:
            w.writerow([repr(ev.time), ev.kind, ev.vehicle,
                        "" if ev.job is None else ev.job,
                        "" if ev.node is None else ev.node,
                        repr(ev.x), repr(ev.y), repr(ev.z)])
    sidecar = {
        "completion": {str(k): v for k, v in sorted(trace.completion.items())},
        "trajectories": {
            veh: {"t": tr.times.tolist(), "x": tr.x.tolist(),
                  "y": tr.y.tolist(), "z": tr.z.tolist()}
            for veh, tr in sorted(trace.trajectories.items())},
    }
    with open(trace_sidecar_path(csv_path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f)
        f.write("\n")


def load_trace(csv_path) -> DeliveryTrace:
    events = []
    try:
        with open(csv_path, encoding="utf-8", newline="") as f:
            for i, row in enumerate(csv.DictReader(f)):
                events.append(SimEvent(
                    float(row["time_s"]), row["kind"], row["vehicle"],
                    int(row["job"]) if row["job"] else None,
                    int(row["node"]) if row["node"] else None,
                    float(row["x"]), float(row["y"]), float(row["z"])))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{csv_path}: bad event row: {exc}") from exc
    with open(trace_sidecar_path(csv_path), encoding="utf-8") as f:
        sidecar = json.load(f)
    completion = {int(k): float(v) for k, v in sidecar["completion"].items()}
    trajectories = {
        veh: Trajectory(np.array(tr["t"]), np.array(tr["x"]),
                        np.array(tr["y"]), np.array(tr["z"]))
        for veh, tr in sidecar["trajectories"].items()}
    return DeliveryTrace(events, completion, trajectories)
