"""En-route truck-drone assignment.

Drones launch from and rejoin the moving truck at road-graph nodes on its
path; the truck never stops for drone operations. Launches happen at the
truck's departure instant over a node, recovery any time up to its departure
from a later node. A drone carries one parcel per sortie and needs a
turnaround aboard the truck between sorties.

The planner starts from a pure truck tour and greedily moves one job at a
time to a drone, committing the single (job, drone, launch node) candidate
that most reduces the summed predicted completion times, until no candidate
improves.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, ParseError, SortieInfeasible
from .jobs import Category, DeliverySet
from .routing import Solver, Tour, dijkstra_times, job_nodes, plain_schedule, priority_schedule
from .scenario import Scenario, nearest_node

_EPS = 1e-9


@dataclass
class FleetConfig:
    truck_speed: float = 8.33        # m/s, capped by road speed limits
    truck_service: float = 60.0      # s per truck-served delivery
    drone_count: int = 0
    drone_speed: float = 12.0        # m/s ground speed
    drone_endurance: float = 1200.0  # s airborne per sortie
    drone_service: float = 30.0      # s at the customer, incl. vertical transit
    turnaround: float = 60.0         # s aboard the truck between sorties
    drone_altitude: float = 50.0     # m cruise altitude


def validate_fleet(fleet: FleetConfig) -> None:
    for name in ("truck_speed", "drone_speed", "drone_endurance", "turnaround",
                 "drone_altitude"):
        if getattr(fleet, name) <= 0:
            raise ParameterError(f"fleet.{name} must be positive")
    for name in ("truck_service", "drone_service"):
        if getattr(fleet, name) < 0:
            raise ParameterError(f"fleet.{name} must be non-negative")
    if fleet.drone_count < 0:
        raise ParameterError("fleet.drone_count must be >= 0")


@dataclass
class Sortie:
    drone_id: int
    job_id: int
    launch_node: int
    launch_time: float
    rendezvous_node: int
    rendezvous_time: float
    leg_out_m: float          # launch -> target
    leg_back_m: float         # target -> rendezvous
    hover_wait: float         # s waiting at the rendezvous node
    deliver_time: float       # arrival at the target
    target_x: float = 0.0     # delivery point, for executors of the plan
    target_y: float = 0.0

    @property
    def airborne_time(self) -> float:
        return self.rendezvous_time - self.launch_time


@dataclass
class TruckTimetable:
    nodes: list[int]
    arrive: np.ndarray
    depart: np.ndarray


@dataclass
class HybridPlan:
    truck_stops: list[int]             # job ids in truck service order
    stop_positions: dict[int, int]     # job id -> path position
    timetable: TruckTimetable
    sorties: list[Sortie]
    completion: dict[int, float]       # job id -> predicted completion (s)
    prioritized: bool
    objective: float                   # sum of completions
    makespan: float                    # truck's depot-return time

    @property
    def node_path(self) -> list[int]:
        return self.timetable.nodes

    def drone_jobs(self) -> dict[int, list[Sortie]]:
        out: dict[int, list[Sortie]] = {}
        for s in self.sorties:
            out.setdefault(s.drone_id, []).append(s)
        return out


# ---------------------------------------------------------------------------
# public operations


def drone_eligible(job, fleet: FleetConfig, scenario: Scenario) -> bool:
    """Sufficient battery check: out-and-back to the nearest road node fits
    into the endurance budget."""
    node = scenario.graph.nodes[nearest_node(scenario, job.target)]
    d = node.dist2d(job.target)
    return 2.0 * d / fleet.drone_speed + fleet.drone_service <= fleet.drone_endurance


def compute_sortie(timetable: TruckTimetable, launch_node: int, job,
                   drone_free_at: float, fleet: FleetConfig,
                   scenario: Scenario) -> Sortie:
    """Sortie launched at the truck's pass over launch_node.

    The drone leaves at the truck's departure instant, serves the target, and
    is recovered at the earliest later path node it can reach before the
    truck leaves it. Raises SortieInfeasible with reason 'no rendezvous node'
    or 'endurance exceeded'.
    """
    nodes = timetable.nodes
    xs = np.array([scenario.graph.nodes[n].x for n in nodes], np.float64)
    ys = np.array([scenario.graph.nodes[n].y for n in nodes], np.float64)
    li = -1
    for i in range(len(nodes) - 1):
        if nodes[i] == launch_node and timetable.depart[i] >= drone_free_at:
            li = i
            break
    if li < 0:
        raise ParameterError(
            f"launch node {launch_node} has no truck pass at or after t={drone_free_at}")
    status, r, t_deliver, t_arr, t_rdv = kernels.sortie_from_launch(
        xs, ys, timetable.arrive, timetable.depart, li,
        job.target.x, job.target.y,
        fleet.drone_speed, fleet.drone_service, fleet.drone_endurance)
    if status == kernels.SORTIE_NO_NODE:
        raise SortieInfeasible("no rendezvous node")
    if status == kernels.SORTIE_ENDURANCE:
        raise SortieInfeasible("endurance exceeded")
    t0 = timetable.depart[li]
    return Sortie(
        drone_id=-1, job_id=job.id, launch_node=launch_node, launch_time=float(t0),
        rendezvous_node=nodes[r], rendezvous_time=float(t_rdv),
        leg_out_m=(t_deliver - t0) * fleet.drone_speed,
        leg_back_m=(t_arr - t_deliver - fleet.drone_service) * fleet.drone_speed,
        hover_wait=float(t_rdv - t_arr), deliver_time=float(t_deliver),
        target_x=job.target.x, target_y=job.target.y)


def plan_timeline(plan: HybridPlan) -> dict[int, float]:
    """job id -> predicted completion: truck arrival + truck service for truck
    stops, target arrival + drone service for sorties."""
    return dict(plan.completion)


# ---------------------------------------------------------------------------
# plan construction


class _PlanContext:
    """Per-(scenario, set, fleet) caches used by the greedy improvement loop."""

    def __init__(self, scenario: Scenario, dset: DeliverySet, fleet: FleetConfig):
        self.scenario = scenario
        self.dset = dset
        self.fleet = fleet
        self.geom = scenario.geometry()
        self.nodes_of = job_nodes(scenario, dset)
        self.target_xy = {j.id: (j.target.x, j.target.y) for j in dset.jobs}
        self.depot = scenario.depot
        relevant = {self.depot} | set(self.nodes_of.values())
        self._dist_maps = {n: dijkstra_times(scenario.graph, n) for n in relevant}
        adj = scenario.graph.adjacency()
        self._adj_sorted = {u: sorted(vs) for u, vs in adj.items()}
        self._seg_cache: dict[tuple[int, int], tuple[list[int], np.ndarray]] = {}
        self.n_compact = len(self.geom.node_ids)

    def _segment(self, u: int, v: int) -> tuple[list[int], np.ndarray]:
        """Lex-smallest fastest node path u -> v plus per-edge truck times."""
        key = (u, v)
        cached = self._seg_cache.get(key)
        if cached is not None:
            return cached
        dist_v = self._dist_maps[v]
        path = [u]
        steps = []
        cur = u
        truck_speed = self.fleet.truck_speed
        while cur != v:
            nxt = None
            length = speed = 0.0
            for w, ln, sp in self._adj_sorted[cur]:
                if w in dist_v and dist_v[w] + ln / sp == dist_v[cur]:
                    nxt, length, speed = w, ln, sp
                    break
            if nxt is None:
                for w, ln, sp in self._adj_sorted[cur]:
                    if w in dist_v and abs(dist_v[w] + ln / sp - dist_v[cur]) <= _EPS:
                        nxt, length, speed = w, ln, sp
                        break
            if nxt is None:
                raise ParameterError(f"no route from {u} to {v}")
            steps.append(length / min(truck_speed, speed))
            path.append(nxt)
            cur = nxt
        out = (path, np.array(steps, np.float64))
        self._seg_cache[key] = out
        return out

    def build(self, truck_order: list[int], assignments: dict[int, list[tuple[int, int]]]):
        """Assemble the full plan state for a truck stop order plus committed
        drone assignments; None when a committed sortie no longer fits."""
        fleet = self.fleet
        path = [self.depot]
        steps: list[float] = []
        stop_pos: dict[int, int] = {}
        for j in truck_order:
            v = self.nodes_of[j]
            u = path[-1]
            if v == u:
                path.append(v)
                steps.append(0.0)
            else:
                seg, seg_steps = self._segment(u, v)
                path.extend(seg[1:])
                steps.extend(seg_steps.tolist())
            stop_pos[j] = len(path) - 1
        if path[-1] != self.depot:
            seg, seg_steps = self._segment(path[-1], self.depot)
            path.extend(seg[1:])
            steps.extend(seg_steps.tolist())

        n = len(path)
        services = np.zeros(n, np.float64)
        for pos in stop_pos.values():
            services[pos] = fleet.truck_service
        step_arr = np.array(steps, np.float64)
        arrive, depart = kernels.build_timetable(step_arr, services)

        path_x = self.geom.node_x[[self.geom.node_index[p] for p in path]]
        path_y = self.geom.node_y[[self.geom.node_index[p] for p in path]]
        path_cidx = np.array([self.geom.node_index[p] for p in path], np.int64)
        path_node = np.array(path, np.int64)

        completion = {j: float(depart[pos]) for j, pos in stop_pos.items()}
        truck_sum = math.fsum(completion.values())

        sorties: list[Sortie] = []
        free = {}
        drone_sum = 0.0
        for d in sorted(assignments):
            t_free = 0.0
            for job, lnode in assignments[d]:
                li = -1
                for i in range(n - 1):
                    if path[i] == lnode and depart[i] >= t_free:
                        li = i
                        break
                if li < 0:
                    return None
                tx, ty = self.target_xy[job]
                status, r, t_deliver, t_arr, t_rdv = kernels.sortie_from_launch(
                    path_x, path_y, arrive, depart, li, tx, ty,
                    fleet.drone_speed, fleet.drone_service, fleet.drone_endurance)
                if status != kernels.SORTIE_OK:
                    return None
                t0 = float(depart[li])
                sorties.append(Sortie(
                    d, job, lnode, t0, path[r], float(t_rdv),
                    leg_out_m=(t_deliver - t0) * fleet.drone_speed,
                    leg_back_m=(t_arr - t_deliver - fleet.drone_service) * fleet.drone_speed,
                    hover_wait=float(t_rdv - t_arr), deliver_time=float(t_deliver),
                    target_x=tx, target_y=ty))
                comp = float(t_deliver) + fleet.drone_service
                completion[job] = comp
                drone_sum += comp
                t_free = float(t_rdv) + fleet.turnaround
            free[d] = t_free

        return _Built(path, path_node, path_cidx, path_x, path_y, arrive, depart,
                      stop_pos, completion, sorties, free, truck_sum, drone_sum)


@dataclass
class _Built:
    path: list[int]
    path_node: np.ndarray
    path_cidx: np.ndarray
    path_x: np.ndarray
    path_y: np.ndarray
    arrive: np.ndarray
    depart: np.ndarray
    stop_pos: dict[int, int]
    completion: dict[int, float]
    sorties: list[Sortie]
    free: dict[int, float]
    truck_sum: float
    drone_sum: float

    @property
    def total(self) -> float:
        return self.truck_sum + self.drone_sum


def plan_hybrid(scenario: Scenario, dset: DeliverySet, fleet: FleetConfig,
                prioritize: bool = True, solver: Solver = "heuristic") -> HybridPlan:
    """Plan the full delivery: base truck tour, then greedy drone offloading.

    Each improvement step evaluates, for every truck job, removing it from
    the tour (remaining order kept, path re-spliced) and flying it with every
    drone from its best launch node; the step committing the largest
    reduction of summed completion times wins, smallest job id then drone id
    on ties. Stops when no candidate reduces the objective.
    """
    validate_fleet(fleet)
    ctx = _PlanContext(scenario, dset, fleet)
    base: Tour = (priority_schedule(scenario, dset, solver) if prioritize
                  else plain_schedule(scenario, dset, solver))
    truck_jobs = list(base.stops)
    assignments: dict[int, list[tuple[int, int]]] = {d: [] for d in range(fleet.drone_count)}
    current = ctx.build(truck_jobs, assignments)

    if fleet.drone_count > 0:
        while True:
            best = None  # (reduction, job, drone, launch_node)
            for j in sorted(truck_jobs):
                order2 = [x for x in truck_jobs if x != j]
                built = ctx.build(order2, assignments)
                if built is None:
                    continue
                partial = built.truck_sum + built.drone_sum
                tx, ty = ctx.target_xy[j]
                for d in range(fleet.drone_count):
                    li, r, comp, _, _, _ = kernels.best_sortie(
                        built.path_x, built.path_y, built.path_cidx,
                        built.arrive, built.depart, ctx.n_compact,
                        built.free[d], tx, ty,
                        fleet.drone_speed, fleet.drone_service, fleet.drone_endurance)
                    if li < 0:
                        continue
                    reduction = current.total - (partial + comp)
                    if reduction > _EPS and (best is None or reduction > best[0]):
                        best = (reduction, j, d, built.path[li])
            if best is None:
                break
            _, j, d, lnode = best
            truck_jobs.remove(j)
            assignments[d].append((j, lnode))
            current = ctx.build(truck_jobs, assignments)
            if current is None:  # cannot happen: the candidate was just built
                raise RuntimeError("committed candidate failed to rebuild")

    sorties = sorted(current.sorties, key=lambda s: (s.drone_id, s.launch_time))
    makespan = float(current.arrive[-1]) if len(current.arrive) else 0.0
    return HybridPlan(
        truck_stops=list(truck_jobs),
        stop_positions=dict(current.stop_pos),
        timetable=TruckTimetable(list(current.path), current.arrive, current.depart),
        sorties=sorties,
        completion=dict(current.completion),
        prioritized=prioritize,
        objective=current.total,
        makespan=makespan)


# ---------------------------------------------------------------------------
# plan invariants (used by tests and the simulator's pre-flight validation)


def check_plan(plan: HybridPlan, scenario: Scenario, dset: DeliverySet,
               fleet: FleetConfig) -> list[str]:
    """Return a list of violated invariant descriptions (empty when valid)."""
    problems = []
    served = set(plan.truck_stops) | {s.job_id for s in plan.sorties}
    all_jobs = {j.id for j in dset.jobs}
    if served != all_jobs:
        problems.append(f"served jobs {sorted(served)} != set jobs {sorted(all_jobs)}")
    if len(plan.truck_stops) + len(plan.sorties) != len(all_jobs):
        problems.append("a job is served more than once")
    nodes = plan.timetable.nodes
    pos_of = {}
    for i, nid in enumerate(nodes):
        pos_of.setdefault(nid, []).append(i)
    by_drone = plan.drone_jobs()
    for d, ss in by_drone.items():
        if d >= fleet.drone_count:
            problems.append(f"sortie uses unknown drone {d}")
        prev_end = None
        for s in ss:
            launch_positions = [i for i in pos_of.get(s.launch_node, [])
                                if abs(plan.timetable.depart[i] - s.launch_time) <= 1e-6]
            rdv_positions = pos_of.get(s.rendezvous_node, [])
            if not launch_positions:
                problems.append(f"sortie {s.job_id}: launch node not on path at launch time")
            elif not rdv_positions or max(rdv_positions) <= min(launch_positions):
                problems.append(f"sortie {s.job_id}: rendezvous not after launch on path")
            if s.airborne_time > fleet.drone_endurance + 1e-6:
                problems.append(f"sortie {s.job_id}: endurance exceeded")
            legs_time = (s.leg_out_m + s.leg_back_m) / fleet.drone_speed
            expect = legs_time + fleet.drone_service + s.hover_wait
            if abs(s.airborne_time - expect) > 1e-6:
                problems.append(f"sortie {s.job_id}: airborne time mismatch")
            if prev_end is not None and s.launch_time < prev_end + fleet.turnaround - 1e-6:
                problems.append(f"sortie {s.job_id}: turnaround gap violated")
            prev_end = s.rendezvous_time
    medical = {j.id for j in dset.jobs if j.category == Category.MEDICAL}
    if plan.prioritized:
        seen_standard = False
        for j in plan.truck_stops:
            if j in medical and seen_standard:
                problems.append("medical truck stop after a standard one")
                break
            if j not in medical:
                seen_standard = True
    return problems


# ---------------------------------------------------------------------------
# plan file format


def plan_to_dict(plan: HybridPlan, fleet: FleetConfig | None = None) -> dict:
    tt = plan.timetable
    out = {
        "truck": {
            "stops": [{"job": j, "path_index": plan.stop_positions[j]}
                      for j in plan.truck_stops],
            "node_path": list(tt.nodes),
            "timetable": [[float(a), float(d)] for a, d in zip(tt.arrive, tt.depart)],
        },
        "sorties": [asdict(s) for s in plan.sorties],
        "completion": {str(j): float(t) for j, t in sorted(plan.completion.items())},
        "prioritized": plan.prioritized,
        "objective": plan.objective,
        "makespan": plan.makespan,
    }
    if fleet is not None:
        out["fleet"] = asdict(fleet)
    return out


def plan_from_dict(data: dict) -> tuple[HybridPlan, FleetConfig | None]:
    try:
        truck = data["truck"]
        stops = [int(s["job"]) for s in truck["stops"]]
        stop_positions = {int(s["job"]): int(s["path_index"]) for s in truck["stops"]}
        nodes = [int(n) for n in truck["node_path"]]
        arrive = np.array([row[0] for row in truck["timetable"]], np.float64)
        depart = np.array([row[1] for row in truck["timetable"]], np.float64)
        sorties = [Sortie(**{k: (int(v) if k in ("drone_id", "job_id", "launch_node",
                                                 "rendezvous_node") else float(v))
                             for k, v in s.items()}) for s in data.get("sorties", [])]
        completion = {int(k): float(v) for k, v in data["completion"].items()}
        plan = HybridPlan(stops, stop_positions, TruckTimetable(nodes, arrive, depart),
                          sorties, completion, bool(data.get("prioritized", False)),
                          float(data.get("objective", sum(completion.values()))),
                          float(data.get("makespan", arrive[-1] if len(arrive) else 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"plan file: {exc!r}") from exc
    fleet = FleetConfig(**data["fleet"]) if "fleet" in data else None
    return plan, fleet


def save_plan(plan: HybridPlan, path, fleet: FleetConfig | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(plan_to_dict(plan, fleet), f, indent=1)
        f.write("\n")


def load_plan(path) -> tuple[HybridPlan, FleetConfig | None]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return plan_from_dict(data)
