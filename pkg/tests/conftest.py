import numpy as np
import pytest

from hybridfleet.hybrid import FleetConfig, HybridPlan, TruckTimetable
from hybridfleet.jobs import Category, DeliveryJob, DeliverySet, generate_delivery_sets
from hybridfleet.rng import generator
from hybridfleet.scenario import Edge, Point, RoadGraph, Scenario, generate_grid_scenario


def line_scenario(n_nodes=11, spacing=100.0, speed=10.0) -> Scenario:
    """Straight east-west road: node i at (i*spacing, 0)."""
    nodes = {i: Point(i * spacing, 0.0) for i in range(n_nodes)}
    edges = [Edge(i, i + 1, spacing, speed) for i in range(n_nodes - 1)]
    return Scenario(RoadGraph(nodes, edges), [], depot=0,
                    base_station=Point(n_nodes * spacing / 2, 0.0, 30.0))


def line_timetable(scenario: Scenario, truck_speed=10.0) -> TruckTimetable:
    """Timetable for the truck driving the line end to end without stops."""
    nodes = sorted(scenario.graph.nodes)
    times = [0.0]
    for a, b in zip(nodes, nodes[1:]):
        p, q = scenario.graph.nodes[a], scenario.graph.nodes[b]
        times.append(times[-1] + p.dist2d(q) / truck_speed)
    arr = np.array(times)
    return TruckTimetable(nodes, arr, arr.copy())


def job_at(x, y, job_id=0, category=Category.STANDARD) -> DeliveryJob:
    return DeliveryJob(job_id, building_id=0, target=Point(x, y), category=category)


def sortie_plan(scenario, timetable, sorties, fleet) -> HybridPlan:
    """Plan with no truck stops and the given sorties on the line road."""
    completion = {s.job_id: s.deliver_time + fleet.drone_service for s in sorties}
    return HybridPlan(
        truck_stops=[], stop_positions={}, timetable=timetable, sorties=sorties,
        completion=completion, prioritized=False,
        objective=sum(completion.values()),
        makespan=float(timetable.arrive[-1]))


def random_world(case: int, *, max_jobs=9, max_drones=3):
    """Seeded random (scenario, set, fleet, prioritize) instance for properties."""
    rng = generator(0xC0FFEE, case)
    rows = int(rng.integers(3, 6))
    cols = int(rng.integers(3, 6))
    spacing = float(rng.uniform(60, 140))
    sc = generate_grid_scenario(rows, cols, spacing, int(rng.integers(1, 3)),
                                seed=int(rng.integers(0, 2 ** 31)))
    per = int(rng.integers(2, max_jobs))
    med = int(rng.integers(0, min(per, 4)))
    dset = generate_delivery_sets(sc, 1, per, med, seed=int(rng.integers(0, 2 ** 31)))[0]
    fleet = FleetConfig(
        drone_count=int(rng.integers(0, max_drones + 1)),
        truck_speed=float(rng.uniform(5, 14)),
        truck_service=float(rng.uniform(20, 90)),
        drone_speed=float(rng.uniform(8, 20)),
        drone_endurance=float(rng.uniform(60, 1500)),
        drone_service=float(rng.uniform(5, 60)),
        turnaround=float(rng.uniform(10, 90)),
    )
    prioritize = bool(rng.integers(0, 2))
    return sc, dset, fleet, prioritize


@pytest.fixture(scope="session")
def grid8() -> Scenario:
    return generate_grid_scenario(8, 8, 100.0, 2, seed=11)


@pytest.fixture(scope="session")
def grid8_set(grid8) -> DeliverySet:
    return generate_delivery_sets(grid8, 1, 15, 5, seed=3)[0]
