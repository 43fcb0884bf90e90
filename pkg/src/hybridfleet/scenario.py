"""Simulation world: road graph, buildings, depot, base station.

Coordinates are local planar meters (x east, y north, z up). The world is
immutable after construction and safe to share across parallel runs; the
derived geometry arrays used by the kernels are built lazily and cached.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvariantViolation, ParameterError, ParseError
from .rng import generator

DEFAULT_SPEED_MPS = 8.33          # urban road limit, ~30 km/h
BUILDING_HEIGHT_RANGE = (6.0, 24.0)
BUILDING_SIDE_RANGE = (10.0, 30.0)
CELL_MARGIN_M = 5.0               # clearance between footprints and roads
BASE_STATION_HEIGHT_M = 30.0
ACCESS_CENTROID_LIMIT_M = 50.0


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float = 0.0

    def dist2d(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    length: float        # meters
    speed_limit: float   # m/s


@dataclass
class RoadGraph:
    nodes: dict[int, Point]
    edges: list[Edge]

    def adjacency(self) -> dict[int, list[tuple[int, float, float]]]:
        """node -> [(neighbor, length, speed_limit)], built on demand."""
        adj: dict[int, list[tuple[int, float, float]]] = {u: [] for u in self.nodes}
        for e in self.edges:
            adj[e.a].append((e.b, e.length, e.speed_limit))
            adj[e.b].append((e.a, e.length, e.speed_limit))
        return adj


@dataclass
class Building:
    id: int
    footprint: list[Point]   # simple polygon, z = 0, counter-clockwise
    height: float            # meters
    access_point: Point      # parcel handover location

    def centroid(self) -> Point:
        # area centroid of the simple polygon
        a = 0.0
        cx = 0.0
        cy = 0.0
        pts = self.footprint
        for i in range(len(pts)):
            p = pts[i]
            q = pts[(i + 1) % len(pts)]
            cross = p.x * q.y - q.x * p.y
            a += cross
            cx += (p.x + q.x) * cross
            cy += (p.y + q.y) * cross
        if a == 0.0:
            xs = [p.x for p in pts]
            ys = [p.y for p in pts]
            return Point(sum(xs) / len(xs), sum(ys) / len(ys))
        a *= 0.5
        return Point(cx / (6.0 * a), cy / (6.0 * a))


@dataclass(eq=False)
class Scenario:
    graph: RoadGraph
    buildings: list[Building]
    depot: int                  # node id
    base_station: Point         # z = antenna height
    _geom: "_Geometry | None" = field(default=None, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.graph == other.graph and self.buildings == other.buildings
                and self.depot == other.depot and self.base_station == other.base_station)

    def geometry(self) -> "_Geometry":
        if self._geom is None:
            self._geom = _Geometry(self)
        return self._geom


class _Geometry:
    """Array views of a scenario for the numeric kernels."""

    def __init__(self, sc: Scenario):
        ids = sorted(sc.graph.nodes)
        self.node_ids = np.array(ids, np.int64)
        self.node_index = {nid: i for i, nid in enumerate(ids)}
        self.node_x = np.array([sc.graph.nodes[i].x for i in ids], np.float64)
        self.node_y = np.array([sc.graph.nodes[i].y for i in ids], np.float64)
        vx: list[float] = []
        vy: list[float] = []
        offsets = [0]
        heights = []
        for b in sc.buildings:
            for p in b.footprint:
                vx.append(p.x)
                vy.append(p.y)
            offsets.append(len(vx))
            heights.append(b.height)
        self.vert_x = np.array(vx, np.float64)
        self.vert_y = np.array(vy, np.float64)
        self.offsets = np.array(offsets, np.int64)
        self.heights = np.array(heights, np.float64)
        if sc.buildings:
            self.bb_minx = np.array([min(p.x for p in b.footprint) for b in sc.buildings])
            self.bb_maxx = np.array([max(p.x for p in b.footprint) for b in sc.buildings])
            self.bb_miny = np.array([min(p.y for p in b.footprint) for b in sc.buildings])
            self.bb_maxy = np.array([max(p.y for p in b.footprint) for b in sc.buildings])
        else:
            self.bb_minx = np.empty(0)
            self.bb_maxx = np.empty(0)
            self.bb_miny = np.empty(0)
            self.bb_maxy = np.empty(0)


# ---------------------------------------------------------------------------
# generation


def generate_grid_scenario(rows: int, cols: int, spacing: float,
                           buildings_per_cell: int, seed: int) -> Scenario:
    """Synthetic rows x cols street grid with randomly placed buildings.

    Node (r, c) has id r*cols + c at (c*spacing, r*spacing). Every street
    segment gets the default speed limit. Each of the (rows-1) x (cols-1)
    cells receives buildings_per_cell axis-aligned rectangular buildings
    placed uniformly inside the cell interior, heights uniform in [6, 24] m.
    The depot is node 0 at the origin; the base station sits at the grid
    center with a 30 m antenna. Identical seeds give byte-identical output.
    """
    if rows < 2 or cols < 2:
        raise ParameterError(f"grid needs rows >= 2 and cols >= 2, got {rows}x{cols}")
    if spacing <= 0:
        raise ParameterError(f"spacing must be positive, got {spacing}")
    if buildings_per_cell < 0:
        raise ParameterError("buildings_per_cell must be >= 0")

    nodes = {}
    for r in range(rows):
        for c in range(cols):
            nodes[r * cols + c] = Point(c * spacing, r * spacing, 0.0)
    edges = []
    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c
            if c + 1 < cols:
                edges.append(Edge(nid, nid + 1, spacing, DEFAULT_SPEED_MPS))
            if r + 1 < rows:
                edges.append(Edge(nid, nid + cols, spacing, DEFAULT_SPEED_MPS))

    rng = generator(seed)
    buildings = []
    bid = 0
    side_lo, side_hi = BUILDING_SIDE_RANGE
    h_lo, h_hi = BUILDING_HEIGHT_RANGE
    avail = spacing - 2.0 * CELL_MARGIN_M
    for r in range(rows - 1):
        for c in range(cols - 1):
            x0 = c * spacing
            y0 = r * spacing
            for _ in range(buildings_per_cell):
                w = min(rng.uniform(side_lo, side_hi), 0.8 * avail)
                d = min(rng.uniform(side_lo, side_hi), 0.8 * avail)
                cx = x0 + rng.uniform(CELL_MARGIN_M + w / 2, spacing - CELL_MARGIN_M - w / 2)
                cy = y0 + rng.uniform(CELL_MARGIN_M + d / 2, spacing - CELL_MARGIN_M - d / 2)
                height = rng.uniform(h_lo, h_hi)
                xmin, xmax = cx - w / 2, cx + w / 2
                ymin, ymax = cy - d / 2, cy + d / 2
                footprint = [Point(xmin, ymin), Point(xmax, ymin),
                             Point(xmax, ymax), Point(xmin, ymax)]
                access = Point((xmin + xmax) / 2, ymin, 0.0)
                buildings.append(Building(bid, footprint, height, access))
                bid += 1

    base = Point((cols - 1) * spacing / 2, (rows - 1) * spacing / 2,
                 BASE_STATION_HEIGHT_M)
    sc = Scenario(RoadGraph(nodes, edges), buildings, depot=0, base_station=base)
    validate_scenario(sc)
    return sc


# ---------------------------------------------------------------------------
# queries


def nearest_node(scenario: Scenario, p: Point) -> int:
    """Node id with minimal Euclidean (xy) distance to p; smallest id on ties."""
    if not scenario.graph.nodes:
        raise ParameterError("graph is empty")
    geom = scenario.geometry()
    dx = geom.node_x - p.x
    dy = geom.node_y - p.y
    d2 = dx * dx + dy * dy
    # node_ids is sorted ascending, argmin keeps the first (smallest id) tie
    return int(geom.node_ids[int(np.argmin(d2))])


def los_blocked(scenario: Scenario, a: Point, b: Point) -> bool:
    """True iff the 3D segment a-b intersects any building volume.

    Footprints are extruded from the ground to their height; endpoints inside
    a volume count as blocked.
    """
    if not scenario.buildings:
        return False
    geom = scenario.geometry()
    out = kernels.los_blocked_batch(
        np.array([a.x]), np.array([a.y]), np.array([a.z]),
        np.array([b.x]), np.array([b.y]), np.array([b.z]),
        geom.vert_x, geom.vert_y, geom.offsets, geom.heights,
        geom.bb_minx, geom.bb_maxx, geom.bb_miny, geom.bb_maxy)
    return bool(out[0])


def los_blocked_many(scenario: Scenario, a_xyz: np.ndarray, b_xyz: np.ndarray) -> np.ndarray:
    """Vectorized los_blocked over N segment endpoint pairs (N x 3 arrays)."""
    if not scenario.buildings:
        return np.zeros(len(a_xyz), bool)
    geom = scenario.geometry()
    return kernels.los_blocked_batch(
        np.ascontiguousarray(a_xyz[:, 0]), np.ascontiguousarray(a_xyz[:, 1]),
        np.ascontiguousarray(a_xyz[:, 2]), np.ascontiguousarray(b_xyz[:, 0]),
        np.ascontiguousarray(b_xyz[:, 1]), np.ascontiguousarray(b_xyz[:, 2]),
        geom.vert_x, geom.vert_y, geom.offsets, geom.heights,
        geom.bb_minx, geom.bb_maxx, geom.bb_miny, geom.bb_maxy)


# ---------------------------------------------------------------------------
# validation


def _polygon_is_simple(pts: list[Point]) -> bool:
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            b1, b2 = pts[j], pts[(j + 1) % n]
            if kernels._segments_intersect(a1.x, a1.y, a2.x, a2.y,
                                           b1.x, b1.y, b2.x, b2.y):
                return False
    return True


def _signed_area(pts: list[Point]) -> float:
    s = 0.0
    for i in range(len(pts)):
        p, q = pts[i], pts[(i + 1) % len(pts)]
        s += p.x * q.y - q.x * p.y
    return 0.5 * s


def validate_scenario(sc: Scenario) -> None:
    """Raise InvariantViolation naming the first broken invariant."""
    g = sc.graph
    if not g.nodes:
        raise InvariantViolation("graph has no nodes")
    for p in g.nodes.values():
        if not (math.isfinite(p.x) and math.isfinite(p.y) and math.isfinite(p.z)):
            raise InvariantViolation("non-finite coordinates")
    for e in g.edges:
        if e.a == e.b:
            raise InvariantViolation("self-loop edge", f"node {e.a}")
        if e.a not in g.nodes or e.b not in g.nodes:
            raise InvariantViolation("edge references unknown node", f"{e.a}-{e.b}")
        if e.speed_limit <= 0:
            raise InvariantViolation("non-positive speed limit", f"edge {e.a}-{e.b}")
        straight = g.nodes[e.a].dist2d(g.nodes[e.b])
        if e.length < straight - 1e-9:
            raise InvariantViolation(
                "edge length below endpoint distance",
                f"edge {e.a}-{e.b}: length {e.length} < {straight:.6f}")
    # connectivity by BFS
    adj = g.adjacency()
    seen = {next(iter(g.nodes))}
    stack = list(seen)
    while stack:
        u = stack.pop()
        for v, _, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(g.nodes):
        raise InvariantViolation("graph not connected",
                                 f"{len(g.nodes) - len(seen)} unreachable nodes")
    if sc.depot not in g.nodes:
        raise InvariantViolation("depot not in graph", f"node {sc.depot}")
    if sc.base_station.z <= 0:
        raise InvariantViolation("base station antenna height must be positive")
    seen_ids = set()
    depot_p = g.nodes[sc.depot]
    for b in sc.buildings:
        if b.id in seen_ids:
            raise InvariantViolation("duplicate building id", str(b.id))
        seen_ids.add(b.id)
        if len(b.footprint) < 3:
            raise InvariantViolation("footprint needs >= 3 vertices", f"building {b.id}")
        if not _polygon_is_simple(b.footprint):
            raise InvariantViolation("footprint not a simple polygon", f"building {b.id}")
        if b.height <= 0:
            raise InvariantViolation("building height must be positive", f"building {b.id}")
        if b.access_point.dist2d(b.centroid()) > ACCESS_CENTROID_LIMIT_M:
            raise InvariantViolation("access point too far from footprint centroid",
                                     f"building {b.id}")
        geom_ok = not kernels._point_in_poly(
            depot_p.x, depot_p.y,
            np.array([p.x for p in b.footprint]),
            np.array([p.y for p in b.footprint]),
            0, len(b.footprint))
        if not geom_ok:
            raise InvariantViolation("building contains the depot node", f"building {b.id}")


# ---------------------------------------------------------------------------
# file format
#
# UTF-8 JSON: nodes (id, x, y), edges (a, b, length_m, speed_mps),
# buildings (id, footprint [[x, y], ...], height_m, access [x, y]),
# depot (node id), base_station ([x, y, z]).


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing field '{key}'")
    return obj[key]


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "nodes": [{"id": nid, "x": p.x, "y": p.y}
                  for nid, p in sorted(sc.graph.nodes.items())],
        "edges": [{"a": e.a, "b": e.b, "length_m": e.length, "speed_mps": e.speed_limit}
                  for e in sc.graph.edges],
        "buildings": [{"id": b.id,
                       "footprint": [[p.x, p.y] for p in b.footprint],
                       "height_m": b.height,
                       "access": [b.access_point.x, b.access_point.y]}
                      for b in sc.buildings],
        "depot": sc.depot,
        "base_station": [sc.base_station.x, sc.base_station.y, sc.base_station.z],
    }


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ParseError("scenario file: top level must be an object")
    nodes = {}
    for i, nd in enumerate(_require(data, "nodes", "scenario")):
        where = f"nodes[{i}]"
        nid = int(_require(nd, "id", where))
        if nid in nodes:
            raise ParseError(f"{where}: duplicate node id {nid}")
        nodes[nid] = Point(float(_require(nd, "x", where)),
                           float(_require(nd, "y", where)), 0.0)
    edges = []
    for i, ed in enumerate(_require(data, "edges", "scenario")):
        where = f"edges[{i}]"
        edges.append(Edge(int(_require(ed, "a", where)),
                          int(_require(ed, "b", where)),
                          float(_require(ed, "length_m", where)),
                          float(_require(ed, "speed_mps", where))))
    buildings = []
    for i, bd in enumerate(data.get("buildings", [])):
        where = f"buildings[{i}]"
        fp = [Point(float(x), float(y)) for x, y in _require(bd, "footprint", where)]
        if _signed_area(fp) < 0:
            fp = fp[::-1]  # normalize to counter-clockwise
        ax, ay = _require(bd, "access", where)
        buildings.append(Building(int(_require(bd, "id", where)), fp,
                                  float(_require(bd, "height_m", where)),
                                  Point(float(ax), float(ay), 0.0)))
    bs = _require(data, "base_station", "scenario")
    if len(bs) != 3:
        raise ParseError("base_station: expected [x, y, z]")
    sc = Scenario(RoadGraph(nodes, edges), buildings,
                  depot=int(_require(data, "depot", "scenario")),
                  base_station=Point(float(bs[0]), float(bs[1]), float(bs[2])))
    validate_scenario(sc)
    return sc


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(sc), f, indent=1)
        f.write("\n")


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data)
