# boundary_projection.py
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple, Union

import shapely
from shapely.geometry import LineString
from shapely.ops import unary_union

from layer_geometry import GeneralPolygon, GridPoint, Move, MoveKind, Point2, unit_edge

if TYPE_CHECKING:
    from multilayer_planner import LayerPlan

logger = logging.getLogger(__name__)

Edge = Tuple[GridPoint, GridPoint]

DIRECTIONS: Tuple[Tuple[int, int], ...] = ((1, 0), (-1, 0), (0, 1), (0, -1))
RAY_CAP_PIXELS = 2.0
TOLERANCE = 1e-9


@dataclass(frozen=True)
class Projection:
    source: GridPoint
    target: Point2
    direction: Tuple[int, int]
    via_edge: Optional[Edge] = None


@dataclass(frozen=True)
class BoundaryExtension:
    projections: Tuple[Projection, ...] = ()
    detoured_edges: FrozenSet[Edge] = frozenset()
    converted_idle_edges: FrozenSet[Edge] = frozenset()

    def by_source(self) -> Dict[GridPoint, Projection]:
        return {p.source: p for p in self.projections}


def _shape(polygon: Union[GeneralPolygon, Sequence[GeneralPolygon]]):
    if isinstance(polygon, GeneralPolygon):
        return polygon.to_shapely()
    return unary_union([p.to_shapely() for p in polygon])


def _pixel_box(p: GridPoint, pixel_size: float):
    return shapely.box(p.x * pixel_size, p.y * pixel_size, (p.x + 1) * pixel_size, (p.y + 1) * pixel_size)


def exposed_directions(p: GridPoint, iop: Set[GridPoint], shape, pixel_size: float) -> List[Tuple[int, int]]:
    """Sides of pixel p beyond which the polygon has area the IOP does not cover"""
    found = []
    for dx, dy in DIRECTIONS:
        q = p.offset(dx, dy)
        if q in iop:
            continue
        if shape.intersection(_pixel_box(q, pixel_size)).area > TOLERANCE * pixel_size * pixel_size:
            found.append((dx, dy))
    return found


def boundary_vertices(plan: "LayerPlan", polygon: Union[GeneralPolygon, Sequence[GeneralPolygon]]) -> Set[GridPoint]:
    shape = _shape(polygon)
    iop = {p for run in plan.runs for p in run}
    return {p for p in iop if exposed_directions(p, iop, shape, plan.pixel_size)}


def _ray_hit(p: GridPoint, direction: Tuple[int, int], boundary, pixel_size: float) -> Optional[Tuple[Point2, float]]:
    cx, cy = (p.x + 0.5) * pixel_size, (p.y + 0.5) * pixel_size
    reach = (0.5 + RAY_CAP_PIXELS) * pixel_size
    ray = LineString([(cx, cy), (cx + direction[0] * reach, cy + direction[1] * reach)])
    hits = ray.intersection(boundary)
    best = None
    for part in getattr(hits, "geoms", [hits]):
        if part.is_empty:
            continue
        for x, y in part.coords:
            dist = abs(x - cx) + abs(y - cy)
            if dist > TOLERANCE and (best is None or dist < best[1]):
                best = ((cx + direction[0] * dist, cy + direction[1] * dist), dist)
    return best


def _perpendicular(edge: Edge, direction: Tuple[int, int]) -> bool:
    a, b = edge
    return (b.x - a.x) * direction[0] + (b.y - a.y) * direction[1] == 0


def project_to_boundary(plan: "LayerPlan", polygon: Union[GeneralPolygon, Sequence[GeneralPolygon]]) -> "LayerPlan":
    """Extend boundary vertices of the toolpath orthogonally out to the polygon boundary.

    First pass: a print edge whose two endpoints are exposed on the same side
    perpendicular to it becomes a detour out to the boundary and back, or two
    out-and-back spurs when the boundary between them is not straight. Second
    pass: every other boundary vertex gets a spur along its shortest exposed
    ray; a perpendicular print edge to a first-pass vertex becomes idle.
    Each vertex is projected at most once and crossing projections are dropped.
    """
    ps = plan.pixel_size
    shape = _shape(polygon)
    outline = shape.boundary
    iop = {p for run in plan.runs for p in run}
    exposure = {p: exposed_directions(p, iop, shape, ps) for p in iop}
    exposure = {p: dirs for p, dirs in exposure.items() if dirs}
    if not exposure:
        return plan

    warnings: List[str] = []
    projections: Dict[GridPoint, Projection] = {}
    segments: List[LineString] = []
    detoured: Set[Edge] = set()
    converted: Set[Edge] = set()
    first_pass: Set[GridPoint] = set()
    missed: Set[GridPoint] = set()

    def centre(p: GridPoint) -> Point2:
        return ((p.x + 0.5) * ps, (p.y + 0.5) * ps)

    def hit(p: GridPoint, d: Tuple[int, int]) -> Optional[Tuple[Point2, float]]:
        found = _ray_hit(p, d, outline, ps)
        if found is None:
            if p not in missed:
                missed.add(p)
                warnings.append(f"projection ray from ({p.x}, {p.y}) misses the boundary")
            return None
        if found[1] <= 0.5 * ps + TOLERANCE:
            return None
        return found

    def accept(new_segments: List[LineString]) -> bool:
        for seg in new_segments:
            for other in segments:
                if seg.intersects(other) and not seg.touches(other):
                    return False
        segments.extend(new_segments)
        return True

    def add_spur(p: GridPoint, d: Tuple[int, int], target: Point2, via: Optional[Edge]) -> bool:
        if not accept([LineString([centre(p), target])]):
            warnings.append(f"projection from ({p.x}, {p.y}) crosses another projection, dropped")
            return False
        projections[p] = Projection(p, target, d, via)
        return True

    edges_in_order = [(a, b) for run in plan.runs for a, b in zip(run, run[1:])]

    for a, b in edges_in_order:
        if a in projections or b in projections or a not in exposure or b not in exposure:
            continue
        shared = [d for d in exposure[a] if d in exposure[b] and _perpendicular((a, b), d)]
        if not shared:
            continue
        d = shared[0]
        ha, hb = hit(a, d), hit(b, d)
        if ha is None or hb is None:
            continue
        edge = unit_edge(a, b)
        middle = LineString([ha[0], hb[0]])
        if shape.buffer(TOLERANCE).covers(middle):
            legs = [LineString([centre(a), ha[0]]), middle, LineString([hb[0], centre(b)])]
            if not accept(legs):
                warnings.append(f"detour at ({a.x}, {a.y})-({b.x}, {b.y}) crosses another projection, dropped")
                continue
            projections[a] = Projection(a, ha[0], d, edge)
            projections[b] = Projection(b, hb[0], d, edge)
            detoured.add(edge)
        else:
            add_spur(a, d, ha[0], edge)
            add_spur(b, d, hb[0], edge)
        first_pass.update(p for p in (a, b) if p in projections)

    neighbours: Dict[GridPoint, List[GridPoint]] = {}
    for a, b in edges_in_order:
        neighbours.setdefault(a, []).append(b)
        neighbours.setdefault(b, []).append(a)

    visit_order = list(dict.fromkeys(p for run in plan.runs for p in run))
    for p in visit_order:
        if p not in exposure or p in projections:
            continue
        rays = [(h, d) for d in exposure[p] for h in [hit(p, d)] if h is not None]
        if not rays:
            continue
        (target, _), d = min(rays, key=lambda item: (item[0][1], item[1]))
        via = None
        for q in neighbours.get(p, []):
            edge = unit_edge(p, q)
            if q in first_pass and _perpendicular(edge, d) and projections[q].direction == d and edge not in detoured:
                via = edge
                break
        if add_spur(p, d, target, via) and via is not None:
            converted.add(via)

    for message in warnings:
        logger.warning("layer %d: %s", plan.layer_index, message)

    extension = BoundaryExtension(
        projections=tuple(projections[p] for p in visit_order if p in projections),
        detoured_edges=frozenset(detoured),
        converted_idle_edges=frozenset(converted),
    )
    moves = trace_moves(plan.runs, ps, plan.z, extension)
    return replace(
        plan,
        moves=tuple(moves),
        print_edges=plan.print_edges - extension.detoured_edges - extension.converted_idle_edges,
        boundary=extension,
        warnings=plan.warnings + tuple(warnings),
    )


def trace_moves(runs: Sequence[Sequence[GridPoint]], pixel_size: float, z: float,
                extension: Optional[BoundaryExtension] = None) -> List[Move]:
    """Moves in mm: print along each run, idle between runs, with boundary extensions spliced in"""
    extension = extension or BoundaryExtension()
    spurs = {p: proj for p, proj in extension.by_source().items() if proj.via_edge not in extension.detoured_edges}
    targets = extension.by_source()
    moves: List[Move] = []

    def centre(p: GridPoint) -> Point2:
        return ((p.x + 0.5) * pixel_size, (p.y + 0.5) * pixel_size)

    def add(kind: MoveKind, a: Point2, b: Point2) -> None:
        if a != b:
            moves.append(Move(kind, a, b, z))

    def arrive(p: GridPoint) -> None:
        if p in spurs:
            add(MoveKind.PRINT, centre(p), spurs[p].target)
            add(MoveKind.PRINT, spurs[p].target, centre(p))

    previous: Optional[GridPoint] = None
    for run in runs:
        if not run:
            continue
        if previous is not None:
            add(MoveKind.IDLE, centre(previous), centre(run[0]))
        arrive(run[0])
        for a, b in zip(run, run[1:]):
            edge = unit_edge(a, b)
            if edge in extension.detoured_edges:
                add(MoveKind.PRINT, centre(a), targets[a].target)
                add(MoveKind.PRINT, targets[a].target, targets[b].target)
                add(MoveKind.PRINT, targets[b].target, centre(b))
            elif edge in extension.converted_idle_edges:
                add(MoveKind.IDLE, centre(a), centre(b))
            else:
                add(MoveKind.PRINT, centre(a), centre(b))
            arrive(b)
        previous = run[-1]
    return moves
