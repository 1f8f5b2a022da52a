# layer_geometry.py
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import cv2
import networkx as nx
import numpy as np
import shapely
from shapely.geometry import LinearRing, Polygon
from shapely.geometry.polygon import orient

logger = logging.getLogger(__name__)

INT32_MIN = -(2 ** 31)
INT32_MAX = 2 ** 31 - 1

Point2 = Tuple[float, float]


class LayerStackError(ValueError):
    """Layer-stack file could not be parsed or failed validation"""

    def __init__(self, message: str, layer_index: Optional[int] = None, offset: Optional[int] = None):
        self.layer_index = layer_index
        self.offset = offset
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class EmptyRasterError(ValueError):
    """Polygon is thinner than one pixel everywhere"""


@dataclass(frozen=True, order=True)
class GridPoint:
    x: int
    y: int

    def __post_init__(self):
        for value in (self.x, self.y):
            if not INT32_MIN <= value <= INT32_MAX:
                raise ValueError(f"grid coordinate {value} outside 32-bit range")

    def offset(self, dx: int, dy: int) -> "GridPoint":
        return GridPoint(self.x + dx, self.y + dy)

    def manhattan(self, other: "GridPoint") -> int:
        return abs(self.x - other.x) + abs(self.y - other.y)

    def center_mm(self, pixel_size: float) -> Point2:
        return ((self.x + 0.5) * pixel_size, (self.y + 0.5) * pixel_size)


class Parity(Enum):
    EVEN = "even"
    ODD = "odd"


def vertex_parity(v: GridPoint) -> Parity:
    return Parity.EVEN if (v.x + v.y) % 2 == 0 else Parity.ODD


def _clean_ring(ring: Sequence[Sequence[float]], what: str, layer_index: Optional[int]) -> Tuple[Point2, ...]:
    try:
        points = [(float(p[0]), float(p[1])) for p in ring]
    except (TypeError, IndexError, ValueError):
        raise LayerStackError(f"{what} must be a list of [x, y] pairs", layer_index)
    if len(points) > 1 and points[0] == points[-1]:
        points = points[:-1]
    if len(points) < 3:
        raise LayerStackError(f"{what} needs at least 3 distinct points", layer_index)
    if not all(math.isfinite(c) for p in points for c in p):
        raise LayerStackError(f"{what} has non-finite coordinates", layer_index)
    if not LinearRing(points).is_simple:
        raise LayerStackError(f"{what} is self-intersecting", layer_index)
    return tuple(points)


@dataclass(frozen=True)
class GeneralPolygon:
    """Closed polygon in mm, outer ring counterclockwise, holes clockwise"""

    outer: Tuple[Point2, ...]
    holes: Tuple[Tuple[Point2, ...], ...] = ()

    @classmethod
    def from_rings(cls, outer: Sequence[Sequence[float]], holes: Sequence[Sequence[Sequence[float]]] = (),
                   layer_index: Optional[int] = None) -> "GeneralPolygon":
        outer_ring = _clean_ring(outer, "outer ring", layer_index)
        hole_rings = [_clean_ring(h, f"hole {k}", layer_index) for k, h in enumerate(holes)]
        shape = Polygon(outer_ring, hole_rings)
        if not shape.is_valid:
            raise LayerStackError(f"invalid polygon ({shapely.is_valid_reason(shape)})", layer_index)
        shape = orient(shape, sign=1.0)
        return cls(
            outer=tuple(shape.exterior.coords[:-1]),
            holes=tuple(tuple(ring.coords[:-1]) for ring in shape.interiors),
        )

    def to_shapely(self) -> Polygon:
        return Polygon(self.outer, self.holes)

    @property
    def area(self) -> float:
        return self.to_shapely().area

    def to_json(self) -> Dict:
        return {
            "outer": [list(p) for p in self.outer],
            "holes": [[list(p) for p in ring] for ring in self.holes],
        }


@dataclass(frozen=True)
class Layer:
    z_index: int
    polygons: Tuple[GeneralPolygon, ...]


@dataclass(frozen=True)
class LayerStack:
    pixel_size_mm: float
    layer_height_mm: float
    layers: Tuple[Layer, ...]


def _parse_layer(raw: Dict, position: int) -> Layer:
    if not isinstance(raw, dict):
        raise LayerStackError("layer entry must be an object", position)
    z_index = raw.get("z_index")
    if not isinstance(z_index, int) or isinstance(z_index, bool):
        raise LayerStackError("z_index must be an integer", position)
    raw_polygons = raw.get("polygons")
    if not isinstance(raw_polygons, list):
        raise LayerStackError("polygons must be a list", z_index)
    polygons = []
    for item in raw_polygons:
        if not isinstance(item, dict) or "outer" not in item:
            raise LayerStackError("polygon entry needs an 'outer' ring", z_index)
        holes = item.get("holes", [])
        if not isinstance(item["outer"], list):
            raise LayerStackError("outer ring must be a list of [x, y] pairs", z_index)
        if not isinstance(holes, list):
            raise LayerStackError("holes must be a list of rings", z_index)
        polygons.append(GeneralPolygon.from_rings(item["outer"], holes, layer_index=z_index))
    return Layer(z_index=z_index, polygons=tuple(polygons))


def load_layer_stack(path: Union[str, Path]) -> LayerStack:
    """Read a layer-stack JSON file; layers are returned bottom-up"""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise LayerStackError(f"invalid UTF-8 at byte offset {e.start}", offset=e.start)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[:e.pos].encode("utf-8"))
        raise LayerStackError(f"invalid JSON at byte offset {offset}: {e.msg}", offset=offset)

    if not isinstance(raw, dict):
        raise LayerStackError("top level must be an object")
    pixel_size = raw.get("pixel_size_mm")
    layer_height = raw.get("layer_height_mm")
    for name, value in (("pixel_size_mm", pixel_size), ("layer_height_mm", layer_height)):
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            raise LayerStackError(f"{name} must be a positive number")
    raw_layers = raw.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise LayerStackError("layer stack is empty")

    layers = [_parse_layer(item, k) for k, item in enumerate(raw_layers)]
    layers.sort(key=lambda layer: layer.z_index)
    for below, above in zip(layers, layers[1:]):
        if below.z_index == above.z_index:
            raise LayerStackError("duplicate z_index", above.z_index)

    logger.debug("loaded %d layers from %s", len(layers), path)
    return LayerStack(float(pixel_size), float(layer_height), tuple(layers))


def dump_layer_stack(stack: LayerStack, path: Union[str, Path]) -> None:
    payload = {
        "pixel_size_mm": stack.pixel_size_mm,
        "layer_height_mm": stack.layer_height_mm,
        "layers": [
            {"z_index": layer.z_index, "polygons": [p.to_json() for p in layer.polygons]}
            for layer in stack.layers
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2))


@dataclass(frozen=True, eq=False)
class IopRegion:
    """Integral orthogonal polygon as a bitmap; mask[row, col] is pixel (origin.x + col, origin.y + row)"""

    origin: GridPoint
    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            raise EmptyRasterError("region needs at least one pixel")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    def contains(self, p: GridPoint) -> bool:
        col, row = p.x - self.origin.x, p.y - self.origin.y
        return 0 <= col < self.width and 0 <= row < self.height and bool(self.mask[row, col])

    def pixels(self) -> List[GridPoint]:
        rows, cols = np.nonzero(self.mask)
        points = [GridPoint(int(c) + self.origin.x, int(r) + self.origin.y) for r, c in zip(rows, cols)]
        points.sort()
        return points

    def crop(self) -> "IopRegion":
        rows = np.flatnonzero(self.mask.any(axis=1))
        cols = np.flatnonzero(self.mask.any(axis=0))
        r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        if (r0, c0, r1, c1) == (0, 0, self.height, self.width):
            return self
        return IopRegion(self.origin.offset(int(c0), int(r0)), self.mask[r0:r1, c0:c1])

    @classmethod
    def from_points(cls, points: Iterable[GridPoint]) -> "IopRegion":
        points = list(points)
        if not points:
            raise EmptyRasterError("region needs at least one pixel")
        x0 = min(p.x for p in points)
        y0 = min(p.y for p in points)
        width = max(p.x for p in points) - x0 + 1
        height = max(p.y for p in points) - y0 + 1
        mask = np.zeros((height, width), dtype=bool)
        for p in points:
            mask[p.y - y0, p.x - x0] = True
        return cls(GridPoint(x0, y0), mask)

    def __eq__(self, other):
        if not isinstance(other, IopRegion):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.mask, other.mask)

    __hash__ = None


def rasterize(polygon: GeneralPolygon, pixel_size: float) -> IopRegion:
    """Largest set of grid pixels whose closed squares lie inside the polygon.

    The grid is global: pixel (i, j) covers [i*ps, (i+1)*ps] x [j*ps, (j+1)*ps],
    so identical polygons on different layers rasterize identically.
    """
    if pixel_size <= 0:
        raise ValueError("pixel_size must be positive")
    shape = polygon.to_shapely()
    minx, miny, maxx, maxy = shape.bounds
    ix0, iy0 = math.floor(minx / pixel_size), math.floor(miny / pixel_size)
    ix1, iy1 = math.ceil(maxx / pixel_size), math.ceil(maxy / pixel_size)
    gx, gy = np.meshgrid(np.arange(ix0, ix1), np.arange(iy0, iy1))
    boxes = shapely.box(gx * pixel_size, gy * pixel_size, (gx + 1) * pixel_size, (gy + 1) * pixel_size)
    shapely.prepare(shape)
    mask = shapely.covers(shape, boxes)
    if not mask.any():
        raise EmptyRasterError("polygon is thinner than one pixel everywhere")
    return IopRegion(GridPoint(ix0, iy0), mask).crop()


def connected_components(region: IopRegion) -> List[IopRegion]:
    """Split a region into 4-connected pieces"""
    count, labels = cv2.connectedComponents(region.mask.astype(np.uint8), connectivity=4)
    return [IopRegion(region.origin, labels == label).crop() for label in range(1, count)]


@dataclass(frozen=True)
class DualGraph:
    """4-neighbour grid graph over pixel centres.

    Vertices are sorted lexicographically by (x, y), so edge (i, j) always has i < j.
    """

    vertices: Tuple[GridPoint, ...]
    edges: Tuple[Tuple[int, int], ...]
    weights: Tuple[float, ...]
    s: Optional[int] = None
    t: Optional[int] = None
    _index: Dict[GridPoint, int] = field(init=False, repr=False, compare=False)
    _adjacency: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _edge_ids: Dict[Tuple[int, int], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.edges):
            raise ValueError("one weight per edge required")
        if any(w < 0 for w in self.weights):
            raise ValueError("edge weights must be nonnegative")
        index = {p: k for k, p in enumerate(self.vertices)}
        adjacency: List[List[int]] = [[] for _ in self.vertices]
        edge_ids = {}
        for k, (i, j) in enumerate(self.edges):
            if self.vertices[i].manhattan(self.vertices[j]) != 1:
                raise ValueError("edges must join pixels at rectilinear distance 1")
            adjacency[i].append(j)
            adjacency[j].append(i)
            edge_ids[(i, j)] = k
            edge_ids[(j, i)] = k
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adjacency", tuple(tuple(sorted(a)) for a in adjacency))
        object.__setattr__(self, "_edge_ids", edge_ids)
        if self.s is not None and self.t is not None and self.s == self.t and len(self.vertices) > 1:
            raise ValueError("s and t must differ on graphs with more than one vertex")

    def __len__(self) -> int:
        return len(self.vertices)

    def index_of(self, p: GridPoint) -> int:
        return self._index[p]

    def has_vertex(self, p: GridPoint) -> bool:
        return p in self._index

    def neighbors(self, i: int) -> Tuple[int, ...]:
        return self._adjacency[i]

    def edge_id(self, i: int, j: int) -> Optional[int]:
        return self._edge_ids.get((i, j))

    def weight(self, i: int, j: int) -> float:
        return self.weights[self._edge_ids[(i, j)]]

    def with_terminals(self, s: Union[int, GridPoint], t: Union[int, GridPoint]) -> "DualGraph":
        s_id = s if isinstance(s, int) else self.index_of(s)
        t_id = t if isinstance(t, int) else self.index_of(t)
        return DualGraph(self.vertices, self.edges, self.weights, s_id, t_id)

    def with_weights(self, weights: Sequence[float]) -> "DualGraph":
        return DualGraph(self.vertices, self.edges, tuple(float(w) for w in weights), self.s, self.t)

    def edge_points(self, k: int) -> Tuple[GridPoint, GridPoint]:
        i, j = self.edges[k]
        return self.vertices[i], self.vertices[j]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.vertices)))
        for (i, j), w in zip(self.edges, self.weights):
            g.add_edge(i, j, weight=w)
        return g

    def is_connected(self) -> bool:
        return len(self.vertices) > 0 and nx.is_connected(self.to_networkx())


def build_dual_graph(region: IopRegion) -> DualGraph:
    vertices = region.pixels()
    index = {p: k for k, p in enumerate(vertices)}
    edges = []
    for k, p in enumerate(vertices):
        for q in (p.offset(0, 1), p.offset(1, 0)):
            if q in index:
                edges.append((k, index[q]))
    edges.sort()
    return DualGraph(tuple(vertices), tuple(edges), (1.0,) * len(edges))


def unit_edge(p: GridPoint, q: GridPoint) -> Tuple[GridPoint, GridPoint]:
    """Canonical undirected form of a unit print edge"""
    return (p, q) if p < q else (q, p)


class MoveKind(Enum):
    PRINT = "print"
    IDLE = "idle"


@dataclass(frozen=True)
class Move:
    """Straight extruder move in mm at height z"""

    kind: MoveKind
    start: Point2
    end: Point2
    z: float

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])
