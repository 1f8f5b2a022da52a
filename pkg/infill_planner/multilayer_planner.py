# multilayer_planner.py
import logging
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from boundary_projection import BoundaryExtension, project_to_boundary, trace_moves
from cell_sequencing import join_cells, rectilinear_gap, update_entry_exit
from hamiltonian_solver import (
    PathSolution,
    SolverFailure,
    fallback_runs,
    make_solution,
    solve_cell,
)
from layer_geometry import (
    DualGraph,
    EmptyRasterError,
    GeneralPolygon,
    GridPoint,
    IopRegion,
    LayerStack,
    Move,
    MoveKind,
    connected_components,
    rasterize,
    unit_edge,
)
from quadtree_decomposition import (
    CellSequence,
    Corner,
    assign_entry_exit,
    build_quadtree,
    check_corner_pair,
    enclosing_root,
    order_components,
    transposed_pair,
)

logger = logging.getLogger(__name__)

Edge = Tuple[GridPoint, GridPoint]


class ConfigError(ValueError):
    pass


class OverlapMode(Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"
    NEUTRAL = "neutral"

    @classmethod
    def parse(cls, value) -> "OverlapMode":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for mode in cls:
            if text in (mode.value, mode.name.lower()):
                return mode
        raise ConfigError(f"unknown overlap mode '{value}', expected max, min or neutral")


class WeightSource(Enum):
    UNIFORM = "uniform"
    RANDOM = "random"


@dataclass(frozen=True)
class SolverConfig:
    """All planner knobs. max_area is the joined-cell area bound, delta the leaf area bound."""

    alpha: float = 0.5
    delta: int = 64
    max_area: int = 256
    overlap_mode: OverlapMode = OverlapMode.NEUTRAL
    exact_threshold: int = 12
    relaxed_time_limit: float = 30.0
    full_time_limit: float = 120.0
    alternate_corners: bool = False
    worker_count: int = 1
    overlap_weight_max: float = 0.5
    overlap_weight_min: float = 1.5
    entry_corner: Corner = Corner.SW
    exit_corner: Corner = Corner.SE
    weight_source: WeightSource = WeightSource.UNIFORM
    seed: int = 0
    max_profile_bits: int = 18
    project_boundary: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.delta < 1:
            raise ConfigError("delta must be a positive integer")
        if self.max_area < self.delta:
            raise ConfigError(f"max area {self.max_area} must be at least delta {self.delta}")
        if self.exact_threshold < 0:
            raise ConfigError("exact threshold must be nonnegative")
        if self.relaxed_time_limit <= 0 or self.full_time_limit <= 0:
            raise ConfigError("time limits must be positive")
        if self.worker_count < 1:
            raise ConfigError("worker count must be at least 1")
        if self.overlap_weight_max < 0 or self.overlap_weight_min < 0:
            raise ConfigError("overlap weights must be nonnegative")
        if self.max_profile_bits < 2:
            raise ConfigError("max profile bits must be at least 2")
        if not self.entry_corner.is_adjacent(self.exit_corner):
            raise ConfigError(f"corners {self.entry_corner.name} and {self.exit_corner.name} do not share an edge")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["overlap_mode"] = self.overlap_mode.value
        data["weight_source"] = self.weight_source.value
        data["entry_corner"] = self.entry_corner.name
        data["exit_corner"] = self.exit_corner.name
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverConfig":
        data = dict(data)
        if "overlap_mode" in data:
            data["overlap_mode"] = OverlapMode.parse(data["overlap_mode"])
        if "weight_source" in data:
            try:
                data["weight_source"] = WeightSource(str(data["weight_source"]).lower())
            except ValueError:
                raise ConfigError(f"unknown weight source '{data['weight_source']}'")
        for key in ("entry_corner", "exit_corner"):
            if key in data and not isinstance(data[key], Corner):
                try:
                    data[key] = Corner[str(data[key]).upper()]
                except KeyError:
                    raise ConfigError(f"unknown corner '{data[key]}'")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def corners_for(self, position: int) -> Tuple[Corner, Corner]:
        if self.alternate_corners and position % 2 == 1:
            return transposed_pair(self.entry_corner, self.exit_corner)
        return self.entry_corner, self.exit_corner


@dataclass(frozen=True)
class CellPlan:
    members: Tuple[Tuple[int, int, int], ...]
    s: GridPoint
    t: GridPoint
    runs: Tuple[Tuple[GridPoint, ...], ...]
    solution: Optional[PathSolution] = None
    flagged: bool = False


@dataclass(frozen=True)
class LayerMetrics:
    overlap_ratio: Optional[float]
    turn_ratio: Optional[float]
    idle_length: float
    cell_count: int
    flagged_cells: int


@dataclass(frozen=True)
class LayerPlan:
    layer_index: int
    z: float
    pixel_size: float
    moves: Tuple[Move, ...]
    print_edges: FrozenSet[Edge]
    runs: Tuple[Tuple[GridPoint, ...], ...]
    cells: Tuple[CellPlan, ...]
    metrics: LayerMetrics
    warnings: Tuple[str, ...] = ()
    skipped: bool = False
    boundary: Optional[BoundaryExtension] = None

    @property
    def flagged(self) -> bool:
        return any(cell.flagged for cell in self.cells)


@dataclass(frozen=True)
class StackPlan:
    layers: Tuple[LayerPlan, ...]
    config: SolverConfig
    pixel_size: float = 1.0
    layer_height: float = 0.2
    summary: Dict[str, Any] = field(default_factory=dict)


def apply_overlap_weights(graph: DualGraph, previous_layer_edges: Iterable[Edge], mode: OverlapMode,
                          maximize_weight: float = 0.5, minimize_weight: float = 1.5) -> DualGraph:
    """Reweight edges that coincide with print edges of the layer below; topology and terminals are untouched"""
    if mode is OverlapMode.NEUTRAL:
        return graph
    below = set(previous_layer_edges)
    if not below:
        return graph
    value = maximize_weight if mode is OverlapMode.MAXIMIZE else minimize_weight
    weights = [value if graph.edge_points(k) in below else w for k, w in enumerate(graph.weights)]
    return graph.with_weights(weights)


def random_weights(graph: DualGraph, rng: np.random.Generator) -> DualGraph:
    return graph.with_weights(rng.uniform(0.5, 1.5, size=len(graph.edges)).tolist())


def overlap_ratio(current: LayerPlan, previous: Optional[LayerPlan]) -> Optional[float]:
    """Share of the current print edges that coincide with print edges of another layer"""
    if previous is None or previous.skipped or current.skipped or not current.print_edges:
        return None
    return len(current.print_edges & previous.print_edges) / len(current.print_edges)


def turn_counts(runs: Sequence[Sequence[GridPoint]]) -> Tuple[int, int]:
    turns = straights = 0
    for run in runs:
        for a, b, c in zip(run, run[1:], run[2:]):
            if (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y) == 0:
                turns += 1
            else:
                straights += 1
    return turns, straights


def turn_ratio(plan: LayerPlan) -> Optional[float]:
    turns, straights = turn_counts(plan.runs)
    if turns + straights == 0:
        return None
    return turns / (turns + straights)


def idle_length(moves: Sequence[Move], pixel_size: float) -> float:
    return sum(m.length for m in moves if m.kind is MoveKind.IDLE) / pixel_size


def _translated_key(graph: DualGraph, alpha: float, exact_threshold: int) -> Tuple[Tuple, GridPoint]:
    base = graph.vertices[0]
    shape = tuple((p.x - base.x, p.y - base.y) for p in graph.vertices)
    s, t = graph.vertices[graph.s], graph.vertices[graph.t]
    key = (shape, (s.x - base.x, s.y - base.y), (t.x - base.x, t.y - base.y),
           tuple(graph.weights), alpha, exact_threshold)
    return key, base


class SolutionMemo:
    """Cell solutions keyed by translated shape, terminals, weights and alpha; shared across layers"""

    def __init__(self):
        self._solutions: Dict[Tuple, PathSolution] = {}
        self._lock = threading.Lock()
        self.hits = 0

    def get(self, graph: DualGraph, alpha: float, exact_threshold: int) -> Optional[PathSolution]:
        key, base = _translated_key(graph, alpha, exact_threshold)
        with self._lock:
            found = self._solutions.get(key)
            if found is not None:
                self.hits += 1
        return None if found is None else found.translated(base.x, base.y)

    def put(self, graph: DualGraph, alpha: float, exact_threshold: int, solution: PathSolution) -> None:
        key, base = _translated_key(graph, alpha, exact_threshold)
        with self._lock:
            self._solutions.setdefault(key, solution.translated(-base.x, -base.y))

    def __len__(self) -> int:
        return len(self._solutions)


def _solve_job(job: Tuple[DualGraph, float, SolverConfig]):
    graph, alpha, config = job
    try:
        return solve_cell(graph, alpha, config), None
    except SolverFailure as e:
        return None, (str(e), e.cover)


class CellSolver:
    """Solves a layer's cells through the memo, fanning misses out to worker processes"""

    def __init__(self, config: SolverConfig, memo: Optional[SolutionMemo] = None):
        self.config = config
        self.memo = memo if memo is not None else SolutionMemo()

    def solve_all(self, graphs: Sequence[DualGraph]) -> List[Tuple[Optional[PathSolution], Optional[Tuple]]]:
        cfg = self.config
        results: List[Optional[Tuple]] = [None] * len(graphs)
        pending: Dict[Tuple, List[int]] = {}
        for k, graph in enumerate(graphs):
            cached = self.memo.get(graph, cfg.alpha, cfg.exact_threshold)
            if cached is not None:
                results[k] = (cached, None)
            else:
                pending.setdefault(_translated_key(graph, cfg.alpha, cfg.exact_threshold)[0], []).append(k)

        firsts = [ks[0] for ks in pending.values()]
        jobs = [(graphs[k], cfg.alpha, cfg) for k in firsts]
        if cfg.worker_count > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.worker_count) as pool:
                outcomes = list(pool.map(_solve_job, jobs))
        else:
            outcomes = [_solve_job(job) for job in jobs]

        for first, (solution, failure) in zip(firsts, outcomes):
            if solution is not None:
                self.memo.put(graphs[first], cfg.alpha, cfg.exact_threshold, solution)
            results[first] = (solution, failure)

        for ks in pending.values():
            for k in ks[1:]:
                solution = self.memo.get(graphs[k], cfg.alpha, cfg.exact_threshold)
                results[k] = (solution, None) if solution is not None else results[ks[0]]
        return results


def warm_start_path(graph: DualGraph, previous_edges: FrozenSet[Edge], alpha: float) -> Optional[PathSolution]:
    """The layer-below print edges inside this cell, when they already form its s-t Hamiltonian path"""
    if len(graph) < 2 or not previous_edges:
        return None
    ids = [graph.s]
    seen = {graph.s}
    while len(ids) < len(graph):
        cur = graph.vertices[ids[-1]]
        step = [j for j in graph.neighbors(ids[-1])
                if j not in seen and unit_edge(cur, graph.vertices[j]) in previous_edges]
        if len(step) != 1:
            return None
        ids.append(step[0])
        seen.add(step[0])
    if ids[-1] != graph.t:
        return None
    return make_solution(graph, ids, alpha, "warm_start")


def _skipped_layer(layer_index: int, z: float, pixel_size: float, warnings: List[str]) -> LayerPlan:
    return LayerPlan(
        layer_index=layer_index,
        z=z,
        pixel_size=pixel_size,
        moves=(),
        print_edges=frozenset(),
        runs=(),
        cells=(),
        metrics=LayerMetrics(None, None, 0.0, 0, 0),
        warnings=tuple(warnings),
        skipped=True,
    )


def decompose_layer(polygons: Sequence[GeneralPolygon], pixel_size: float, config: SolverConfig,
                    position: int = 0) -> Tuple[List[IopRegion], Optional[CellSequence], List[str]]:
    """Rasterize, split into components and order all leaves along one Hilbert curve"""
    warnings: List[str] = []
    pixels = set()
    for k, polygon in enumerate(polygons):
        try:
            pixels.update(rasterize(polygon, pixel_size).pixels())
        except EmptyRasterError:
            warnings.append(f"polygon {k} is thinner than one pixel")
    if not pixels:
        return [], None, warnings
    regions = connected_components(IopRegion.from_points(pixels))
    root = enclosing_root(regions)
    entry, exit = config.corners_for(position)
    check_corner_pair(entry, exit)
    trees = [build_quadtree(region, config.delta, root) for region in regions]
    sequences = order_components(trees, entry, exit)
    combined = CellSequence(tuple(item for seq in sequences for item in seq.items), root[0], root[1])
    return regions, assign_entry_exit(combined), warnings


def plan_layer(polygons: Sequence[GeneralPolygon], previous: Optional[LayerPlan], config: SolverConfig,
               layer_index: int = 0, pixel_size: float = 1.0, z: float = 0.0, position: int = 0,
               solver: Optional[CellSolver] = None) -> LayerPlan:
    regions, sequence, warnings = decompose_layer(polygons, pixel_size, config, position)
    for message in warnings:
        logger.warning("layer %d: %s", layer_index, message)
    if sequence is None:
        warnings.append("layer has no printable pixels, skipped")
        logger.warning("layer %d: no printable pixels, skipped", layer_index)
        return _skipped_layer(layer_index, z, pixel_size, warnings)
    logger.info("planning layer %d (%d components, %d cells)", layer_index, len(regions), len(sequence))

    joined = update_entry_exit(join_cells(sequence, config.max_area))
    below = previous if previous is not None and not previous.skipped else None
    rng = np.random.default_rng([config.seed, position])
    graphs = []
    for item in joined.items:
        graph = item.graph
        if config.weight_source is WeightSource.RANDOM:
            graph = random_weights(graph, rng)
        if below is not None:
            graph = apply_overlap_weights(graph, below.print_edges, config.overlap_mode,
                                          config.overlap_weight_max, config.overlap_weight_min)
        graphs.append(graph)

    solver = solver or CellSolver(config)
    warm = [warm_start_path(g, below.print_edges, config.alpha) if below is not None else None for g in graphs]
    reuse = [config.overlap_mode is OverlapMode.MAXIMIZE and w is not None for w in warm]
    solved = solver.solve_all([g for g, r in zip(graphs, reuse) if not r])
    outcomes = iter(solved)

    cells: List[CellPlan] = []
    runs: List[List[GridPoint]] = []
    for item, graph, warm_path, reused in zip(joined.items, graphs, warm, reuse):
        members = tuple((m.cell.origin.x, m.cell.origin.y, m.cell.size) for m in item.members)
        if reused:
            solution, failure = warm_path, None
        else:
            solution, failure = next(outcomes)
            if solution is not None and warm_path is not None and warm_path.objective <= solution.objective:
                solution = warm_path
        if solution is not None:
            cell_runs = [list(solution.vertices)]
            cells.append(CellPlan(members, item.s, item.t, (solution.vertices,), solution))
        else:
            message, cover = failure
            cell_runs = fallback_runs(graph, cover)
            text = f"cell at ({item.s.x}, {item.s.y}) has no hamiltonian path ({message}), printed in {len(cell_runs)} runs"
            warnings.append(text)
            logger.warning("layer %d: %s", layer_index, text)
            cells.append(CellPlan(members, item.s, item.t, tuple(tuple(r) for r in cell_runs), None, True))
        for k, cell_run in enumerate(cell_runs):
            if k == 0 and runs and rectilinear_gap(runs[-1][-1], cell_run[0]) == 1:
                runs[-1].extend(cell_run)
            else:
                runs.append(list(cell_run))

    frozen_runs = tuple(tuple(run) for run in runs)
    print_edges = frozenset(unit_edge(a, b) for run in frozen_runs for a, b in zip(run, run[1:]))
    plan = LayerPlan(
        layer_index=layer_index,
        z=z,
        pixel_size=pixel_size,
        moves=tuple(trace_moves(frozen_runs, pixel_size, z)),
        print_edges=print_edges,
        runs=frozen_runs,
        cells=tuple(cells),
        metrics=LayerMetrics(None, None, 0.0, len(cells), 0),
        warnings=tuple(warnings),
    )
    if config.project_boundary:
        plan = project_to_boundary(plan, polygons)
    return replace(plan, metrics=LayerMetrics(
        overlap_ratio=overlap_ratio(plan, below),
        turn_ratio=turn_ratio(plan),
        idle_length=idle_length(plan.moves, pixel_size),
        cell_count=len(cells),
        flagged_cells=sum(1 for c in cells if c.flagged),
    ))


def summarize(layers: Sequence[LayerPlan]) -> Dict[str, Any]:
    overlaps = [p.metrics.overlap_ratio for p in layers if p.metrics.overlap_ratio is not None]
    turns = [p.metrics.turn_ratio for p in layers if p.metrics.turn_ratio is not None]
    return {
        "layer_count": len(layers),
        "skipped_layers": sum(1 for p in layers if p.skipped),
        "flagged_cells": sum(p.metrics.flagged_cells for p in layers),
        "mean_overlap_ratio": sum(overlaps) / len(overlaps) if overlaps else None,
        "mean_turn_ratio": sum(turns) / len(turns) if turns else None,
        "total_idle_length": sum(p.metrics.idle_length for p in layers),
    }


def plan_stack(stack: LayerStack, config: SolverConfig, memo: Optional[SolutionMemo] = None) -> StackPlan:
    """Plan layers bottom-up; each layer is weighted against the realised print edges of the one below"""
    if not stack.layers:
        raise ConfigError("layer stack is empty")
    solver = CellSolver(config, memo)
    plans: List[LayerPlan] = []
    for position, layer in enumerate(stack.layers):
        previous = plans[-1] if plans else None
        z = (layer.z_index + 1) * stack.layer_height_mm
        plans.append(plan_layer(layer.polygons, previous, config, layer.z_index, stack.pixel_size_mm, z,
                                position, solver))
    summary = summarize(plans)
    logger.info("planned %d layers, %d flagged cells, memo size %d", len(plans), summary["flagged_cells"],
                len(solver.memo))
    return StackPlan(tuple(plans), config, stack.pixel_size_mm, stack.layer_height_mm, summary)
