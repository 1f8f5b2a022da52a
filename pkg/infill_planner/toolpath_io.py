# toolpath_io.py
import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from boundary_projection import BoundaryExtension, Projection
from cell_sequencing import join_cells, update_entry_exit
from hamiltonian_solver import PathSolution
from layer_geometry import GridPoint, Move, MoveKind, Point2
from multilayer_planner import CellPlan, ConfigError, LayerMetrics, LayerPlan, SolverConfig, StackPlan
from quadtree_decomposition import CellSequence, hilbert_polyline

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHAIN_TOLERANCE = 1e-9
PathLike = Union[str, Path]


class ToolpathFormatError(ValueError):
    """Toolpath file is malformed or has an unsupported schema"""


class GcodeChainError(RuntimeError):
    """Moves of a layer do not form one chained sequence"""


# ---------------------------------------------------------------------------
# toolpath JSON
# ---------------------------------------------------------------------------

def _pt(p: GridPoint) -> List[int]:
    return [p.x, p.y]


def _grid(raw) -> GridPoint:
    return GridPoint(int(raw[0]), int(raw[1]))


def _edge(edge) -> List[List[int]]:
    return [_pt(edge[0]), _pt(edge[1])]


def _edge_from(raw) -> Tuple[GridPoint, GridPoint]:
    return (_grid(raw[0]), _grid(raw[1]))


def _xy(raw) -> Point2:
    return (float(raw[0]), float(raw[1]))


def _solution_to_dict(solution: Optional[PathSolution]) -> Optional[Dict[str, Any]]:
    if solution is None:
        return None
    data = asdict(solution)
    data["vertices"] = [_pt(p) for p in solution.vertices]
    return data


def _solution_from_dict(data: Optional[Dict[str, Any]]) -> Optional[PathSolution]:
    if data is None:
        return None
    data = dict(data)
    data["vertices"] = tuple(_grid(p) for p in data["vertices"])
    return PathSolution(**data)


def _cell_to_dict(cell: CellPlan) -> Dict[str, Any]:
    return {
        "members": [list(m) for m in cell.members],
        "s": _pt(cell.s),
        "t": _pt(cell.t),
        "runs": [[_pt(p) for p in run] for run in cell.runs],
        "solution": _solution_to_dict(cell.solution),
        "flagged": cell.flagged,
    }


def _cell_from_dict(data: Dict[str, Any]) -> CellPlan:
    return CellPlan(
        members=tuple((int(x), int(y), int(size)) for x, y, size in data["members"]),
        s=_grid(data["s"]),
        t=_grid(data["t"]),
        runs=tuple(tuple(_grid(p) for p in run) for run in data["runs"]),
        solution=_solution_from_dict(data["solution"]),
        flagged=bool(data["flagged"]),
    )


def _boundary_to_dict(ext: Optional[BoundaryExtension]) -> Optional[Dict[str, Any]]:
    if ext is None:
        return None
    return {
        "projections": [
            {
                "source": _pt(p.source),
                "target": list(p.target),
                "direction": list(p.direction),
                "via_edge": None if p.via_edge is None else _edge(p.via_edge),
            }
            for p in ext.projections
        ],
        "detoured_edges": sorted(_edge(e) for e in ext.detoured_edges),
        "converted_idle_edges": sorted(_edge(e) for e in ext.converted_idle_edges),
    }


def _boundary_from_dict(data: Optional[Dict[str, Any]]) -> Optional[BoundaryExtension]:
    if data is None:
        return None
    return BoundaryExtension(
        projections=tuple(
            Projection(
                source=_grid(p["source"]),
                target=_xy(p["target"]),
                direction=(int(p["direction"][0]), int(p["direction"][1])),
                via_edge=None if p["via_edge"] is None else _edge_from(p["via_edge"]),
            )
            for p in data["projections"]
        ),
        detoured_edges=frozenset(_edge_from(e) for e in data["detoured_edges"]),
        converted_idle_edges=frozenset(_edge_from(e) for e in data["converted_idle_edges"]),
    )


def _move_to_dict(move: Move) -> Dict[str, Any]:
    return {"kind": move.kind.value, "from": list(move.start), "to": list(move.end), "z": move.z}


def _move_from_dict(data: Dict[str, Any]) -> Move:
    return Move(MoveKind(data["kind"]), _xy(data["from"]), _xy(data["to"]), float(data["z"]))


def layer_to_dict(plan: LayerPlan) -> Dict[str, Any]:
    return {
        "layer_index": plan.layer_index,
        "z": plan.z,
        "pixel_size": plan.pixel_size,
        "skipped": plan.skipped,
        "warnings": list(plan.warnings),
        "metrics": asdict(plan.metrics),
        "moves": [_move_to_dict(m) for m in plan.moves],
        "print_edges": sorted(_edge(e) for e in plan.print_edges),
        "runs": [[_pt(p) for p in run] for run in plan.runs],
        "cells": [_cell_to_dict(c) for c in plan.cells],
        "boundary": _boundary_to_dict(plan.boundary),
    }


def layer_from_dict(data: Dict[str, Any]) -> LayerPlan:
    return LayerPlan(
        layer_index=int(data["layer_index"]),
        z=float(data["z"]),
        pixel_size=float(data["pixel_size"]),
        moves=tuple(_move_from_dict(m) for m in data["moves"]),
        print_edges=frozenset(_edge_from(e) for e in data["print_edges"]),
        runs=tuple(tuple(_grid(p) for p in run) for run in data["runs"]),
        cells=tuple(_cell_from_dict(c) for c in data["cells"]),
        metrics=LayerMetrics(**data["metrics"]),
        warnings=tuple(data["warnings"]),
        skipped=bool(data["skipped"]),
        boundary=_boundary_from_dict(data["boundary"]),
    )


def plan_to_dict(plan: StackPlan) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "pixel_size": plan.pixel_size,
        "layer_height": plan.layer_height,
        "config": plan.config.to_dict(),
        "summary": plan.summary,
        "layers": [layer_to_dict(layer) for layer in plan.layers],
    }


def plan_from_dict(data: Dict[str, Any]) -> StackPlan:
    if not isinstance(data, dict):
        raise ToolpathFormatError("toolpath document must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ToolpathFormatError(f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}")
    try:
        return StackPlan(
            layers=tuple(layer_from_dict(layer) for layer in data["layers"]),
            config=SolverConfig.from_dict(data["config"]),
            pixel_size=float(data["pixel_size"]),
            layer_height=float(data["layer_height"]),
            summary=dict(data["summary"]),
        )
    except ConfigError as e:
        raise ToolpathFormatError(f"bad config block: {e}")
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ToolpathFormatError(f"malformed toolpath document: {e!r}")


def emit_toolpath_json(plan: StackPlan, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(plan_to_dict(plan), f, indent=1)
        f.write("\n")
    logger.info("wrote %d layers to %s", len(plan.layers), path)


def load_toolpath_json(path: PathLike) -> StackPlan:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ToolpathFormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    except UnicodeDecodeError as e:
        raise ToolpathFormatError(f"{path}: invalid UTF-8 at byte offset {e.start}")
    return plan_from_dict(data)


# ---------------------------------------------------------------------------
# G-code
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GcodeParams:
    """Marlin-style print settings; feedrates in mm/s, lengths in mm, temperatures in C.

    layer_height None means "use the plan's layer height".
    """

    extrusion_multiplier_at_turns: float = 1.10
    turn_span_mm: float = 1.0
    print_feedrate: float = 40.0
    travel_feedrate: float = 120.0
    z_feedrate: float = 10.0
    extrusion_width: float = 0.4
    layer_height: Optional[float] = None
    filament_diameter: float = 1.75
    hotend_temp: int = 200
    bed_temp: int = 60
    z_hop: float = 0.0

    def __post_init__(self):
        if self.extrusion_multiplier_at_turns < 1.0:
            raise ConfigError("extrusion multiplier at turns must be at least 1")
        if self.turn_span_mm < 0:
            raise ConfigError("turn span must be nonnegative")
        for name in ("print_feedrate", "travel_feedrate", "z_feedrate", "extrusion_width", "filament_diameter"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.layer_height is not None and self.layer_height <= 0:
            raise ConfigError("layer height must be positive")
        if self.z_hop < 0:
            raise ConfigError("z hop must be nonnegative")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GcodeParams":
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown gcode keys: {', '.join(sorted(unknown))}")
        values = {}
        for key, raw in data.items():
            if raw is None or raw == "":
                values[key] = None if key == "layer_height" else known[key].default
                continue
            try:
                values[key] = int(raw) if key in ("hotend_temp", "bed_temp") else float(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number, got {raw!r}")
        return cls(**values)


@dataclass(frozen=True)
class GcodeReport:
    layer_count: int
    line_count: int
    print_length: float
    idle_length: float
    boosted_length: float
    total_volume: float
    total_filament: float


def _close(a: Point2, b: Point2) -> bool:
    return abs(a[0] - b[0]) <= CHAIN_TOLERANCE and abs(a[1] - b[1]) <= CHAIN_TOLERANCE


def check_chain(plan: LayerPlan) -> None:
    for k, move in enumerate(plan.moves):
        if move.kind is MoveKind.PRINT and move.length <= CHAIN_TOLERANCE:
            raise GcodeChainError(f"layer {plan.layer_index}: print move {k} has zero length")
        if k and not _close(plan.moves[k - 1].end, move.start):
            raise GcodeChainError(f"layer {plan.layer_index}: move {k} does not start where move {k - 1} ends")


def _strokes(moves: Sequence[Move]) -> List[List[int]]:
    """Indices of maximal chains of consecutive print moves"""
    strokes: List[List[int]] = []
    current: List[int] = []
    for k, move in enumerate(moves):
        if move.kind is MoveKind.PRINT:
            current.append(k)
        elif current:
            strokes.append(current)
            current = []
    if current:
        strokes.append(current)
    return strokes


def _is_right_angle(a: Move, b: Move) -> bool:
    ux, uy = a.end[0] - a.start[0], a.end[1] - a.start[1]
    vx, vy = b.end[0] - b.start[0], b.end[1] - b.start[1]
    return abs(ux * vx + uy * vy) <= 1e-6 * a.length * b.length


def boosted_intervals(stroke: Sequence[Move], span: float) -> List[Tuple[float, float]]:
    """Arc-length intervals of a stroke lying within span of a 90 degree turn, merged"""
    marks = [0.0]
    for move in stroke:
        marks.append(marks[-1] + move.length)
    total = marks[-1]
    raw = [(max(0.0, marks[k + 1] - span), min(total, marks[k + 1] + span))
           for k in range(len(stroke) - 1) if _is_right_angle(stroke[k], stroke[k + 1])]
    merged: List[Tuple[float, float]] = []
    for lo, hi in sorted(raw):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def _pieces(start: float, end: float, intervals: Sequence[Tuple[float, float]]) -> List[Tuple[float, float, bool]]:
    cuts = {start, end}
    for lo, hi in intervals:
        for c in (lo, hi):
            if start < c < end:
                cuts.add(c)
    ordered = sorted(cuts)
    pieces = []
    for a, b in zip(ordered, ordered[1:]):
        mid = (a + b) / 2
        pieces.append((a, b, any(lo <= mid <= hi for lo, hi in intervals)))
    return pieces


def _lerp(move: Move, fraction: float) -> Point2:
    if fraction >= 1.0:
        return move.end
    return (move.start[0] + (move.end[0] - move.start[0]) * fraction,
            move.start[1] + (move.end[1] - move.start[1]) * fraction)


def render_gcode(plan: StackPlan, params: GcodeParams) -> Tuple[str, GcodeReport]:
    if not plan.layers:
        raise ToolpathFormatError("cannot emit G-code for a plan with no layers")
    for layer in plan.layers:
        check_chain(layer)

    height = params.layer_height if params.layer_height is not None else plan.layer_height
    bead = params.extrusion_width * height
    filament_area = math.pi * (params.filament_diameter / 2) ** 2
    print_f = params.print_feedrate * 60.0
    travel_f = params.travel_feedrate * 60.0
    z_f = params.z_feedrate * 60.0

    lines = [
        ";FLAVOR:Marlin",
        f";Layer height: {height:.3f}",
        f";Extrusion width: {params.extrusion_width:.3f}",
        f";LAYER_COUNT:{len(plan.layers)}",
        f"M140 S{params.bed_temp:d} ;bed temp",
        f"M104 S{params.hotend_temp:d} ;hotend temp",
        "G92 E0",
    ]
    print_length = idle_length = boosted = volume = filament = 0.0
    z_now: Optional[float] = None

    for layer in plan.layers:
        if layer.skipped or not layer.moves:
            lines.append(f";LAYER:{layer.layer_index} skipped")
            continue
        lines.append(f";LAYER:{layer.layer_index}")
        lines.append("G92 E0")
        first = layer.moves[0].start
        if z_now is not None and params.z_hop > 0:
            lines.append(f"G1 Z{z_now + params.z_hop:.3f} F{z_f:g}")
        lines.append(f"G0 X{first[0]:.3f} Y{first[1]:.3f} F{travel_f:g}")
        lines.append(f"G1 Z{layer.z:.3f} F{z_f:g}")
        z_now = layer.z

        boost_of: Dict[int, Tuple[float, List[Tuple[float, float]]]] = {}
        for stroke in _strokes(layer.moves):
            intervals = boosted_intervals([layer.moves[k] for k in stroke], params.turn_span_mm)
            offset = 0.0
            for k in stroke:
                boost_of[k] = (offset, intervals)
                offset += layer.moves[k].length

        e = 0.0
        for k, move in enumerate(layer.moves):
            if move.kind is MoveKind.IDLE:
                idle_length += move.length
                lines.append(f"G0 X{move.end[0]:.3f} Y{move.end[1]:.3f} F{travel_f:g}")
                continue
            offset, intervals = boost_of[k]
            length = move.length
            print_length += length
            for a, b, flagged in _pieces(offset, offset + length, intervals):
                piece = b - a
                factor = params.extrusion_multiplier_at_turns if flagged else 1.0
                if flagged:
                    boosted += piece
                piece_volume = piece * bead * factor
                volume += piece_volume
                filament += piece_volume / filament_area
                e += piece_volume / filament_area
                x, y = _lerp(move, (b - offset) / length)
                lines.append(f"G1 X{x:.3f} Y{y:.3f} E{e:.5f} F{print_f:g}")

    lines.append("M104 S0")
    lines.append("M140 S0")
    report = GcodeReport(
        layer_count=len(plan.layers),
        line_count=len(lines),
        print_length=print_length,
        idle_length=idle_length,
        boosted_length=boosted,
        total_volume=volume,
        total_filament=filament,
    )
    return "\n".join(lines) + "\n", report


def emit_gcode(plan: StackPlan, params: GcodeParams, path: PathLike) -> GcodeReport:
    text, report = render_gcode(plan, params)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info("wrote %d gcode lines to %s (%.3f mm filament)", report.line_count, path, report.total_filament)
    return report


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

PRINT_COLOUR = "#e0301e"
IDLE_COLOUR = "#f49ac1"
ENTRY_COLOUR = "#2ca02c"
EXIT_COLOUR = "#1f5fd6"
CELL_COLOUR = "#9a9a9a"
CELL_FILL = "#e6e6e6"


@dataclass(frozen=True)
class SvgOptions:
    scale: float = 20.0
    margin_mm: float = 1.0
    show_cells: bool = True
    show_idle: bool = True
    show_terminals: bool = True


class _Canvas:
    """Maps mm (y up) to SVG user units (y down) over a fixed bounding box"""

    def __init__(self, points: Iterable[Point2], options: SvgOptions):
        pts = list(points)
        self.scale = options.scale
        m = options.margin_mm
        if pts:
            self.x0 = min(p[0] for p in pts) - m
            self.y1 = max(p[1] for p in pts) + m
            self.width = (max(p[0] for p in pts) + m - self.x0) * self.scale
            self.height = (self.y1 - (min(p[1] for p in pts) - m)) * self.scale
        else:
            self.x0, self.y1 = 0.0, 0.0
            self.width = self.height = 2 * m * self.scale
        self.body: List[str] = []

    def xy(self, p: Point2) -> str:
        return f"{(p[0] - self.x0) * self.scale:.3f},{(self.y1 - p[1]) * self.scale:.3f}"

    def polyline(self, points: Sequence[Point2], colour: str, width: float, dashed: bool = False) -> None:
        dash = f' stroke-dasharray="{width:.3f},{2 * width:.3f}"' if dashed else ""
        self.body.append(
            f'<polyline points="{" ".join(self.xy(p) for p in points)}" fill="none" '
            f'stroke="{colour}" stroke-width="{width:.3f}"{dash}/>'
        )

    def rect(self, x: float, y: float, size: float, stroke: str, fill: str, width: float) -> None:
        left, top = self.xy((x, y + size)).split(",")
        side = size * self.scale
        self.body.append(
            f'<rect x="{left}" y="{top}" width="{side:.3f}" height="{side:.3f}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{width:.3f}"/>'
        )

    def dot(self, p: Point2, colour: str, radius: float) -> None:
        cx, cy = self.xy(p).split(",")
        self.body.append(f'<circle cx="{cx}" cy="{cy}" r="{radius:.3f}" fill="{colour}"/>')

    def document(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width:.3f}" height="{self.height:.3f}" '
            f'viewBox="0 0 {self.width:.3f} {self.height:.3f}">\n'
            f'<rect x="0" y="0" width="{self.width:.3f}" height="{self.height:.3f}" fill="white"/>\n'
        )
        return head + "".join(line + "\n" for line in self.body) + "</svg>\n"


def _cell_squares(members: Iterable[Tuple[int, int, int]], pixel_size: float) -> List[Tuple[Point2, Point2]]:
    return [((x * pixel_size, y * pixel_size), ((x + size) * pixel_size, (y + size) * pixel_size))
            for x, y, size in members]


def _chains(moves: Sequence[Move], kind: MoveKind) -> List[List[Point2]]:
    chains: List[List[Point2]] = []
    for move in moves:
        if move.kind is not kind:
            continue
        if chains and _close(chains[-1][-1], move.start):
            chains[-1].append(move.end)
        else:
            chains.append([move.start, move.end])
    return chains


def render_svg(plan: LayerPlan, options: Optional[SvgOptions] = None) -> str:
    """Layer toolpath: print red, idle dotted pink, cell outlines grey, entry green, exit blue"""
    options = options or SvgOptions()
    ps = plan.pixel_size
    squares = [sq for cell in plan.cells for sq in _cell_squares(cell.members, ps)] if options.show_cells else []
    points = [p for m in plan.moves for p in (m.start, m.end)] + [p for sq in squares for p in sq]
    canvas = _Canvas(points, options)
    line = 0.25 * ps * options.scale

    for (x0, y0), (x1, _) in squares:
        canvas.rect(x0, y0, x1 - x0, CELL_COLOUR, "none", 0.3 * line)
    for chain in _chains(plan.moves, MoveKind.PRINT):
        canvas.polyline(chain, PRINT_COLOUR, line)
    if options.show_idle:
        for chain in _chains(plan.moves, MoveKind.IDLE):
            canvas.polyline(chain, IDLE_COLOUR, 0.6 * line, dashed=True)
    if options.show_terminals:
        for cell in plan.cells:
            canvas.dot(cell.s.center_mm(ps), ENTRY_COLOUR, 1.2 * line)
            canvas.dot(cell.t.center_mm(ps), EXIT_COLOUR, 1.2 * line)
    return canvas.document()


def emit_svg(plan: LayerPlan, path: PathLike, options: Optional[SvgOptions] = None) -> str:
    text = render_svg(plan, options)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return text


def render_decomposition_svg(sequence: Optional[CellSequence], pixel_size: float,
                             options: Optional[SvgOptions] = None) -> str:
    """Quadtree leaves in grey, the Hilbert polyline through their centres in pink, entry/exit pixels in black"""
    options = options or SvgOptions()
    items = sequence.items if sequence is not None else ()
    squares = _cell_squares(((i.cell.origin.x, i.cell.origin.y, i.cell.size) for i in items), pixel_size)
    canvas = _Canvas([p for sq in squares for p in sq], options)
    line = 0.25 * pixel_size * options.scale

    for (x0, y0), (x1, _) in squares:
        canvas.rect(x0, y0, x1 - x0, CELL_COLOUR, CELL_FILL, 0.3 * line)
    if sequence is not None and len(items) > 1:
        centres = [(x * pixel_size, y * pixel_size) for x, y in hilbert_polyline(sequence)]
        canvas.polyline(centres, IDLE_COLOUR, line)
    for item in items:
        for p in (item.s, item.t):
            if p is not None:
                canvas.dot(p.center_mm(pixel_size), "#000000", 0.8 * line)
    return canvas.document()


def emit_decomposition_svg(sequence: Optional[CellSequence], pixel_size: float, path: PathLike,
                           options: Optional[SvgOptions] = None) -> str:
    text = render_decomposition_svg(sequence, pixel_size, options)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return text


# ---------------------------------------------------------------------------
# metrics CSV
# ---------------------------------------------------------------------------

METRICS_COLUMNS = (
    "layer_index", "z", "overlap_ratio", "turn_ratio", "idle_length_units", "cell_count", "flagged_cells", "skipped",
)


def metrics_rows(plan: StackPlan) -> List[Dict[str, Any]]:
    return [
        {
            "layer_index": layer.layer_index,
            "z": layer.z,
            "overlap_ratio": layer.metrics.overlap_ratio,
            "turn_ratio": layer.metrics.turn_ratio,
            "idle_length_units": layer.metrics.idle_length,
            "cell_count": layer.metrics.cell_count,
            "flagged_cells": layer.metrics.flagged_cells,
            "skipped": int(layer.skipped),
        }
        for layer in plan.layers
    ]


def render_metrics_csv(plan: StackPlan) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=METRICS_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in metrics_rows(plan):
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buffer.getvalue()


def emit_metrics_csv(plan: StackPlan, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(render_metrics_csv(plan))


# ---------------------------------------------------------------------------
# decomposition summary
# ---------------------------------------------------------------------------

def decomposition_to_dict(sequence: Optional[CellSequence], pixel_size: float,
                          max_area: Optional[int] = None) -> Dict[str, Any]:
    """Leaves in Hilbert order with their entry/exit pixels, plus the joined subproblems when max_area is given"""
    if sequence is None:
        return {"pixel_size": pixel_size, "root": None, "cells": [], "subproblems": []}
    cells = [
        {
            "x": item.cell.origin.x,
            "y": item.cell.origin.y,
            "size": item.cell.size,
            "depth": item.cell.depth,
            "hilbert_key": item.hilbert_key,
            "entry_corner": item.entry_corner.name,
            "exit_corner": item.exit_corner.name,
            "s": None if item.s is None else _pt(item.s),
            "t": None if item.t is None else _pt(item.t),
        }
        for item in sequence.items
    ]
    data: Dict[str, Any] = {
        "pixel_size": pixel_size,
        "root": {"x": sequence.root_origin.x, "y": sequence.root_origin.y, "exponent": sequence.root_exponent},
        "cells": cells,
    }
    if max_area is not None:
        position = {item.cell.origin: k for k, item in enumerate(sequence.items)}
        joined = update_entry_exit(join_cells(sequence, max_area))
        data["subproblems"] = [
            {"members": [position[m.cell.origin] for m in item.members], "area": item.area,
             "s": _pt(item.s), "t": _pt(item.t)}
            for item in joined.items
        ]
        data["idle_units"] = joined.idle_units()
        data["idle_length"] = joined.idle_length()
    return data
