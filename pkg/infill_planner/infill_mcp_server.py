# infill_mcp_server.py
import asyncio
import sys
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from mcp.server.fastmcp import FastMCP

import numpy as np

from cell_sequencing import SequencingError
from hamiltonian_solver import NoHamiltonianPath, SolverFailure, exact_oracle, feasible_rectangular
from layer_geometry import GridPoint, IopRegion, LayerStackError, build_dual_graph, load_layer_stack
from multilayer_planner import ConfigError, plan_stack
from multilayer_planner import decompose_layer as plan_decompose_layer
from planner_settings import configure_logging, resolve_settings
from quadtree_decomposition import DecompositionError
from toolpath_io import (
    ToolpathFormatError,
    decomposition_to_dict,
    emit_metrics_csv,
    emit_toolpath_json,
    load_toolpath_json,
    metrics_rows,
    render_decomposition_svg,
)

load_dotenv()

ORACLE_VERTEX_LIMIT = 16

mcp_app = FastMCP(
    name="InfillPlannerService",
    version="0.1.0",
    description="MCP server planning space-filling-curve infill toolpaths for layered prints"
)


def _overrides(**values) -> Dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def decompose_layer_logic(stack_path: str, z_index: Optional[int] = None, delta: Optional[int] = None,
                          max_area: Optional[int] = None, include_svg: bool = False) -> Dict[str, Any]:
    """Quadtree cells of one layer in Hilbert order, with the joined subproblems"""
    try:
        config, _ = resolve_settings(overrides=_overrides(delta=delta, max_area=max_area))
        stack = load_layer_stack(stack_path)
        position, layer = 0, stack.layers[0]
        if z_index is not None:
            found = [(k, l) for k, l in enumerate(stack.layers) if l.z_index == z_index]
            if not found:
                return {"error": f"no layer with z_index {z_index}", "overall_status": "Layer not found"}
            position, layer = found[0]
        _, sequence, warnings = plan_decompose_layer(layer.polygons, stack.pixel_size_mm, config, position)
        result = decomposition_to_dict(sequence, stack.pixel_size_mm, config.max_area)
    except FileNotFoundError:
        return {"error": f"layer stack not found: {stack_path}", "overall_status": "Input file missing"}
    except (LayerStackError, ConfigError) as e:
        return {"error": str(e), "overall_status": "Invalid input"}
    except (DecompositionError, SequencingError) as e:
        return {"error": str(e), "overall_status": "Decomposition failed"}

    result["z_index"] = layer.z_index
    result["warnings"] = warnings
    if include_svg:
        result["svg"] = render_decomposition_svg(sequence, stack.pixel_size_mm)
    if sequence is None:
        result["overall_status"] = "SUCCESS: layer has no printable pixels"
    else:
        result["overall_status"] = f"SUCCESS: {len(result['cells'])} cells in {len(result['subproblems'])} subproblems"
    return result


def plan_layer_stack_logic(stack_path: str, output_path: str, metrics_path: Optional[str] = None,
                           overlap_mode: Optional[str] = None, alpha: Optional[float] = None,
                           delta: Optional[int] = None, max_area: Optional[int] = None,
                           alternate_corners: Optional[bool] = None) -> Dict[str, Any]:
    """Plan a whole stack and write the toolpath JSON (and optionally the metrics CSV)"""
    try:
        config, _ = resolve_settings(overrides=_overrides(
            overlap_mode=overlap_mode, alpha=alpha, delta=delta, max_area=max_area,
            alternate_corners=alternate_corners))
        stack = load_layer_stack(stack_path)
        plan = plan_stack(stack, config)
        emit_toolpath_json(plan, output_path)
        if metrics_path:
            emit_metrics_csv(plan, metrics_path)
    except FileNotFoundError:
        return {"error": f"layer stack not found: {stack_path}", "overall_status": "Input file missing"}
    except (LayerStackError, ConfigError) as e:
        return {"error": str(e), "overall_status": "Invalid input"}
    except (DecompositionError, SequencingError, SolverFailure) as e:
        return {"error": str(e), "overall_status": "Planning failed"}
    except OSError as e:
        return {"error": f"could not write output: {e}", "overall_status": "Output failed"}

    result = {
        "stack_path": stack_path,
        "plan_path": output_path,
        "metrics_path": metrics_path,
        "config": config.to_dict(),
        "summary": plan.summary,
        "warnings": [w for layer in plan.layers for w in layer.warnings],
    }
    if plan.summary["flagged_cells"]:
        result["overall_status"] = f"Planned with {plan.summary['flagged_cells']} flagged cells"
    else:
        result["overall_status"] = f"SUCCESS: planned {plan.summary['layer_count']} layers"
    return result


def layer_metrics_logic(plan_path: str) -> Dict[str, Any]:
    try:
        plan = load_toolpath_json(plan_path)
    except FileNotFoundError:
        return {"error": f"plan not found: {plan_path}", "overall_status": "Input file missing"}
    except ToolpathFormatError as e:
        return {"error": str(e), "overall_status": "Invalid plan file"}
    return {
        "plan_path": plan_path,
        "layers": metrics_rows(plan),
        "summary": plan.summary,
        "overall_status": f"SUCCESS: metrics for {len(plan.layers)} layers",
    }


def check_cell_feasibility_logic(width: int, height: int, s_x: int, s_y: int, t_x: int, t_y: int,
                                 alpha: float = 0.0) -> Dict[str, Any]:
    """Hamiltonian s-t path existence on a width x height rectangle, coordinates from 1"""
    if width < 1 or height < 1:
        return {"error": "width and height must be positive", "overall_status": "Invalid input"}
    points = [(s_x, s_y), (t_x, t_y)]
    if any(not (1 <= x <= width and 1 <= y <= height) for x, y in points):
        return {"error": "s and t must lie inside the rectangle", "overall_status": "Invalid input"}
    if (s_x, s_y) == (t_x, t_y) and width * height > 1:
        return {"error": "s and t must differ", "overall_status": "Invalid input"}
    if not 0.0 <= alpha <= 1.0:
        return {"error": "alpha must lie in [0, 1]", "overall_status": "Invalid input"}

    s, t = GridPoint(s_x, s_y), GridPoint(t_x, t_y)
    result: Dict[str, Any] = {
        "width": width,
        "height": height,
        "s": [s_x, s_y],
        "t": [t_x, t_y],
        "feasible": feasible_rectangular(width, height, s, t),
    }
    if width * height <= ORACLE_VERTEX_LIMIT:
        region = IopRegion(GridPoint(1, 1), np.ones((height, width), dtype=bool))
        graph = build_dual_graph(region).with_terminals(s, t)
        try:
            best = exact_oracle(graph, alpha)
            result["optimal_path"] = [[p.x, p.y] for p in best.vertices]
            result["turn_count"] = best.turn_count
            result["objective"] = best.objective
        except NoHamiltonianPath:
            result["optimal_path"] = None
        result["verified"] = (result["optimal_path"] is not None) == result["feasible"]

    verdict = "has" if result["feasible"] else "has no"
    result["overall_status"] = f"SUCCESS: {width}x{height} grid {verdict} hamiltonian path from s to t"
    return result


@mcp_app.tool()
async def decompose_layer(
    stack_path: str,
    z_index: Optional[int] = None,
    delta: Optional[int] = None,
    max_area: Optional[int] = None,
    include_svg: bool = False
) -> Dict[str, Any]:
    """
    Quadtree decomposition and Hilbert ordering of one layer of a layer-stack JSON file
    """
    loop = asyncio.get_event_loop()
    return await loop.run_in_executor(None, decompose_layer_logic, stack_path, z_index, delta, max_area, include_svg)


@mcp_app.tool()
async def plan_layer_stack(
    stack_path: str,
    output_path: str,
    metrics_path: Optional[str] = None,
    overlap_mode: Optional[str] = None,
    alpha: Optional[float] = None,
    delta: Optional[int] = None,
    max_area: Optional[int] = None,
    alternate_corners: Optional[bool] = None
) -> Dict[str, Any]:
    """
    Plan infill toolpaths for every layer and write the plan JSON
    """
    loop = asyncio.get_event_loop()
    return await loop.run_in_executor(None, plan_layer_stack_logic, stack_path, output_path, metrics_path,
                                      overlap_mode, alpha, delta, max_area, alternate_corners)


@mcp_app.tool()
async def layer_metrics(
    plan_path: str
) -> Dict[str, Any]:
    """
    Per-layer overlap ratio, turn ratio and idle length of a saved plan
    """
    loop = asyncio.get_event_loop()
    return await loop.run_in_executor(None, layer_metrics_logic, plan_path)


@mcp_app.tool()
async def check_cell_feasibility(
    width: int,
    height: int,
    s_x: int,
    s_y: int,
    t_x: int,
    t_y: int,
    alpha: float = 0.0
) -> Dict[str, Any]:
    """
    Whether a rectangular cell admits a Hamiltonian path between two pixels (coordinates from 1)
    """
    loop = asyncio.get_event_loop()
    return await loop.run_in_executor(None, check_cell_feasibility_logic, width, height, s_x, s_y, t_x, t_y, alpha)


if __name__ == "__main__":
    configure_logging()
    print("mcp server starting", file=sys.stderr)
    mcp_app.run(transport='stdio')
