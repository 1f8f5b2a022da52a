# planner_cli.py
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from cell_sequencing import SequencingError
from hamiltonian_solver import SolverFailure
from layer_geometry import LayerStack, LayerStackError, load_layer_stack
from multilayer_planner import ConfigError, StackPlan, decompose_layer, plan_layer, plan_stack, summarize
from planner_settings import configure_logging, resolve_settings
from quadtree_decomposition import DecompositionError
from toolpath_io import (
    GcodeChainError,
    ToolpathFormatError,
    decomposition_to_dict,
    emit_decomposition_svg,
    emit_gcode,
    emit_metrics_csv,
    emit_svg,
    emit_toolpath_json,
    load_toolpath_json,
    plan_to_dict,
    render_decomposition_svg,
    render_metrics_csv,
    render_svg,
)

logger = logging.getLogger("planner_cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PLANNING = 2


class PlannerArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this CLI reserves 2 for planning failures"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    group = flags.add_argument_group("planner settings")
    group.add_argument("--config", help="key=value settings file")
    group.add_argument("--alpha", type=float, help="edge cost vs turn cost mix in [0, 1]")
    group.add_argument("--delta", type=int, help="max quadtree leaf area")
    group.add_argument("--max-area", type=int, dest="max_area", help="max joined subproblem area")
    group.add_argument("--overlap-mode", choices=["max", "min", "neutral"], dest="overlap_mode")
    group.add_argument("--workers", type=int, dest="worker_count")
    group.add_argument("--time-limit", type=float, dest="relaxed_time_limit",
                       help="seconds for the relaxed model per cell")
    group.add_argument("--full-time-limit", type=float, dest="full_time_limit")
    group.add_argument("--exact-threshold", type=int, dest="exact_threshold")
    group.add_argument("--alternate-corners", action="store_true", default=None, dest="alternate_corners")
    group.add_argument("--entry-corner", choices=["sw", "se", "ne", "nw"], dest="entry_corner")
    group.add_argument("--exit-corner", choices=["sw", "se", "ne", "nw"], dest="exit_corner")
    group.add_argument("--seed", type=int)
    group.add_argument("--random-weights", action="store_const", const="random", dest="weight_source")
    group.add_argument("--no-boundary", action="store_const", const=False, dest="project_boundary",
                       help="skip boundary projection")
    return flags


SOLVER_OPTIONS = (
    "alpha", "delta", "max_area", "overlap_mode", "worker_count", "relaxed_time_limit", "full_time_limit",
    "exact_threshold", "alternate_corners", "entry_corner", "exit_corner", "seed", "weight_source",
    "project_boundary",
)

GCODE_OPTIONS = (
    "extrusion_multiplier_at_turns", "turn_span_mm", "print_feedrate", "travel_feedrate", "extrusion_width",
    "layer_height", "filament_diameter", "hotend_temp", "bed_temp", "z_hop",
)


def build_parser() -> PlannerArgumentParser:
    parser = PlannerArgumentParser(prog="infill-planner", description="space-filling-curve infill planner")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    solver = _solver_flags()

    p = sub.add_parser("decompose", parents=[solver], help="quadtree decomposition of one layer")
    p.add_argument("stack", help="layer-stack JSON")
    p.add_argument("--layer", type=int, help="z_index of the layer (default: lowest)")
    p.add_argument("-o", "--output", help="SVG file (default: stdout)")
    p.add_argument("--json", dest="json_output", help="also write the cell list as JSON")
    p.set_defaults(handler=cmd_decompose)

    p = sub.add_parser("plan", parents=[solver], help="plan a single layer")
    p.add_argument("stack", help="layer-stack JSON")
    p.add_argument("--layer", type=int, help="z_index of the layer (default: lowest)")
    p.add_argument("-o", "--output", help="plan JSON (default: stdout)")
    p.add_argument("--svg", help="also render the layer")
    p.add_argument("--strict", action="store_true", help="exit 2 if any cell is flagged")
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("plan-stack", parents=[solver], help="plan every layer bottom-up")
    p.add_argument("stack", help="layer-stack JSON")
    p.add_argument("-o", "--output", help="plan JSON (default: <stack>.plan.json)")
    p.add_argument("--metrics", help="metrics CSV (default: <stack>.metrics.csv)")
    p.add_argument("--strict", action="store_true", help="exit 2 if any cell is flagged")
    p.set_defaults(handler=cmd_plan_stack)

    p = sub.add_parser("metrics", help="per-layer metrics of a plan as CSV")
    p.add_argument("plan", help="plan JSON")
    p.add_argument("-o", "--output", help="CSV file (default: stdout)")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("render", help="SVG of one planned layer")
    p.add_argument("plan", help="plan JSON")
    p.add_argument("--layer", type=int, help="layer_index to render (default: first)")
    p.add_argument("-o", "--output", help="SVG file (default: stdout)")
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("gcode", help="G-code for a plan")
    p.add_argument("plan", help="plan JSON")
    p.add_argument("-o", "--output", help="G-code file (default: <plan>.gcode)")
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--turn-multiplier", type=float, dest="extrusion_multiplier_at_turns")
    p.add_argument("--turn-span", type=float, dest="turn_span_mm")
    p.add_argument("--print-feedrate", type=float, dest="print_feedrate")
    p.add_argument("--travel-feedrate", type=float, dest="travel_feedrate")
    p.add_argument("--extrusion-width", type=float, dest="extrusion_width")
    p.add_argument("--layer-height", type=float, dest="layer_height")
    p.add_argument("--filament-diameter", type=float, dest="filament_diameter")
    p.add_argument("--hotend-temp", type=int, dest="hotend_temp")
    p.add_argument("--bed-temp", type=int, dest="bed_temp")
    p.add_argument("--z-hop", type=float, dest="z_hop")
    p.set_defaults(handler=cmd_gcode)
    return parser


def _settings(args: argparse.Namespace):
    overrides = {k: getattr(args, k, None) for k in SOLVER_OPTIONS}
    gcode = {k: getattr(args, k, None) for k in GCODE_OPTIONS}
    return resolve_settings(getattr(args, "config", None), overrides, gcode)


def _pick_layer(stack: LayerStack, z_index: Optional[int]):
    if z_index is None:
        return 0, stack.layers[0]
    for position, layer in enumerate(stack.layers):
        if layer.z_index == z_index:
            return position, layer
    raise ConfigError(f"no layer with z_index {z_index}")


def _write(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _flagged_exit(plan: StackPlan, strict: bool) -> int:
    flagged = plan.summary.get("flagged_cells", 0)
    if flagged:
        logger.warning("%d cells printed without a hamiltonian path", flagged)
        if strict:
            return EXIT_PLANNING
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace) -> int:
    config, _ = _settings(args)
    stack = load_layer_stack(args.stack)
    position, layer = _pick_layer(stack, args.layer)
    _, sequence, warnings = decompose_layer(layer.polygons, stack.pixel_size_mm, config, position)
    for message in warnings:
        logger.warning("layer %d: %s", layer.z_index, message)
    if args.output:
        emit_decomposition_svg(sequence, stack.pixel_size_mm, args.output)
    else:
        _write(render_decomposition_svg(sequence, stack.pixel_size_mm), None)
    if args.json_output:
        data = decomposition_to_dict(sequence, stack.pixel_size_mm, config.max_area)
        Path(args.json_output).write_text(json.dumps(data, indent=1), encoding="utf-8")
    logger.info("layer %d: %d cells", layer.z_index, 0 if sequence is None else len(sequence))
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    config, _ = _settings(args)
    stack = load_layer_stack(args.stack)
    position, layer = _pick_layer(stack, args.layer)
    z = (layer.z_index + 1) * stack.layer_height_mm
    layer_plan = plan_layer(layer.polygons, None, config, layer.z_index, stack.pixel_size_mm, z, position)
    plan = StackPlan((layer_plan,), config, stack.pixel_size_mm, stack.layer_height_mm, summarize([layer_plan]))
    if args.output:
        emit_toolpath_json(plan, args.output)
    else:
        _write(json.dumps(plan_to_dict(plan), indent=1) + "\n", None)
    if args.svg:
        emit_svg(layer_plan, args.svg)
    return _flagged_exit(plan, args.strict)


def cmd_plan_stack(args: argparse.Namespace) -> int:
    config, _ = _settings(args)
    stack = load_layer_stack(args.stack)
    plan = plan_stack(stack, config)
    base = Path(args.stack)
    output = args.output or str(base.with_suffix(".plan.json"))
    metrics = args.metrics or str(base.with_suffix(".metrics.csv"))
    emit_toolpath_json(plan, output)
    emit_metrics_csv(plan, metrics)
    print(f"plan written to {output}, metrics to {metrics}", file=sys.stderr)
    return _flagged_exit(plan, args.strict)


def cmd_metrics(args: argparse.Namespace) -> int:
    plan = load_toolpath_json(args.plan)
    if args.output:
        emit_metrics_csv(plan, args.output)
    else:
        _write(render_metrics_csv(plan), None)
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    plan = load_toolpath_json(args.plan)
    if not plan.layers:
        raise ToolpathFormatError("plan has no layers to render")
    layer = plan.layers[0]
    if args.layer is not None:
        matches = [p for p in plan.layers if p.layer_index == args.layer]
        if not matches:
            raise ConfigError(f"plan has no layer {args.layer}")
        layer = matches[0]
    if args.output:
        emit_svg(layer, args.output)
    else:
        _write(render_svg(layer), None)
    return EXIT_OK


def cmd_gcode(args: argparse.Namespace) -> int:
    _, params = _settings(args)
    plan = load_toolpath_json(args.plan)
    output = args.output or str(Path(args.plan).with_suffix(".gcode"))
    report = emit_gcode(plan, params, output)
    print(f"gcode written to {output}: {report.layer_count} layers, {report.total_filament:.2f} mm filament",
          file=sys.stderr)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging("DEBUG" if args.verbose else None)

    try:
        return args.handler(args)
    except FileNotFoundError as e:
        print(f"error: {e.filename or e}: no such file", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, LayerStackError, ToolpathFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DecompositionError, SequencingError, SolverFailure, GcodeChainError) as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
