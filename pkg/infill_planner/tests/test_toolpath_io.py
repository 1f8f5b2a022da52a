#!/usr/bin/env python3
"""
tests for toolpath_io: plan JSON, G-code, SVG and metrics CSV outputs
"""

import json
import math
import os
import sys

import pytest

# Add the parent directory to Python path (where the main modules are)
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from layer_geometry import GeneralPolygon, GridPoint, Layer, LayerStack, Move, MoveKind
from multilayer_planner import CellPlan, LayerMetrics, LayerPlan, SolverConfig, StackPlan, decompose_layer, plan_stack
from toolpath_io import (
    CELL_COLOUR,
    ENTRY_COLOUR,
    EXIT_COLOUR,
    IDLE_COLOUR,
    METRICS_COLUMNS,
    PRINT_COLOUR,
    GcodeChainError,
    GcodeParams,
    ToolpathFormatError,
    boosted_intervals,
    decomposition_to_dict,
    emit_decomposition_svg,
    emit_gcode,
    emit_metrics_csv,
    emit_svg,
    emit_toolpath_json,
    load_toolpath_json,
    metrics_rows,
    plan_to_dict,
    render_decomposition_svg,
    render_gcode,
    render_metrics_csv,
    render_svg,
)

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")

BEAD = 0.4 * 0.2
FILAMENT_AREA = math.pi * 0.875 ** 2


def square(x0, y0, x1, y1):
    return GeneralPolygon.from_rings([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def planned_stack(layers=2):
    polygons = [square(0, 0, 8, 8), square(0, 0, 8.6, 8)]
    stack = LayerStack(1.0, 0.2, tuple(Layer(k, (polygons[k % 2],)) for k in range(layers)))
    return plan_stack(stack, SolverConfig(delta=16, max_area=64))


def single_layer(moves, layer_index=0, cells=(), skipped=False):
    layer = LayerPlan(
        layer_index=layer_index,
        z=0.2,
        pixel_size=1.0,
        moves=tuple(moves),
        print_edges=frozenset(),
        runs=(),
        cells=tuple(cells),
        metrics=LayerMetrics(None, None, 0.0, len(cells), sum(1 for c in cells if c.flagged)),
        skipped=skipped,
    )
    return StackPlan((layer,), SolverConfig(), 1.0, 0.2, {"layer_count": 1})


def printed(*points):
    return [Move(MoveKind.PRINT, a, b, 0.2) for a, b in zip(points, points[1:])]


def test_plan_json_round_trip(tmp_path):
    plan = planned_stack()
    emit_toolpath_json(plan, tmp_path / "plan.json")
    loaded = load_toolpath_json(tmp_path / "plan.json")
    assert loaded == plan
    assert loaded.layers[1].boundary is not None


def test_empty_and_flagged_plans_round_trip(tmp_path):
    empty = StackPlan((), SolverConfig())
    emit_toolpath_json(empty, tmp_path / "empty.json")
    assert load_toolpath_json(tmp_path / "empty.json") == empty

    flagged = CellPlan(((0, 0, 2),), GridPoint(0, 0), GridPoint(1, 1),
                       ((GridPoint(0, 0), GridPoint(1, 0)), (GridPoint(0, 1), GridPoint(1, 1))), None, True)
    plan = single_layer(printed((0.5, 0.5), (1.5, 0.5)), cells=[flagged])
    emit_toolpath_json(plan, tmp_path / "flagged.json")
    loaded = load_toolpath_json(tmp_path / "flagged.json")
    assert loaded == plan
    assert loaded.layers[0].flagged


def test_wrong_schema_version_is_rejected(tmp_path):
    data = plan_to_dict(StackPlan((), SolverConfig()))
    data["schema_version"] = 99
    (tmp_path / "future.json").write_text(json.dumps(data))
    with pytest.raises(ToolpathFormatError):
        load_toolpath_json(tmp_path / "future.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ToolpathFormatError):
        load_toolpath_json(tmp_path / "broken.json")
    (tmp_path / "binary.json").write_bytes(b"\xff\xfe{}")
    with pytest.raises(ToolpathFormatError):
        load_toolpath_json(tmp_path / "binary.json")
    data["schema_version"] = 1
    del data["layers"]
    (tmp_path / "partial.json").write_text(json.dumps(data))
    with pytest.raises(ToolpathFormatError):
        load_toolpath_json(tmp_path / "partial.json")


def test_straight_move_extrudes_bead_volume():
    text, report = render_gcode(single_layer(printed((0.0, 0.0), (10.0, 0.0))), GcodeParams())
    expected = 10 * BEAD / FILAMENT_AREA
    assert report.total_filament == pytest.approx(expected)
    assert report.boosted_length == 0.0
    moves = [line for line in text.splitlines() if line.startswith("G1 X")]
    assert moves == [f"G1 X10.000 Y0.000 E{expected:.5f} F2400"]
    assert text.splitlines()[0] == ";FLAVOR:Marlin"
    assert "G92 E0" in text
    assert text.rstrip().endswith("M140 S0")


def test_idle_moves_never_extrude():
    moves = printed((0.0, 0.0), (1.0, 0.0)) + [Move(MoveKind.IDLE, (1.0, 0.0), (5.0, 5.0), 0.2)] \
        + printed((5.0, 5.0), (6.0, 5.0))
    text, report = render_gcode(single_layer(moves), GcodeParams())
    travel = [line for line in text.splitlines() if line.startswith("G0 X5.000")]
    assert travel == ["G0 X5.000 Y5.000 F7200"]
    assert report.idle_length == pytest.approx(math.hypot(4, 5))
    assert report.print_length == pytest.approx(2.0)


def test_right_angle_gets_extra_extrusion():
    plan = single_layer(printed((0.0, 0.0), (10.0, 0.0), (10.0, 10.0)))
    text, report = render_gcode(plan, GcodeParams(extrusion_multiplier_at_turns=1.1, turn_span_mm=1.0))
    assert report.boosted_length == pytest.approx(2.0)
    assert report.total_volume == pytest.approx(20 * BEAD + 2 * BEAD * 0.1)
    assert len([line for line in text.splitlines() if line.startswith("G1 X")]) == 4
    _, flat = render_gcode(plan, GcodeParams(extrusion_multiplier_at_turns=1.0))
    assert flat.total_volume == pytest.approx(20 * BEAD)


def test_boost_intervals_merge_near_turns():
    stroke = printed((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 1.0), (2.0, 5.0))
    assert boosted_intervals(stroke, 0.75) == [(0.25, 3.75)]
    assert boosted_intervals(printed((0.0, 0.0), (1.0, 0.0), (0.0, 0.0)), 0.5) == []


def test_broken_chain_is_refused():
    moves = printed((0.0, 0.0), (1.0, 0.0)) + printed((2.0, 0.0), (3.0, 0.0))
    with pytest.raises(GcodeChainError):
        render_gcode(single_layer(moves), GcodeParams())
    with pytest.raises(GcodeChainError):
        render_gcode(single_layer(printed((1.0, 1.0), (1.0, 1.0))), GcodeParams())
    with pytest.raises(ToolpathFormatError):
        render_gcode(StackPlan((), SolverConfig()), GcodeParams())


def test_planned_stack_gcode(tmp_path):
    plan = planned_stack()
    report = emit_gcode(plan, GcodeParams(z_hop=0.4), tmp_path / "out.gcode")
    text = (tmp_path / "out.gcode").read_text()
    assert ";LAYER:0" in text and ";LAYER:1" in text
    assert "G1 Z0.200" in text and "G1 Z0.400" in text
    assert "G1 Z0.600" in text
    assert report.layer_count == 2
    assert report.line_count == len(text.splitlines())
    assert report.total_volume >= report.print_length * BEAD


def test_skipped_layer_is_marked():
    text, _ = render_gcode(single_layer([], layer_index=4, skipped=True), GcodeParams())
    assert ";LAYER:4 skipped" in text


def test_svg_is_deterministic_and_coloured():
    plan = planned_stack(1)
    layer = plan.layers[0]
    first = render_svg(layer)
    assert first == render_svg(layer)
    assert first.startswith('<?xml version="1.0"')
    assert first.rstrip().endswith("</svg>")
    for colour in (PRINT_COLOUR, ENTRY_COLOUR, EXIT_COLOUR, CELL_COLOUR):
        assert colour in first


def test_svg_of_empty_layer():
    text = render_svg(single_layer([]).layers[0])
    assert "<svg" in text
    assert "<polyline" not in text
    assert IDLE_COLOUR not in text


def test_decomposition_outputs():
    config = SolverConfig(delta=4, max_area=16)
    _, sequence, _ = decompose_layer([square(0, 0, 8, 8)], 1.0, config)
    svg = render_decomposition_svg(sequence, 1.0)
    assert svg.count("<rect") == 17
    assert svg.count("<polyline") == 1
    assert svg.count("<circle") == 32
    data = decomposition_to_dict(sequence, 1.0, config.max_area)
    assert data["root"] == {"x": 0, "y": 0, "exponent": 3}
    assert len(data["cells"]) == 16
    assert data["cells"][0]["entry_corner"] == "SW"
    assert [p["members"] for p in data["subproblems"]] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]]
    assert data["idle_units"] == 0
    assert decomposition_to_dict(None, 1.0)["cells"] == []
    assert "<rect" in render_decomposition_svg(None, 1.0)


def test_metrics_csv(tmp_path):
    plan = planned_stack()
    text = render_metrics_csv(plan)
    lines = text.splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 3
    assert lines[1].split(",")[2] == ""
    rows = metrics_rows(plan)
    assert rows[1]["overlap_ratio"] is not None
    emit_metrics_csv(plan, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == text


def test_gcode_params_from_text():
    params = GcodeParams.from_dict({"hotend_temp": "215", "turn_span_mm": "0.5", "layer_height": ""})
    assert params.hotend_temp == 215
    assert params.turn_span_mm == 0.5
    assert params.layer_height is None
    with pytest.raises(ValueError):
        GcodeParams.from_dict({"nozzle": "0.4"})
    with pytest.raises(ValueError):
        GcodeParams(extrusion_multiplier_at_turns=0.9)


def golden_bytes(name):
    with open(os.path.join(GOLDEN_DIR, name), "rb") as f:
        return f.read()


def test_decomposition_svg_matches_golden_file(tmp_path):
    _, sequence, _ = decompose_layer([square(0, 0, 8, 8)], 1.0, SolverConfig(delta=16, max_area=64))
    emit_decomposition_svg(sequence, 1.0, tmp_path / "cells.svg")
    assert (tmp_path / "cells.svg").read_bytes() == golden_bytes("square_8x8_decomposition.svg")


def test_layer_svg_matches_golden_file(tmp_path):
    moves = printed((0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)) \
        + [Move(MoveKind.IDLE, (0.5, 1.5), (0.5, 0.5), 0.2)]
    cell = CellPlan(((0, 0, 2),), GridPoint(0, 0), GridPoint(0, 1),
                    ((GridPoint(0, 0), GridPoint(1, 0), GridPoint(1, 1), GridPoint(0, 1)),))
    plan = single_layer(moves, cells=[cell])
    emit_svg(plan.layers[0], tmp_path / "layer.svg")
    assert (tmp_path / "layer.svg").read_bytes() == golden_bytes("two_by_two_layer.svg")
