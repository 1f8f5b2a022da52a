#!/usr/bin/env python3
"""
tests for the infill-planner command line
"""

import json
import os
import sys

import pytest

# Add the parent directory to Python path (where the main modules are)
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from planner_cli import EXIT_OK, EXIT_USAGE, main
from toolpath_io import METRICS_COLUMNS, load_toolpath_json


def square(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


@pytest.fixture
def stack_file(tmp_path):
    path = tmp_path / "part.json"
    path.write_text(json.dumps({
        "pixel_size_mm": 0.5,
        "layer_height_mm": 0.2,
        "layers": [
            {"z_index": 0, "polygons": [{"outer": square(0, 0, 4, 4)}]},
            {"z_index": 1, "polygons": [{"outer": square(0, 0, 4.3, 4)}]},
        ],
    }))
    return path


def test_plan_stack_writes_plan_and_metrics(stack_file, tmp_path):
    code = main(["plan-stack", str(stack_file), "--delta", "16", "--max-area", "64", "--overlap-mode", "max"])
    assert code == EXIT_OK
    plan_path = tmp_path / "part.plan.json"
    metrics_path = tmp_path / "part.metrics.csv"
    plan = load_toolpath_json(plan_path)
    assert len(plan.layers) == 2
    assert plan.config.delta == 16
    assert metrics_path.read_text().splitlines()[0] == ",".join(METRICS_COLUMNS)


def test_follow_up_commands_read_the_plan(stack_file, tmp_path, capsys):
    plan_path = tmp_path / "out.json"
    assert main(["plan-stack", str(stack_file), "-o", str(plan_path), "--metrics", str(tmp_path / "m.csv"),
                 "--delta", "16", "--max-area", "64"]) == EXIT_OK
    capsys.readouterr()

    assert main(["metrics", str(plan_path)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 3

    assert main(["render", str(plan_path), "--layer", "1", "-o", str(tmp_path / "layer.svg")]) == EXIT_OK
    assert (tmp_path / "layer.svg").read_text().startswith("<?xml")

    assert main(["gcode", str(plan_path), "--turn-multiplier", "1.2", "--hotend-temp", "215"]) == EXIT_OK
    gcode = (tmp_path / "out.gcode").read_text()
    assert "M104 S215" in gcode
    assert ";LAYER:1" in gcode


def test_plan_single_layer_to_stdout(stack_file, capsys):
    assert main(["plan", str(stack_file), "--layer", "1", "--delta", "16", "--max-area", "64"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["schema_version"] == 1
    assert [layer["layer_index"] for layer in data["layers"]] == [1]


def test_decompose_writes_svg_and_cells(stack_file, tmp_path):
    svg = tmp_path / "cells.svg"
    cells = tmp_path / "cells.json"
    assert main(["decompose", str(stack_file), "--delta", "4", "--max-area", "16",
                 "-o", str(svg), "--json", str(cells)]) == EXIT_OK
    assert svg.read_text().count("<rect") == 17
    data = json.loads(cells.read_text())
    assert len(data["cells"]) == 16
    assert len(data["subproblems"]) == 4


@pytest.mark.parametrize("argv", [
    [],
    ["plan-stack"],
    ["plan-stack", "part.json", "--bogus"],
    ["plan-stack", "part.json", "--overlap-mode", "sideways"],
])
def test_usage_errors_exit_one(argv):
    assert main(argv) == EXIT_USAGE


def test_help_exits_cleanly():
    assert main(["--help"]) == EXIT_OK


def test_input_errors_exit_one(stack_file, tmp_path):
    assert main(["plan-stack", str(tmp_path / "missing.json")]) == EXIT_USAGE
    broken = tmp_path / "broken.json"
    broken.write_text("[1, 2")
    assert main(["plan-stack", str(broken)]) == EXIT_USAGE
    assert main(["plan", str(stack_file), "--alpha", "2"]) == EXIT_USAGE
    assert main(["plan", str(stack_file), "--layer", "9"]) == EXIT_USAGE
    assert main(["metrics", str(stack_file)]) == EXIT_USAGE
    assert main(["plan", str(stack_file), "--config", str(tmp_path / "absent.env")]) == EXIT_USAGE


def test_malformed_stack_files_exit_one(tmp_path, capsys):
    binary = tmp_path / "binary.json"
    binary.write_bytes(b"\xff\xfe{}")
    assert main(["plan-stack", str(binary)]) == EXIT_USAGE
    null_holes = tmp_path / "holes.json"
    null_holes.write_text(json.dumps({
        "pixel_size_mm": 1.0,
        "layer_height_mm": 0.2,
        "layers": [{"z_index": 0, "polygons": [{"outer": square(0, 0, 4, 4), "holes": None}]}],
    }))
    assert main(["decompose", str(null_holes)]) == EXIT_USAGE
    assert "holes must be a list" in capsys.readouterr().err
