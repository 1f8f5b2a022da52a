#!/usr/bin/env python3
"""
tests for boundary_projection: exposed pixels, orthogonal extensions and move tracing
"""

import os
import sys

import pytest
import shapely
from shapely.geometry import LineString, Point

# Add the parent directory to Python path (where the main modules are)
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from boundary_projection import (
    BoundaryExtension,
    Projection,
    boundary_vertices,
    exposed_directions,
    project_to_boundary,
    trace_moves,
)
from layer_geometry import GeneralPolygon, GridPoint, MoveKind, unit_edge
from multilayer_planner import LayerMetrics, LayerPlan, SolverConfig, plan_layer


def rect(x0, y0, x1, y1):
    return GeneralPolygon.from_rings([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def assert_moves_chain(moves):
    for a, b in zip(moves, moves[1:]):
        assert a.end == pytest.approx(b.start)


def test_exposed_sides_of_a_pixel():
    shape = rect(0, 0, 8.6, 8).to_shapely()
    iop = {GridPoint(x, y) for x in range(8) for y in range(8)}
    assert exposed_directions(GridPoint(7, 3), iop, shape, 1.0) == [(1, 0)]
    assert exposed_directions(GridPoint(0, 3), iop, shape, 1.0) == []
    assert exposed_directions(GridPoint(3, 3), iop, shape, 1.0) == []


def test_pixel_aligned_polygon_needs_no_projection():
    polygon = rect(0, 0, 8, 8)
    plan = plan_layer([polygon], None, SolverConfig(delta=16, max_area=64, project_boundary=False))
    assert boundary_vertices(plan, polygon) == set()
    assert project_to_boundary(plan, polygon) is plan


def test_right_margin_is_reached_by_every_edge_pixel():
    polygon = rect(0, 0, 8.6, 8)
    plan = plan_layer([polygon], None, SolverConfig(delta=16, max_area=64))
    assert plan.boundary is not None
    by_source = plan.boundary.by_source()
    assert set(by_source) == {GridPoint(7, y) for y in range(8)}
    for projection in by_source.values():
        assert projection.direction == (1, 0)
        assert projection.target[0] == pytest.approx(8.6)
        assert projection.target[1] == pytest.approx(projection.source.y + 0.5)
    assert_moves_chain(plan.moves)
    assert not any(m.kind is MoveKind.PRINT and m.length == 0 for m in plan.moves)
    reach = max(max(m.start[0], m.end[0]) for m in plan.moves if m.kind is MoveKind.PRINT)
    assert reach == pytest.approx(8.6)
    assert plan.print_edges <= {unit_edge(a, b) for run in plan.runs for a, b in zip(run, run[1:])}


def test_extension_stays_inside_polygon():
    polygon = rect(0.3, 0.2, 6.7, 6.9)
    plan = plan_layer([polygon], None, SolverConfig(delta=16, max_area=64))
    shape = polygon.to_shapely().buffer(1e-6)
    for move in plan.moves:
        if move.kind is MoveKind.PRINT:
            assert shape.covers(LineString([move.start, move.end]))
    assert_moves_chain(plan.moves)
    sources = [p.source for p in plan.boundary.projections]
    assert len(sources) == len(set(sources))


def test_trace_without_extension_is_print_then_idle():
    runs = ((GridPoint(0, 0), GridPoint(1, 0)), (GridPoint(5, 5), GridPoint(5, 6)))
    moves = trace_moves(runs, 0.5, 0.2)
    assert [m.kind for m in moves] == [MoveKind.PRINT, MoveKind.IDLE, MoveKind.PRINT]
    assert moves[0].start == (0.25, 0.25)
    assert moves[1].end == (2.75, 2.75)
    assert all(m.z == 0.2 for m in moves)


def test_trace_splices_a_spur():
    runs = ((GridPoint(0, 0), GridPoint(1, 0)),)
    spur = Projection(GridPoint(1, 0), (2.3, 0.5), (1, 0))
    moves = trace_moves(runs, 1.0, 0.0, BoundaryExtension(projections=(spur,)))
    assert [(m.start, m.end) for m in moves] == [
        ((0.5, 0.5), (1.5, 0.5)),
        ((1.5, 0.5), (2.3, 0.5)),
        ((2.3, 0.5), (1.5, 0.5)),
    ]


def hand_plan(runs, pixel_size=1.0):
    runs = tuple(tuple(GridPoint(*p) for p in run) for run in runs)
    return LayerPlan(
        layer_index=0,
        z=0.0,
        pixel_size=pixel_size,
        moves=tuple(trace_moves(runs, pixel_size, 0.0)),
        print_edges=frozenset(unit_edge(a, b) for run in runs for a, b in zip(run, run[1:])),
        runs=runs,
        cells=(),
        metrics=LayerMetrics(None, None, 0.0, 0, 0),
    )


def disk(radius, cx, cy):
    return GeneralPolygon.from_rings(list(Point(cx, cy).buffer(radius, quad_segs=32).exterior.coords))


def test_edge_next_to_a_detour_becomes_idle():
    """Two exposed pixels detour together, the third spurs out and its link to the detour turns idle"""
    plan = hand_plan([[(7, 0), (7, 1), (7, 2), (6, 2), (6, 1), (6, 0)]])
    projected = project_to_boundary(plan, rect(6, 0, 9.6, 3))
    detour = unit_edge(GridPoint(7, 0), GridPoint(7, 1))
    link = unit_edge(GridPoint(7, 1), GridPoint(7, 2))
    assert projected.boundary.detoured_edges == {detour}
    assert projected.boundary.converted_idle_edges == {link}
    assert projected.boundary.by_source()[GridPoint(7, 2)].via_edge == link
    assert projected.print_edges == plan.print_edges - {detour, link}
    idle = [(m.start, m.end) for m in projected.moves if m.kind is MoveKind.IDLE]
    assert idle == [((7.5, 1.5), (7.5, 2.5))]
    reach = [m.end for m in projected.moves if m.kind is MoveKind.PRINT and m.end[0] > 9]
    assert [pytest.approx(p) for p in reach] == [(9.6, 0.5), (9.6, 1.5), (9.6, 2.5)]
    assert_moves_chain(projected.moves)


def test_crossing_projection_is_dropped():
    plan = hand_plan([[(0, 0)], [(1, 1)]])
    projected = project_to_boundary(plan, rect(0, 0, 2, 2))
    by_source = projected.boundary.by_source()
    assert set(by_source) == {GridPoint(0, 0)}
    assert by_source[GridPoint(0, 0)].direction == (0, 1)
    assert any("crosses another projection" in w for w in projected.warnings)


def test_disk_boundary_vertices_match_exterior_neighbours():
    polygon = disk(9.3, 10.0, 10.0)
    plan = plan_layer([polygon], None, SolverConfig(delta=16, max_area=64, project_boundary=False))
    shape = polygon.to_shapely()
    iop = {p for run in plan.runs for p in run}
    expected = set()
    for p in iop:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = p.offset(dx, dy)
            pixel = shapely.box(q.x, q.y, q.x + 1, q.y + 1)
            if q not in iop and shape.intersects(pixel) and not shape.touches(pixel):
                expected.add(p)
    assert expected
    assert boundary_vertices(plan, polygon) == expected


def test_single_pixel_inside_a_disk_is_its_own_boundary():
    plan = hand_plan([[(5, 5)]])
    polygon = disk(2.0, 5.5, 5.5)
    assert boundary_vertices(plan, polygon) == {GridPoint(5, 5)}
    projected = project_to_boundary(plan, polygon)
    assert len(projected.boundary.projections) == 1
