#!/usr/bin/env python3
"""
tests for quadtree_decomposition: leaf construction, Hilbert ordering and cell entry/exit pixels
"""

import os
import random
import sys

import numpy as np
import pytest

# Add the parent directory to Python path (where the main modules are)
parent_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, parent_dir)

from layer_geometry import GridPoint, IopRegion
from quadtree_decomposition import (
    Corner,
    DecompositionError,
    assign_entry_exit,
    build_quadtree,
    enclosing_root,
    hilbert_order,
    hilbert_polyline,
    order_components,
)

# 2x2 cells of the 8x8 square, in units of 2 pixels, for a SW -> SE traversal
SQUARE_ORDER = [
    (0, 0), (1, 0), (1, 1), (0, 1), (0, 2), (0, 3), (1, 3), (1, 2),
    (2, 2), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1), (2, 0), (3, 0),
]


def full_square(side):
    return IopRegion(GridPoint(0, 0), np.ones((side, side), dtype=bool))


def notched_square():
    """8x8 square without its upper-right 4x4 quarter"""
    return IopRegion.from_points(
        GridPoint(x, y) for x in range(8) for y in range(8) if not (x >= 4 and y >= 4)
    )


@pytest.mark.parametrize("delta, leaves", [(64, 1), (16, 4), (4, 16), (1, 64)])
def test_leaf_count_follows_delta(delta, leaves):
    tree = build_quadtree(full_square(8), delta)
    assert len(tree.leaves) == leaves
    assert all(leaf.area <= delta for leaf in tree.leaves)


def test_leaves_tile_the_region_exactly():
    region = IopRegion.from_points(
        GridPoint(x, y) for x in range(11) for y in range(7) if x < 3 or y < 2
    )
    tree = build_quadtree(region, 16)
    covered = [p for leaf in tree.leaves for p in leaf.pixels()]
    assert len(covered) == len(set(covered))
    assert set(covered) == set(region.pixels())
    assert tree.area == region.pixel_count


def test_enclosing_root_is_power_of_two():
    origin, q = enclosing_root([IopRegion.from_points([GridPoint(3, 2), GridPoint(8, 4)])])
    assert origin == GridPoint(3, 2)
    assert q == 3
    with pytest.raises(DecompositionError):
        build_quadtree(full_square(8), 4, root=(GridPoint(0, 0), 2))


def test_first_level_visits_quadrants_in_order():
    seq = hilbert_order(build_quadtree(full_square(2), 1))
    assert [item.cell.origin for item in seq.items] == [
        GridPoint(0, 0), GridPoint(0, 1), GridPoint(1, 1), GridPoint(1, 0)
    ]


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_uniform_curve_is_edge_connected(q):
    side = 1 << q
    seq = hilbert_order(build_quadtree(full_square(side), 1))
    origins = [item.cell.origin for item in seq.items]
    assert len(origins) == side * side
    assert all(a.manhattan(b) == 1 for a, b in zip(origins, origins[1:]))
    assert origins[0] == GridPoint(0, 0)
    assert origins[-1] == GridPoint(side - 1, 0)


@pytest.mark.parametrize("entry, exit", [
    (a, b) for a in Corner for b in Corner if a.is_adjacent(b)
])
def test_curve_runs_between_requested_corners(entry, exit):
    side = 8
    seq = hilbert_order(build_quadtree(full_square(side), 1), entry, exit)
    origins = [item.cell.origin for item in seq.items]
    assert origins[0] == GridPoint(entry.dx * (side - 1), entry.dy * (side - 1))
    assert origins[-1] == GridPoint(exit.dx * (side - 1), exit.dy * (side - 1))
    assert all(a.manhattan(b) == 1 for a, b in zip(origins, origins[1:]))


def test_diagonal_corners_are_rejected():
    tree = build_quadtree(full_square(4), 1)
    with pytest.raises(DecompositionError):
        hilbert_order(tree, Corner.SW, Corner.NE)
    with pytest.raises(DecompositionError):
        Corner.parse("north")
    assert Corner.parse("Ne") is Corner.NE


def test_equal_cells_share_an_edge():
    seq = hilbert_order(build_quadtree(full_square(16), 16))
    cells = seq.cells
    assert all(a.size == 4 for a in cells)
    assert all(a.origin.manhattan(b.origin) == 4 for a, b in zip(cells, cells[1:]))


def test_square_order_with_four_pixel_cells():
    seq = hilbert_order(build_quadtree(full_square(8), 4))
    assert [(c.origin.x // 2, c.origin.y // 2) for c in seq.cells] == SQUARE_ORDER


def test_notched_square_is_the_square_order_without_the_missing_quarter():
    seq = hilbert_order(build_quadtree(notched_square(), 4))
    expected = SQUARE_ORDER[:8] + SQUARE_ORDER[12:]
    assert [(c.origin.x // 2, c.origin.y // 2) for c in seq.cells] == expected
    assert [item.hilbert_key // 4 for item in seq.items] == list(range(8)) + list(range(12, 16))


def test_notched_square_entry_and_exit_pixels():
    seq = assign_entry_exit(hilbert_order(build_quadtree(notched_square(), 4)))
    expected = [
        ((0, 0), (1, 0)), ((2, 0), (2, 1)), ((2, 2), (2, 3)), ((1, 3), (0, 3)),
        ((0, 4), (0, 5)), ((0, 6), (1, 6)), ((2, 6), (3, 6)), ((3, 5), (3, 4)),
        ((7, 3), (6, 3)), ((5, 3), (5, 2)), ((5, 1), (5, 0)), ((6, 0), (7, 0)),
    ]
    assert [((i.s.x, i.s.y), (i.t.x, i.t.y)) for i in seq.items] == expected


def test_pruned_tree_keeps_the_uniform_order():
    rng = random.Random(7)
    root = (GridPoint(0, 0), 3)
    uniform = [c.origin for c in hilbert_order(build_quadtree(full_square(8), 1)).cells]
    for _ in range(20):
        points = [GridPoint(x, y) for x in range(8) for y in range(8) if rng.random() < 0.6]
        if not points:
            continue
        seq = hilbert_order(build_quadtree(IopRegion.from_points(points), 1, root=root))
        origins = [c.origin for c in seq.cells]
        assert origins == [p for p in uniform if p in set(points)]
        keys = [item.hilbert_key for item in seq.items]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)


def test_mixed_depth_keys_increase_along_the_curve():
    region = IopRegion.from_points(
        GridPoint(x, y) for x in range(16) for y in range(16) if x + y < 20
    )
    seq = hilbert_order(build_quadtree(region, 64))
    keys = [item.hilbert_key for item in seq.items]
    assert keys == sorted(keys)
    assert len({leaf.size for leaf in seq.cells}) > 1


def test_components_are_ordered_by_first_key():
    root = (GridPoint(0, 0), 3)
    left = IopRegion(GridPoint(0, 0), np.ones((2, 2), dtype=bool))
    right = IopRegion(GridPoint(6, 0), np.ones((2, 2), dtype=bool))
    top = IopRegion(GridPoint(0, 6), np.ones((2, 2), dtype=bool))
    trees = [build_quadtree(r, 4, root=root) for r in (right, top, left)]
    ordered = order_components(trees)
    assert [seq.cells[0].origin for seq in ordered] == [GridPoint(0, 0), GridPoint(0, 6), GridPoint(6, 0)]


def test_polyline_passes_through_cell_centres():
    seq = hilbert_order(build_quadtree(full_square(4), 4))
    assert hilbert_polyline(seq) == [(1.0, 1.0), (1.0, 3.0), (3.0, 3.0), (3.0, 1.0)]
