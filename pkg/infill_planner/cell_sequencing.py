# cell_sequencing.py
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

from layer_geometry import DualGraph, GridPoint, IopRegion, build_dual_graph, vertex_parity
from quadtree_decomposition import CellSequence, QuadCell, SequencedCell

logger = logging.getLogger(__name__)


class SequencingError(ValueError):
    pass


def rectilinear_gap(t_prev: GridPoint, s_next: GridPoint) -> int:
    return abs(t_prev.x - s_next.x) + abs(t_prev.y - s_next.y)


def straight_gap(a: GridPoint, b: GridPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class JoinedCell:
    members: Tuple[SequencedCell, ...]
    region: IopRegion
    graph: DualGraph
    s: GridPoint
    t: GridPoint

    @property
    def area(self) -> int:
        return sum(m.cell.area for m in self.members)

    @property
    def constituent_entries(self) -> List[Tuple[GridPoint, GridPoint]]:
        return [(m.s, m.t) for m in self.members]

    @property
    def first(self) -> QuadCell:
        return self.members[0].cell

    @property
    def last(self) -> QuadCell:
        return self.members[-1].cell

    def with_terminals(self, s: GridPoint, t: GridPoint) -> "JoinedCell":
        return replace(self, s=s, t=t, graph=self.graph.with_terminals(s, t))


@dataclass(frozen=True)
class JoinedSequence:
    items: Tuple[JoinedCell, ...]

    def __len__(self) -> int:
        return len(self.items)

    def flatten(self) -> List[SequencedCell]:
        return [m for item in self.items for m in item.members]

    def gaps(self) -> List[int]:
        return [rectilinear_gap(a.t, b.s) for a, b in zip(self.items, self.items[1:])]

    def idle_units(self) -> int:
        """Total rectilinear idle movement, one unit per step beyond an adjacent hop"""
        return sum(max(0, gap - 1) for gap in self.gaps())

    def idle_length(self) -> float:
        """Straight-line length of the idle hops between joined cells"""
        return sum(straight_gap(a.t, b.s) for a, b in zip(self.items, self.items[1:])
                   if rectilinear_gap(a.t, b.s) > 1)


def make_joined_cell(members: Sequence[SequencedCell]) -> JoinedCell:
    pixels = [p for m in members for p in m.cell.pixels()]
    region = IopRegion.from_points(pixels)
    s, t = members[0].s, members[-1].t
    graph = build_dual_graph(region).with_terminals(s, t)
    return JoinedCell(tuple(members), region, graph, s, t)


def split_runs(items: Sequence[SequencedCell]) -> List[List[SequencedCell]]:
    """Maximal runs whose consecutive exit/entry pixels are neighbours"""
    runs: List[List[SequencedCell]] = []
    for item in items:
        if runs and rectilinear_gap(runs[-1][-1].t, item.s) == 1:
            runs[-1].append(item)
        else:
            runs.append([item])
    return runs


def join_cells(seq: CellSequence, max_area: int) -> JoinedSequence:
    """Greedily pack each run into subproblems of total area at most max_area"""
    for k, item in enumerate(seq.items):
        if item.s is None or item.t is None:
            raise SequencingError(f"cell {k} has no entry/exit assigned")
        if item.cell.area > max_area:
            raise SequencingError(f"cell {k} has area {item.cell.area} > max area {max_area}")

    joined: List[JoinedCell] = []
    for run in split_runs(seq.items):
        group: List[SequencedCell] = []
        area = 0
        for item in run:
            if group and area + item.cell.area > max_area:
                joined.append(make_joined_cell(group))
                group, area = [], 0
            group.append(item)
            area += item.cell.area
        joined.append(make_joined_cell(group))

    logger.debug("joined %d cells into %d subproblems", len(seq.items), len(joined))
    return JoinedSequence(tuple(joined))


def _candidates(cell: QuadCell, like: GridPoint) -> List[GridPoint]:
    parity = vertex_parity(like)
    return [p for p in cell.corner_pixels() if vertex_parity(p) == parity]


def _closest(candidates: Sequence[GridPoint], target: GridPoint) -> GridPoint:
    return min(candidates, key=lambda p: (rectilinear_gap(p, target), straight_gap(p, target), p))


def update_entry_exit(jseq: JoinedSequence) -> JoinedSequence:
    """Move entries and exits to same-parity corners of the end members to shorten idle hops.

    Left to right: t' is the exit corner closest to the next cell's entry, then the
    next s' is the entry corner closest to that t'. The first entry and last exit
    stay fixed. Rectilinear gap decides, straight-line distance breaks ties.
    """
    items = list(jseq.items)
    if len(items) < 2:
        return jseq

    updated: List[JoinedCell] = []
    prev_exit: Optional[GridPoint] = None
    for k, item in enumerate(items):
        s = item.s if prev_exit is None else _closest(_candidates(item.first, item.s), prev_exit)
        if k + 1 < len(items):
            t = _closest(_candidates(item.last, item.t), items[k + 1].s)
        else:
            t = item.t
        if len(item.graph) > 1 and s == t:
            s, t = item.s, item.t
        updated.append(item if (s, t) == (item.s, item.t) else item.with_terminals(s, t))
        prev_exit = t

    result = JoinedSequence(tuple(updated))
    logger.debug("idle units %d -> %d", jseq.idle_units(), result.idle_units())
    return result
