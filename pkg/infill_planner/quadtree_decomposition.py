# quadtree_decomposition.py
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from layer_geometry import DualGraph, GridPoint, IopRegion

logger = logging.getLogger(__name__)


class DecompositionError(ValueError):
    pass


class CellStatus(Enum):
    FULLY_INSIDE = "fully_inside"
    MIXED = "mixed"


class Corner(Enum):
    """Cell corner as a unit offset from the cell origin"""

    SW = (0, 0)
    SE = (1, 0)
    NE = (1, 1)
    NW = (0, 1)

    @property
    def dx(self) -> int:
        return self.value[0]

    @property
    def dy(self) -> int:
        return self.value[1]

    def is_adjacent(self, other: "Corner") -> bool:
        return abs(self.dx - other.dx) + abs(self.dy - other.dy) == 1

    def transposed(self) -> "Corner":
        return Corner((self.dy, self.dx))

    @classmethod
    def parse(cls, name: str) -> "Corner":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DecompositionError(f"unknown corner '{name}', expected one of sw, se, ne, nw")


def _other_neighbor(corner: Corner, exclude: Corner) -> Corner:
    for c in Corner:
        if c is not exclude and c.is_adjacent(corner):
            return c
    raise DecompositionError("corner has no second neighbour")


def check_corner_pair(entry: Corner, exit: Corner) -> None:
    if not entry.is_adjacent(exit):
        raise DecompositionError(f"entry {entry.name} and exit {exit.name} do not share a root edge")


def transposed_pair(entry: Corner, exit: Corner) -> Tuple[Corner, Corner]:
    """Mirror a corner pair across the root diagonal: SW->SE becomes SW->NW"""
    return entry.transposed(), exit.transposed()


@dataclass(frozen=True)
class QuadCell:
    origin: GridPoint
    size: int
    depth: int
    status: CellStatus = CellStatus.FULLY_INSIDE

    @property
    def area(self) -> int:
        return self.size * self.size

    def corner_pixel(self, corner: Corner) -> GridPoint:
        """Pixel whose centre is nearest the given corner point"""
        return self.origin.offset(corner.dx * (self.size - 1), corner.dy * (self.size - 1))

    def corner_point(self, corner: Corner) -> Tuple[int, int]:
        return (self.origin.x + corner.dx * self.size, self.origin.y + corner.dy * self.size)

    def corner_pixels(self) -> List[GridPoint]:
        return sorted({self.corner_pixel(c) for c in Corner})

    def center(self) -> Tuple[float, float]:
        half = self.size / 2.0
        return (self.origin.x + half, self.origin.y + half)

    def contains(self, p: GridPoint) -> bool:
        return 0 <= p.x - self.origin.x < self.size and 0 <= p.y - self.origin.y < self.size

    def pixels(self) -> List[GridPoint]:
        return [self.origin.offset(dx, dy) for dx in range(self.size) for dy in range(self.size)]


@dataclass(frozen=True)
class Quadtree:
    root_origin: GridPoint
    root_exponent: int
    leaves: Tuple[QuadCell, ...]
    delta: int

    @property
    def root_size(self) -> int:
        return 1 << self.root_exponent

    @property
    def area(self) -> int:
        return sum(leaf.area for leaf in self.leaves)


def enclosing_root(regions: Sequence[IopRegion]) -> Tuple[GridPoint, int]:
    """Smallest power-of-two square anchored at the lower-left of the union bounding box"""
    if not regions:
        raise DecompositionError("no regions to enclose")
    x0 = min(r.origin.x for r in regions)
    y0 = min(r.origin.y for r in regions)
    x1 = max(r.origin.x + r.width for r in regions)
    y1 = max(r.origin.y + r.height for r in regions)
    side = max(x1 - x0, y1 - y0)
    return GridPoint(x0, y0), (side - 1).bit_length()


def build_quadtree(region: IopRegion, delta: int, root: Optional[Tuple[GridPoint, int]] = None) -> Quadtree:
    """Subdivide the root until every cell is fully inside or empty, then until area <= delta"""
    if delta < 1:
        raise DecompositionError("delta must be at least 1")
    root_origin, q = root if root is not None else enclosing_root([region])
    side = 1 << q
    col0 = region.origin.x - root_origin.x
    row0 = region.origin.y - root_origin.y
    if col0 < 0 or row0 < 0 or col0 + region.width > side or row0 + region.height > side:
        raise DecompositionError("region does not fit inside the root cell")

    frame = np.zeros((side, side), dtype=np.int64)
    frame[row0:row0 + region.height, col0:col0 + region.width] = region.mask
    integral = np.zeros((side + 1, side + 1), dtype=np.int64)
    integral[1:, 1:] = frame.cumsum(axis=0).cumsum(axis=1)

    def count(col: int, row: int, size: int) -> int:
        return int(integral[row + size, col + size] - integral[row, col + size]
                   - integral[row + size, col] + integral[row, col])

    leaves: List[QuadCell] = []
    stack = [(0, 0, side, 0)]
    while stack:
        col, row, size, depth = stack.pop()
        inside = count(col, row, size)
        if inside == 0:
            continue
        if inside == size * size and (size * size <= delta or size == 1):
            leaves.append(QuadCell(root_origin.offset(col, row), size, depth))
            continue
        half = size // 2
        for dc, dr in ((1, 1), (0, 1), (1, 0), (0, 0)):
            stack.append((col + dc * half, row + dr * half, half, depth + 1))

    leaves.sort(key=lambda c: (c.origin.x, c.origin.y))
    logger.debug("quadtree q=%d delta=%d with %d leaves", q, delta, len(leaves))
    return Quadtree(root_origin, q, tuple(leaves), delta)


@dataclass(frozen=True)
class SequencedCell:
    cell: QuadCell
    entry_corner: Corner
    exit_corner: Corner
    hilbert_key: int
    s: Optional[GridPoint] = None
    t: Optional[GridPoint] = None


@dataclass(frozen=True)
class CellSequence:
    items: Tuple[SequencedCell, ...]
    root_origin: GridPoint
    root_exponent: int

    def __len__(self) -> int:
        return len(self.items)

    @property
    def cells(self) -> List[QuadCell]:
        return [item.cell for item in self.items]

    @property
    def min_key(self) -> int:
        return min(item.hilbert_key for item in self.items)


def _ancestors(tree: Quadtree) -> Set[Tuple[int, int, int]]:
    nodes = set()
    side = tree.root_size
    for leaf in tree.leaves:
        col = leaf.origin.x - tree.root_origin.x
        row = leaf.origin.y - tree.root_origin.y
        size = leaf.size
        while size <= side:
            nodes.add((col - col % size, row - row % size, size))
            size *= 2
    return nodes


def hilbert_order(tree: Quadtree, global_entry: Corner = Corner.SW, global_exit: Corner = Corner.SE) -> CellSequence:
    """Order the leaves along the Hilbert curve that enters the root at global_entry and leaves at global_exit.

    Keys are base-4 digit paths padded to the root depth, so a leaf's key is the
    first order-q index inside its cell and leaves of any depth compare directly.
    """
    check_corner_pair(global_entry, global_exit)
    wanted = _ancestors(tree)
    leaves: Dict[Tuple[int, int, int], QuadCell] = {}
    for leaf in tree.leaves:
        leaves[(leaf.origin.x - tree.root_origin.x, leaf.origin.y - tree.root_origin.y, leaf.size)] = leaf

    items: List[SequencedCell] = []
    q = tree.root_exponent
    stack = [(0, 0, tree.root_size, 0, global_entry, global_exit, 0)]
    while stack:
        col, row, size, depth, a, b, key = stack.pop()
        if (col, row, size) not in wanted:
            continue
        leaf = leaves.get((col, row, size))
        if leaf is not None:
            items.append(SequencedCell(leaf, a, b, key))
            continue
        d = _other_neighbor(a, b)
        c = _other_neighbor(b, a)
        half = size // 2
        step = 4 ** (q - depth - 1)
        children = ((a, a, d), (d, a, b), (c, a, b), (b, c, b))
        for digit in reversed(range(4)):
            quadrant, entry, exit = children[digit]
            stack.append((col + quadrant.dx * half, row + quadrant.dy * half, half, depth + 1,
                          entry, exit, key + digit * step))

    return CellSequence(tuple(items), tree.root_origin, q)


def order_components(trees: Sequence[Quadtree], global_entry: Corner = Corner.SW,
                     global_exit: Corner = Corner.SE) -> List[CellSequence]:
    """Hilbert sequences for components sharing one root, ordered by their first key"""
    sequences = [hilbert_order(tree, global_entry, global_exit) for tree in trees]
    return sorted((seq for seq in sequences if seq.items), key=lambda seq: seq.min_key)


def assign_entry_exit(seq: CellSequence, graphs: Optional[Sequence[DualGraph]] = None) -> CellSequence:
    """Set s and t to the pixels nearest the cell's Hilbert entry and exit corners"""
    items = []
    for k, item in enumerate(seq.items):
        s = item.cell.corner_pixel(item.entry_corner)
        t = item.cell.corner_pixel(item.exit_corner)
        if graphs is not None and not (graphs[k].has_vertex(s) and graphs[k].has_vertex(t)):
            raise DecompositionError(f"cell {k} graph lacks its corner pixels")
        items.append(replace(item, s=s, t=t))
    return replace(seq, items=tuple(items))


def hilbert_polyline(seq: CellSequence) -> List[Tuple[float, float]]:
    """Centres of the sequenced cells, in pixel units"""
    return [item.cell.center() for item in seq.items]
