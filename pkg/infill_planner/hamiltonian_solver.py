# hamiltonian_solver.py
"""
Per-cell path optimisation.

A cell is a DualGraph with terminals s and t. The objective of a Hamiltonian
s-t path is alpha * (sum of edge weights) + (1 - alpha) * (number of 90 degree
turns). The heuristic solves the degree-relaxed problem exactly (an s-t path
plus disjoint cycles), merges cycles with square exchanges along a minimum
spanning forest, then merges the rest into the path.
"""

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from layer_geometry import DualGraph, GridPoint

if TYPE_CHECKING:
    from multilayer_planner import SolverConfig

logger = logging.getLogger(__name__)

_DENSE_TABLE_BYTES = 1 << 28
_CLOCK_CHECK = 512


class DisconnectedGraphError(ValueError):
    pass


class NoHamiltonianPath(ValueError):
    pass


class RelaxationInfeasible(RuntimeError):
    pass


class SolverFailure(RuntimeError):
    """No Hamiltonian path could be produced; cover holds the best partial result, if any"""

    def __init__(self, message: str, cover: Optional["CycleCover"] = None):
        super().__init__(message)
        self.cover = cover


class NonHamiltonianResult(RuntimeError):
    """A cycle shares no exchange square with the path"""

    def __init__(self, message: str, cover: "CycleCover"):
        super().__init__(message)
        self.cover = cover


def is_turn(graph: DualGraph, i: int, j: int, k: int) -> bool:
    """True when i -> j -> k bends by 90 degrees at j"""
    a, b, c = graph.vertices[i], graph.vertices[j], graph.vertices[k]
    return (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y) == 0


def path_turns(graph: DualGraph, ids: Sequence[int]) -> int:
    return sum(1 for a, b, c in zip(ids, ids[1:], ids[2:]) if is_turn(graph, a, b, c))


def cycle_turns(graph: DualGraph, ids: Sequence[int]) -> int:
    n = len(ids)
    return sum(1 for k in range(n) if is_turn(graph, ids[k - 1], ids[k], ids[(k + 1) % n]))


def path_weight(graph: DualGraph, ids: Sequence[int]) -> float:
    return sum(graph.weight(a, b) for a, b in zip(ids, ids[1:]))


def cycle_weight(graph: DualGraph, ids: Sequence[int]) -> float:
    return sum(graph.weight(ids[k - 1], ids[k]) for k in range(len(ids)))


@dataclass(frozen=True)
class PathSolution:
    vertices: Tuple[GridPoint, ...]
    edge_cost: float
    turn_count: int
    straight_count: int
    objective: float
    alpha: float
    method: str
    suboptimal: bool = False

    @property
    def s(self) -> GridPoint:
        return self.vertices[0]

    @property
    def t(self) -> GridPoint:
        return self.vertices[-1]

    def translated(self, dx: int, dy: int) -> "PathSolution":
        return replace(self, vertices=tuple(p.offset(dx, dy) for p in self.vertices))


def make_solution(graph: DualGraph, ids: Sequence[int], alpha: float, method: str,
                  suboptimal: bool = False) -> PathSolution:
    edge_cost = path_weight(graph, ids)
    turns = path_turns(graph, ids)
    return PathSolution(
        vertices=tuple(graph.vertices[i] for i in ids),
        edge_cost=edge_cost,
        turn_count=turns,
        straight_count=max(0, len(ids) - 2 - turns),
        objective=alpha * edge_cost + (1 - alpha) * turns,
        alpha=alpha,
        method=method,
        suboptimal=suboptimal,
    )


def is_hamiltonian_path(graph: DualGraph, vertices: Sequence[GridPoint]) -> bool:
    if len(vertices) != len(graph) or len(set(vertices)) != len(vertices):
        return False
    if not all(graph.has_vertex(p) for p in vertices):
        return False
    ids = [graph.index_of(p) for p in vertices]
    if graph.s is not None and (ids[0] != graph.s or ids[-1] != graph.t):
        return False
    return all(graph.edge_id(a, b) is not None for a, b in zip(ids, ids[1:]))


@dataclass(frozen=True)
class CycleCover:
    path: Tuple[int, ...]
    cycles: Tuple[Tuple[int, ...], ...] = ()
    suboptimal: bool = False

    @property
    def vertex_count(self) -> int:
        return len(self.path) + sum(len(c) for c in self.cycles)

    def cost(self, graph: DualGraph, alpha: float) -> float:
        weight = path_weight(graph, self.path) + sum(cycle_weight(graph, c) for c in self.cycles)
        turns = path_turns(graph, self.path) + sum(cycle_turns(graph, c) for c in self.cycles)
        return alpha * weight + (1 - alpha) * turns


@dataclass(frozen=True)
class MipModel:
    """Directed-arc model of the turn-cost Hamiltonian path problem.

    Absent edges are not modelled. Two-cycles are excluded with x_ij + x_ji <= 1.
    """

    graph: DualGraph
    alpha: float
    subtours: bool
    arcs: Tuple[Tuple[int, int], ...]
    arc_weights: Tuple[float, ...]
    turn_triples: Tuple[Tuple[int, int, int, int], ...]

    @property
    def big_m(self) -> int:
        return len(self.graph)

    @property
    def s(self) -> int:
        return self.graph.s

    @property
    def t(self) -> int:
        return self.graph.t

    def turn_indicator(self, i: int, j: int, k: int) -> int:
        return 1 if is_turn(self.graph, i, j, k) else 0

    def to_lp(self) -> str:
        """CPLEX LP text for cross-checking with an external MIP solver"""
        n = len(self.graph)
        s, t = self.s, self.t
        x = lambda i, j: f"x_{i}_{j}"
        lines = ["\\ turn-cost hamiltonian path", "Minimize"]
        terms = [f"{_num(self.alpha * w)} {x(i, j)}" for (i, j), w in zip(self.arcs, self.arc_weights)]
        terms += [f"{_num(1 - self.alpha)} c_{j}" for j in range(n)]
        lines.append(" obj: " + " + ".join(terms))
        lines.append("Subject To")
        out_arcs: Dict[int, List[Tuple[int, int]]] = {v: [] for v in range(n)}
        in_arcs: Dict[int, List[Tuple[int, int]]] = {v: [] for v in range(n)}
        for i, j in self.arcs:
            out_arcs[i].append((i, j))
            in_arcs[j].append((i, j))
        for v in range(n):
            out_rhs = 0 if v == t else 1
            in_rhs = 0 if v == s else 1
            if out_arcs[v]:
                lines.append(f" out_{v}: " + " + ".join(x(*a) for a in out_arcs[v]) + f" = {out_rhs}")
                lines.append(f" in_{v}: " + " + ".join(x(*a) for a in in_arcs[v]) + f" = {in_rhs}")
        for i, j in self.arcs:
            if i < j:
                lines.append(f" pair_{i}_{j}: {x(i, j)} + {x(j, i)} <= 1")
        for i, j, k, a in self.turn_triples:
            if a:
                lines.append(f" turn_{i}_{j}_{k}: c_{j} - {x(i, j)} - {x(j, k)} >= -1")
        if self.subtours:
            for i, j in self.arcs:
                if j != s:
                    lines.append(f" mtz_{i}_{j}: u_{i} - u_{j} + {n} {x(i, j)} <= {n - 1}")
        lines.append("Bounds")
        for j in range(n):
            lines.append(f" c_{j} = 0" if j in (s, t) else f" c_{j} >= 0")
        if self.subtours:
            for v in range(n):
                lines.append(f" u_{v} = 1" if v == s else f" 2 <= u_{v} <= {n}")
        lines.append("Binaries")
        lines.extend(f" {x(i, j)}" for i, j in self.arcs)
        lines.append("End")
        return "\n".join(lines) + "\n"


def _num(value: float) -> str:
    return f"{value:.12g}"


def build_mip(graph: DualGraph, alpha: float, subtours: bool = False) -> MipModel:
    if graph.s is None or graph.t is None:
        raise ValueError("graph needs s and t before building a model")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if not graph.is_connected():
        raise DisconnectedGraphError("cell graph is not connected")
    arcs, weights = [], []
    for (i, j), w in zip(graph.edges, graph.weights):
        arcs += [(i, j), (j, i)]
        weights += [w, w]
    triples = []
    for j in range(len(graph)):
        nbrs = graph.neighbors(j)
        for i in nbrs:
            for k in nbrs:
                if i != k:
                    triples.append((i, j, k, 1 if is_turn(graph, i, j, k) else 0))
    return MipModel(graph, alpha, subtours, tuple(arcs), tuple(weights), tuple(triples))


class _GridFrame:
    """Vertices laid out row by row; transpose swaps x and y so rows can be the long axis"""

    def __init__(self, graph: DualGraph, transpose: bool):
        self.graph = graph
        xs = [p.x for p in graph.vertices]
        ys = [p.y for p in graph.vertices]
        x0, y0 = min(xs), min(ys)
        cols = [(y - y0) if transpose else (x - x0) for x, y in zip(xs, ys)]
        rows = [(x - x0) if transpose else (y - y0) for x, y in zip(xs, ys)]
        self.width = max(cols) + 1
        self.height = max(rows) + 1
        self.vid = np.full((self.height, self.width), -1, dtype=np.int64)
        for k, (c, r) in enumerate(zip(cols, rows)):
            self.vid[r, c] = k
        self.right = np.full((self.height, self.width), np.nan)
        self.up = np.full((self.height, self.width), np.nan)
        for (i, j), w in zip(graph.edges, graph.weights):
            ri, ci, rj, cj = rows[i], cols[i], rows[j], cols[j]
            if ri == rj:
                self.right[ri, min(ci, cj)] = w
            else:
                self.up[min(ri, rj), ci] = w
        self.required = [2] * len(graph)
        self.required[graph.s] = 1
        self.required[graph.t] = 1

    @property
    def positions(self) -> int:
        return self.width * self.height

    def effective_width(self) -> int:
        """Largest number of profile bits that can be set at once"""
        vert = ~np.isnan(self.up)
        done = np.zeros(vert.shape, dtype=np.int64)
        done[:, 1:] = np.cumsum(vert, axis=1)[:, :-1]
        pending = np.zeros(vert.shape, dtype=np.int64)
        pending[1:] = np.cumsum(vert[:, ::-1], axis=1)[:, ::-1][:-1]
        return int((done + pending).max()) + 1

    def options(self, row: int, col: int, alpha: float) -> List[Tuple[int, int, int, int, float]]:
        """(from below, from left, to right, up, cost) choices at one position, cheapest first"""
        k = self.vid[row, col]
        if k < 0:
            return [(0, 0, 0, 0, 0.0)]
        w_below = self.up[row - 1, col] if row > 0 else math.nan
        w_left = self.right[row, col - 1] if col > 0 else math.nan
        w_right = self.right[row, col]
        w_up = self.up[row, col]
        req = self.required[k]
        found = []
        for u in ((0, 1) if not math.isnan(w_below) else (0,)):
            for l in ((0, 1) if not math.isnan(w_left) else (0,)):
                for r in ((0, 1) if not math.isnan(w_right) else (0,)):
                    for o in ((0, 1) if not math.isnan(w_up) else (0,)):
                        if u + l + r + o != req:
                            continue
                        turn = 1 if req == 2 and not (l and r) and not (u and o) else 0
                        cost = alpha * ((w_right if r else 0.0) + (w_up if o else 0.0)) + (1 - alpha) * turn
                        found.append((u, l, r, o, cost))
        found.sort(key=lambda opt: opt[4])
        return found

    def edges_from_picks(self, picks: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
        edges = []
        for step, (r, o) in enumerate(picks):
            row, col = divmod(step, self.width)
            if r:
                edges.append((int(self.vid[row, col]), int(self.vid[row, col + 1])))
            if o:
                edges.append((int(self.vid[row, col]), int(self.vid[row + 1, col])))
        return edges


def cover_from_edges(graph: DualGraph, edges: Sequence[Tuple[int, int]], suboptimal: bool = False) -> CycleCover:
    adj: List[Set[int]] = [set() for _ in graph.vertices]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    return _cover_from_adjacency(graph, adj, suboptimal)


def _cover_from_adjacency(graph: DualGraph, adj: Sequence[Set[int]], suboptimal: bool = False) -> CycleCover:
    s, t = graph.s, graph.t
    path = [s]
    seen = {s}
    prev = None
    while path[-1] != t:
        nxt = [v for v in adj[path[-1]] if v != prev]
        prev = path[-1]
        path.append(nxt[0])
        seen.add(nxt[0])
    cycles = []
    for start in range(len(graph)):
        if start in seen:
            continue
        cycle = [start]
        seen.add(start)
        prev, cur = start, min(adj[start])
        while cur != start:
            cycle.append(cur)
            seen.add(cur)
            prev, cur = cur, next(v for v in adj[cur] if v != prev)
        cycles.append(tuple(cycle))
    return CycleCover(tuple(path), tuple(cycles), suboptimal)


class RelaxationBackend:
    name = "backend"

    def solve(self, model: MipModel, time_limit: float) -> CycleCover:
        raise NotImplementedError


class ProfileBackend(RelaxationBackend):
    """Exact transfer over edge-occupancy profiles, one grid position at a time.

    Profile bit c (c < width) is the vertical edge crossing column c at the
    frontier; bit width is the horizontal edge entering the next position.
    A dense table is used while it fits, otherwise only reachable profiles are kept.
    """

    name = "profile"

    def __init__(self, max_profile_bits: int = 18):
        self.max_profile_bits = max_profile_bits

    def frame_for(self, graph: DualGraph) -> Optional[Tuple[_GridFrame, bool]]:
        frames = sorted((_GridFrame(graph, flag) for flag in (False, True)), key=lambda f: (f.width, f.height))
        dense = frames[0]
        if dense.width + 1 <= self.max_profile_bits and (1 << (dense.width + 1)) * dense.positions <= _DENSE_TABLE_BYTES:
            return dense, True
        sparse = min(frames, key=lambda f: (f.effective_width(), f.width))
        if sparse.effective_width() <= self.max_profile_bits and sparse.width + 1 < 63:
            return sparse, False
        return None

    def accepts(self, model: MipModel) -> bool:
        return self.frame_for(model.graph) is not None

    def solve(self, model: MipModel, time_limit: float) -> CycleCover:
        chosen = self.frame_for(model.graph)
        if chosen is None:
            raise RelaxationInfeasible("profile too wide for this backend")
        frame, dense = chosen
        picks = self._dense(frame, model.alpha) if dense else self._sparse(frame, model.alpha)
        return cover_from_edges(model.graph, frame.edges_from_picks(picks))

    def _dense(self, frame: _GridFrame, alpha: float) -> List[Tuple[int, int]]:
        w = frame.width
        values = np.full(1 << (w + 1), np.inf)
        values[0] = 0.0
        choices: List[Optional[np.ndarray]] = []
        for row in range(frame.height):
            for col in range(w):
                opts = frame.options(row, col, alpha)
                if len(opts) == 1 and opts[0][:4] == (0, 0, 0, 0):
                    choices.append(None)
                    continue
                view = values.reshape(2, 1 << (w - 1 - col), 2, 1 << col)
                fresh = np.full(view.shape, np.inf)
                choice = np.zeros(view.shape, dtype=np.uint8)
                for u, l, r, o, cost in opts:
                    candidate = view[l, :, u, :] + cost
                    target = fresh[r, :, o, :]
                    better = candidate < target
                    target[better] = candidate[better]
                    choice[r, :, o, :][better] = u * 2 + l
                values = fresh.reshape(-1)
                choices.append(choice.reshape(-1))
        if not np.isfinite(values[0]):
            raise RelaxationInfeasible("no degree-feasible cover exists")

        picks: List[Tuple[int, int]] = [(0, 0)] * frame.positions
        state = 0
        for step in reversed(range(frame.positions)):
            col = step % w
            if choices[step] is None:
                continue
            packed = int(choices[step][state])
            r, o = (state >> w) & 1, (state >> col) & 1
            picks[step] = (r, o)
            state = _set_bits(state, col, packed >> 1, w, packed & 1)
        return picks

    def _sparse(self, frame: _GridFrame, alpha: float) -> List[Tuple[int, int]]:
        w = frame.width
        codes = np.zeros(1, dtype=np.int64)
        values = np.zeros(1)
        history: List[Tuple[np.ndarray, np.ndarray]] = []
        for row in range(frame.height):
            for col in range(w):
                parts_codes, parts_values, parts_choice = [], [], []
                for u, l, r, o, cost in frame.options(row, col, alpha):
                    sel = (((codes >> col) & 1) == u) & (((codes >> w) & 1) == l)
                    if not sel.any():
                        continue
                    moved = codes[sel] & ~np.int64((1 << col) | (1 << w))
                    parts_codes.append(moved | np.int64((o << col) | (r << w)))
                    parts_values.append(values[sel] + cost)
                    parts_choice.append(np.full(int(sel.sum()), u * 2 + l, dtype=np.uint8))
                if not parts_codes:
                    raise RelaxationInfeasible("no degree-feasible cover exists")
                all_codes = np.concatenate(parts_codes)
                all_values = np.concatenate(parts_values)
                all_choice = np.concatenate(parts_choice)
                order = np.lexsort((np.arange(len(all_codes)), all_values, all_codes))
                all_codes, all_values, all_choice = all_codes[order], all_values[order], all_choice[order]
                first = np.ones(len(all_codes), dtype=bool)
                first[1:] = all_codes[1:] != all_codes[:-1]
                codes, values = all_codes[first], all_values[first]
                history.append((codes, all_choice[first]))
        if len(codes) == 0 or codes[0] != 0:
            raise RelaxationInfeasible("no degree-feasible cover exists")

        picks: List[Tuple[int, int]] = [(0, 0)] * frame.positions
        state = 0
        for step in reversed(range(frame.positions)):
            col = step % w
            step_codes, step_choice = history[step]
            packed = int(step_choice[np.searchsorted(step_codes, state)])
            picks[step] = ((state >> w) & 1, (state >> col) & 1)
            state = _set_bits(state, col, packed >> 1, w, packed & 1)
        return picks


def _set_bits(state: int, col: int, below: int, w: int, left: int) -> int:
    state &= ~((1 << col) | (1 << w))
    return state | (below << col) | (left << w)


class BranchAndBoundBackend(RelaxationBackend):
    """Depth-first search over the same position-by-position choices.

    Bounds with the cheapest edge weight times the edges still to place, and
    drops a partial profile reached before at no greater cost. Returns the
    incumbent marked suboptimal when the time limit runs out.
    """

    name = "branch_and_bound"

    def solve(self, model: MipModel, time_limit: float) -> CycleCover:
        graph = model.graph
        frame = min((_GridFrame(graph, flag) for flag in (False, True)), key=lambda f: f.effective_width())
        alpha = model.alpha
        w = frame.width
        steps = frame.positions
        w_min = min(graph.weights) if graph.weights else 0.0
        total_edges = len(graph) - 1
        options = [frame.options(*divmod(step, w), alpha) for step in range(steps)]

        deadline = time.monotonic() + time_limit
        best_cost, best_picks = math.inf, None
        seen: Dict[Tuple[int, int], float] = {}
        picks: List[Tuple[int, int]] = [(0, 0)] * steps
        # frame: step, state, cost, edges placed, option index
        stack = [[0, 0, 0.0, 0, 0]]
        ticks = 0
        timed_out = False
        while stack:
            ticks += 1
            if ticks % _CLOCK_CHECK == 0 and time.monotonic() > deadline:
                timed_out = True
                break
            top = stack[-1]
            step, state, cost, placed, idx = top
            col = step % w
            opts = options[step]
            below, left = (state >> col) & 1, (state >> w) & 1
            while idx < len(opts) and (opts[idx][0] != below or opts[idx][1] != left):
                idx += 1
            if idx >= len(opts):
                stack.pop()
                continue
            top[4] = idx + 1
            _, _, r, o, step_cost = opts[idx]
            new_state = _set_bits(state, col, o, w, r)
            new_cost = cost + step_cost
            new_placed = placed + r + o
            picks[step] = (r, o)
            if step + 1 == steps:
                if new_state == 0 and new_cost < best_cost:
                    best_cost, best_picks = new_cost, list(picks)
                continue
            if new_cost + alpha * w_min * (total_edges - new_placed) >= best_cost:
                continue
            key = (step + 1, new_state)
            if seen.get(key, math.inf) <= new_cost:
                continue
            seen[key] = new_cost
            stack.append([step + 1, new_state, new_cost, new_placed, 0])

        if best_picks is None:
            if timed_out:
                raise SolverFailure("relaxation found no cover within the time limit")
            raise RelaxationInfeasible("no degree-feasible cover exists")
        return cover_from_edges(graph, frame.edges_from_picks(best_picks), suboptimal=timed_out)


def solve_relaxed(model: MipModel, time_limit: float = 30.0, max_profile_bits: int = 18,
                  backend: Optional[RelaxationBackend] = None) -> CycleCover:
    """Cheapest s-t path plus disjoint cycles covering every vertex once"""
    if model.subtours:
        raise ValueError("relaxation expects a model without subtour constraints")
    graph = model.graph
    if len(graph) == 1:
        return CycleCover((graph.s,))
    if backend is None:
        profile = ProfileBackend(max_profile_bits)
        backend = profile if profile.accepts(model) else BranchAndBoundBackend()
    cover = backend.solve(model, time_limit)
    logger.debug("relaxed cover via %s: %d cycles", backend.name, len(cover.cycles))
    return cover


# square exchanges

Square = Tuple[int, int, int, int]


def unit_squares(graph: DualGraph) -> List[Square]:
    """(a, b, c, d) counterclockwise from the lower-left, all four sides present"""
    squares = []
    for a, p in enumerate(graph.vertices):
        corners = [p.offset(1, 0), p.offset(1, 1), p.offset(0, 1)]
        if not all(graph.has_vertex(q) for q in corners):
            continue
        b, c, d = (graph.index_of(q) for q in corners)
        if all(graph.edge_id(i, j) is not None for i, j in ((a, b), (b, c), (c, d), (d, a))):
            squares.append((a, b, c, d))
    return squares


def _exchanges(square: Square):
    a, b, c, d = square
    # (removed, added)
    yield ((a, b), (d, c)), ((a, d), (b, c))
    yield ((a, d), (b, c)), ((a, b), (d, c))


class _Tours:
    """Mutable cover: adjacency sets and a component label per vertex, 0 for the path"""

    def __init__(self, graph: DualGraph, cover: CycleCover, alpha: float):
        self.graph = graph
        self.alpha = alpha
        self.adj: List[Set[int]] = [set() for _ in graph.vertices]
        self.label = [0] * len(graph)
        self._link(cover.path, closed=False, label=0)
        for k, cycle in enumerate(cover.cycles, start=1):
            self._link(cycle, closed=True, label=k)
        self.suboptimal = cover.suboptimal

    def _link(self, ids: Sequence[int], closed: bool, label: int) -> None:
        pairs = list(zip(ids, ids[1:]))
        if closed:
            pairs.append((ids[-1], ids[0]))
        for i, j in pairs:
            self.adj[i].add(j)
            self.adj[j].add(i)
        for v in ids:
            self.label[v] = label

    def _turn(self, v: int, nbrs: Set[int]) -> int:
        if len(nbrs) != 2:
            return 0
        i, k = sorted(nbrs)
        return 1 if is_turn(self.graph, i, v, k) else 0

    def exchange_cost(self, square: Square, removed, added) -> Optional[float]:
        (p, q), (r, s_) = removed
        if q not in self.adj[p] or s_ not in self.adj[r]:
            return None
        if self.label[p] == self.label[r]:
            return None
        before = sum(self._turn(v, self.adj[v]) for v in square)
        after = 0
        for v in square:
            nbrs = set(self.adj[v])
            for i, j in removed:
                if v == i:
                    nbrs.discard(j)
                elif v == j:
                    nbrs.discard(i)
            for i, j in added:
                if v == i:
                    nbrs.add(j)
                elif v == j:
                    nbrs.add(i)
            after += self._turn(v, nbrs)
        weight = sum(self.graph.weight(i, j) for i, j in added) - sum(self.graph.weight(i, j) for i, j in removed)
        return self.alpha * weight + (1 - self.alpha) * (after - before)

    def apply(self, removed, added) -> None:
        keep = min(self.label[removed[0][0]], self.label[removed[1][0]])
        drop = max(self.label[removed[0][0]], self.label[removed[1][0]])
        for i, j in removed:
            self.adj[i].discard(j)
            self.adj[j].discard(i)
        for i, j in added:
            self.adj[i].add(j)
            self.adj[j].add(i)
        self.label = [keep if lab == drop else lab for lab in self.label]

    def cycle_labels(self) -> List[int]:
        return sorted({lab for lab in self.label if lab != 0})

    def to_cover(self) -> CycleCover:
        return _cover_from_adjacency(self.graph, self.adj, self.suboptimal)


def join_cycles(cover: CycleCover, graph: DualGraph, alpha: float) -> CycleCover:
    """Merge cycles pairwise along a minimum spanning forest of the cycle adjacency graph"""
    if len(cover.cycles) < 2:
        return cover
    tours = _Tours(graph, cover, alpha)
    squares = unit_squares(graph)
    while len(tours.cycle_labels()) > 1:
        best: Dict[Tuple[int, int], Tuple[float, int, int]] = {}
        moves = {}
        for n_sq, square in enumerate(squares):
            for n_ex, (removed, added) in enumerate(_exchanges(square)):
                la, lb = tours.label[removed[0][0]], tours.label[removed[1][0]]
                if la == 0 or lb == 0:
                    continue
                cost = tours.exchange_cost(square, removed, added)
                if cost is None:
                    continue
                key = (min(la, lb), max(la, lb))
                rank = (cost, n_sq, n_ex)
                if key not in best or rank < best[key]:
                    best[key] = rank
                    moves[key] = (square, removed, added)
        if not best:
            break
        cycle_graph = nx.Graph()
        cycle_graph.add_nodes_from(tours.cycle_labels())
        for key in sorted(best):
            cycle_graph.add_edge(*key, weight=best[key][0])
        merged = 0
        for u, v, _ in nx.minimum_spanning_edges(cycle_graph, algorithm="kruskal", weight="weight", data=True):
            square, removed, added = moves[(min(u, v), max(u, v))]
            if tours.exchange_cost(square, removed, added) is None:
                continue
            tours.apply(removed, added)
            merged += 1
        if merged == 0:
            break
    result = tours.to_cover()
    logger.debug("join_cycles: %d -> %d cycles", len(cover.cycles), len(result.cycles))
    return result


def join_cycles_with_path(cover: CycleCover, graph: DualGraph, alpha: float) -> PathSolution:
    """Fold every cycle into the s-t path, fewest usable squares first"""
    tours = _Tours(graph, cover, alpha)
    squares = unit_squares(graph)
    while tours.cycle_labels():
        counts: Dict[int, int] = {}
        cheapest: Dict[int, Tuple[Tuple[float, int, int], Tuple]] = {}
        for n_sq, square in enumerate(squares):
            for n_ex, (removed, added) in enumerate(_exchanges(square)):
                la, lb = tours.label[removed[0][0]], tours.label[removed[1][0]]
                if (la == 0) == (lb == 0):
                    continue
                cost = tours.exchange_cost(square, removed, added)
                if cost is None:
                    continue
                cycle = max(la, lb)
                counts[cycle] = counts.get(cycle, 0) + 1
                rank = (cost, n_sq, n_ex)
                if cycle not in cheapest or rank < cheapest[cycle][0]:
                    cheapest[cycle] = (rank, (removed, added))
        if not counts:
            raise NonHamiltonianResult("a cycle shares no exchange square with the path", tours.to_cover())
        cycle = min(counts, key=lambda lab: (counts[lab], lab))
        removed, added = cheapest[cycle][1]
        tours.apply(removed, added)
    merged = tours.to_cover()
    return make_solution(graph, merged.path, alpha, "heuristic", merged.suboptimal)


# exact searches

def _colour(p: GridPoint) -> int:
    return (p.x + p.y) % 2


def solve_full(model: MipModel, time_limit: float = 120.0) -> PathSolution:
    """Branch-and-bound over s-t paths with parity, dead-end and connectivity pruning"""
    graph = model.graph
    alpha = model.alpha
    n, s, t = len(graph), graph.s, graph.t
    if n == 1:
        return make_solution(graph, [s], alpha, "full")
    deadline = time.monotonic() + time_limit
    colour = [_colour(p) for p in graph.vertices]
    visited = [False] * n
    visited[s] = True
    path = [s]
    costs = [0.0]
    best_cost, best_path = math.inf, None

    def onward(v: int) -> int:
        return sum(1 for u in graph.neighbors(v) if not visited[u])

    def candidates(v: int):
        return iter(sorted((u for u in graph.neighbors(v) if not visited[u]), key=lambda u: (u == t, onward(u), u)))

    def viable(cur: int) -> bool:
        rest = [v for v in range(n) if not visited[v]]
        counts = [0, 0]
        counts[colour[cur]] += 1
        for v in rest:
            counts[colour[v]] += 1
        if (len(rest) + 1) % 2 == 0:
            if colour[cur] == colour[t] or counts[0] != counts[1]:
                return False
        elif colour[cur] != colour[t] or counts[colour[t]] != counts[1 - colour[t]] + 1:
            return False
        for v in rest:
            free = sum(1 for u in graph.neighbors(v) if not visited[u] or u == cur)
            if free < (1 if v == t else 2):
                return False
        start = [u for u in graph.neighbors(cur) if not visited[u]]
        if not start:
            return False
        reached = {start[0]}
        frontier = [start[0]]
        while frontier:
            v = frontier.pop()
            for u in graph.neighbors(v):
                if not visited[u] and u not in reached:
                    reached.add(u)
                    frontier.append(u)
        return len(reached) == len(rest)

    stack = [candidates(s)]
    ticks = 0
    timed_out = False
    while stack:
        ticks += 1
        if ticks % _CLOCK_CHECK == 0 and time.monotonic() > deadline:
            timed_out = True
            break
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            visited[path.pop()] = False
            costs.pop()
            continue
        if visited[nxt] or (nxt == t and len(path) != n - 1):
            continue
        step = alpha * graph.weight(path[-1], nxt)
        if len(path) >= 2 and is_turn(graph, path[-2], path[-1], nxt):
            step += 1 - alpha
        cost = costs[-1] + step
        if cost >= best_cost:
            continue
        if len(path) == n - 1:
            best_cost, best_path = cost, path + [nxt]
            continue
        visited[nxt] = True
        path.append(nxt)
        costs.append(cost)
        if not viable(nxt):
            visited[path.pop()] = False
            costs.pop()
            continue
        stack.append(candidates(nxt))

    if best_path is None:
        if timed_out:
            raise SolverFailure("full model found no path within the time limit")
        raise NoHamiltonianPath("no hamiltonian s-t path exists")
    return make_solution(graph, best_path, alpha, "full", suboptimal=timed_out)


def exact_oracle(graph: DualGraph, alpha: float) -> PathSolution:
    """Exhaustive search; the first optimum in lexicographic vertex order wins"""
    n, s, t = len(graph), graph.s, graph.t
    if s is None or t is None:
        raise ValueError("graph needs s and t")
    if n == 1:
        return make_solution(graph, [s], alpha, "oracle")
    visited = [False] * n
    visited[s] = True
    path = [s]
    best = [math.inf, None]

    def extend(cost: float) -> None:
        if cost >= best[0]:
            return
        cur = path[-1]
        if len(path) == n:
            if cur == t:
                best[0], best[1] = cost, list(path)
            return
        if cur == t:
            return
        for nxt in graph.neighbors(cur):
            if visited[nxt]:
                continue
            step = alpha * graph.weight(cur, nxt)
            if len(path) >= 2 and is_turn(graph, path[-2], cur, nxt):
                step += 1 - alpha
            visited[nxt] = True
            path.append(nxt)
            extend(cost + step)
            path.pop()
            visited[nxt] = False

    extend(0.0)
    if best[1] is None:
        raise NoHamiltonianPath(f"no hamiltonian path from {graph.vertices[s]} to {graph.vertices[t]}")
    return make_solution(graph, best[1], alpha, "oracle")


def feasible_rectangular(m: int, n: int, s: GridPoint, t: GridPoint) -> bool:
    """Whether the m x n grid (coordinates from 1) has a Hamiltonian s-t path"""
    if n > m:
        m, n = n, m
        s, t = GridPoint(s.y, s.x), GridPoint(t.y, t.x)
    colour = lambda p: (p.x + p.y) % 2
    if (m * n) % 2 == 0:
        if colour(s) == colour(t):
            return False
    elif colour(s) != 0 or colour(t) != 0:
        return False
    if n == 1 and ({s.x, t.x} != {1, m}):
        return False
    if n == 2 and s.x == t.x and 1 < s.x < m:
        return False
    if n == 3 and m % 2 == 0:
        flip = lambda p: GridPoint(m + 1 - p.x, p.y)
        for a, b in ((s, t), (t, s), (flip(s), flip(t)), (flip(t), flip(s))):
            if colour(a) != colour(b) and colour(a) != 0 and (a.x < b.x - 1 or (a.y == 2 and a.x < b.x)):
                return False
    return True


def fallback_runs(graph: DualGraph, cover: Optional[CycleCover]) -> List[List[GridPoint]]:
    """Print runs for a cell without a Hamiltonian path: the cover's path, then each cycle opened at its smallest vertex"""
    if cover is not None:
        runs = [list(cover.path)] + [list(c) for c in sorted(cover.cycles)]
    else:
        seen: Set[int] = set()
        runs = []
        start = graph.s
        while start is not None:
            run = [start]
            seen.add(start)
            while True:
                nxt = [u for u in graph.neighbors(run[-1]) if u not in seen]
                if not nxt:
                    break
                run.append(nxt[0])
                seen.add(nxt[0])
            runs.append(run)
            start = next((v for v in range(len(graph)) if v not in seen), None)
    return [[graph.vertices[i] for i in run] for run in runs]


def solve_cell(graph: DualGraph, alpha: float, config: "SolverConfig",
               warm_start: Optional[PathSolution] = None) -> PathSolution:
    """Best s-t Hamiltonian path for one joined cell; raises SolverFailure when none is found"""
    n = len(graph)
    if n == 1:
        solution = make_solution(graph, [graph.s], alpha, "trivial")
    elif n <= config.exact_threshold:
        try:
            solution = exact_oracle(graph, alpha)
        except NoHamiltonianPath as e:
            raise SolverFailure(str(e))
    else:
        solution = _solve_heuristic(graph, alpha, config)

    if warm_start is not None and warm_start.objective <= solution.objective:
        return warm_start
    return solution


def _solve_heuristic(graph: DualGraph, alpha: float, config: "SolverConfig") -> PathSolution:
    model = build_mip(graph, alpha, subtours=False)
    cover = None
    try:
        cover = solve_relaxed(model, config.relaxed_time_limit, config.max_profile_bits)
        cover = join_cycles(cover, graph, alpha)
        return join_cycles_with_path(cover, graph, alpha)
    except NonHamiltonianResult as e:
        logger.info("cycle joining left %d cycles, trying full model", len(e.cover.cycles))
        cover = e.cover
    except (RelaxationInfeasible, SolverFailure) as e:
        logger.info("relaxation failed (%s), trying full model", e)
    try:
        return solve_full(build_mip(graph, alpha, subtours=True), config.full_time_limit)
    except (SolverFailure, NoHamiltonianPath) as e:
        raise SolverFailure(str(e), cover)
