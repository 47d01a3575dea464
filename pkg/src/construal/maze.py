"""Grid mazes, cause-effect potentials and construed transition models.

Coordinates are ``(x, y)`` with ``x`` the column from the left and ``y`` the
row from the top.  Every grid cell is a state (index ``y * width + x``),
including walls and obstacle cells; passability lives entirely in the
potentials so that construals can disagree about it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import json
from typing import Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .mdp import TabularMDP

Cell = tuple[int, int]

ACTIONS = ("up", "down", "left", "right")
DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0))
DEFAULT_SLIP = 1e-5
DEFAULT_DISCOUNT = 0.99
TRANSFORMS = ("rot90", "rot180", "rot270", "flip_h", "flip_v")


class MazeParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class Obstacle:
    id: int
    cells: frozenset

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset(tuple(c) for c in self.cells))
        if not self.cells:
            raise ValueError(f"obstacle {self.id} has no cells")


@dataclass(frozen=True)
class GridMaze:
    width: int
    height: int
    walls: frozenset
    obstacles: tuple
    start: Cell
    goal: Cell
    slip: float = DEFAULT_SLIP

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(c) for c in self.walls))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        self._check()

    def _check(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("maze must have positive size")
        if not 0.0 <= self.slip < 1.0:
            raise ValueError("slip must lie in [0, 1)")
        for c in (self.start, self.goal, *self.walls):
            if not self.in_bounds(c):
                raise ValueError(f"cell {c} out of bounds")
        if self.start == self.goal:
            raise ValueError("start and goal coincide")
        seen = set(self.walls)
        for i, ob in enumerate(self.obstacles):
            if ob.id != i:
                raise ValueError("obstacle ids must be 0..N-1 in order")
            for c in ob.cells:
                if not self.in_bounds(c):
                    raise ValueError(f"obstacle {ob.id} cell {c} out of bounds")
                if c in seen:
                    raise ValueError(f"obstacle {ob.id} overlaps a wall or another obstacle at {c}")
                seen.add(c)
        for name, c in (("start", self.start), ("goal", self.goal)):
            if c in seen:
                raise ValueError(f"{name} {c} is covered by a wall or obstacle")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def index(self, c: Cell) -> int:
        return c[1] * self.width + c[0]

    def cell(self, i: int) -> Cell:
        return (i % self.width, i // self.width)

    @property
    def start_index(self) -> int:
        return self.index(self.start)

    @property
    def goal_index(self) -> int:
        return self.index(self.goal)

    def obstacle_cells(self) -> frozenset:
        return frozenset().union(*(ob.cells for ob in self.obstacles)) if self.obstacles else frozenset()

    def free_cells(self) -> list[Cell]:
        blocked = self.walls | self.obstacle_cells()
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in blocked]

    def without_obstacles(self) -> "GridMaze":
        return GridMaze(self.width, self.height, self.walls, (), self.start, self.goal, self.slip)


# -- text and JSON formats ---------------------------------------------------

def parse_maze(text: str, slip: float = DEFAULT_SLIP) -> GridMaze:
    """Read the ``#``/``.``/``S``/``G``/digit grid format."""
    rows = text.split("\n")
    while rows and rows[-1].strip() == "":
        rows.pop()
    rows = [r.rstrip("\r") for r in rows]
    if not rows:
        raise MazeParseError("empty maze")
    width = len(rows[0])
    walls, cells_by_digit = set(), {}
    start = goal = None
    for y, row in enumerate(rows):
        if len(row) != width:
            raise MazeParseError(f"row has length {len(row)}, expected {width}", y + 1)
        for x, ch in enumerate(row):
            if ch == ".":
                continue
            if ch == "#":
                walls.add((x, y))
            elif ch == "S":
                if start is not None:
                    raise MazeParseError("duplicate start 'S'", y + 1, x + 1)
                start = (x, y)
            elif ch == "G":
                if goal is not None:
                    raise MazeParseError("duplicate goal 'G'", y + 1, x + 1)
                goal = (x, y)
            elif ch.isdigit() and ch.isascii():
                cells_by_digit.setdefault(int(ch), set()).add((x, y))
            else:
                raise MazeParseError(f"unknown character {ch!r}", y + 1, x + 1)
    if start is None:
        raise MazeParseError("missing start 'S'")
    if goal is None:
        raise MazeParseError("missing goal 'G'")
    ids = sorted(cells_by_digit)
    if ids != list(range(len(ids))):
        raise MazeParseError(f"obstacle digits must be 0..N-1 without gaps, got {ids}")
    obstacles = tuple(Obstacle(i, frozenset(cells_by_digit[i])) for i in ids)
    return GridMaze(width, len(rows), frozenset(walls), obstacles, start, goal, slip)


def serialize_maze(maze: GridMaze) -> str:
    grid = [["."] * maze.width for _ in range(maze.height)]
    for x, y in maze.walls:
        grid[y][x] = "#"
    for ob in maze.obstacles:
        if ob.id > 9:
            raise ValueError("text format supports at most 10 obstacles")
        for x, y in ob.cells:
            grid[y][x] = str(ob.id)
    grid[maze.start[1]][maze.start[0]] = "S"
    grid[maze.goal[1]][maze.goal[0]] = "G"
    return "\n".join("".join(r) for r in grid)


def maze_to_json(maze: GridMaze) -> str:
    return json.dumps({
        "width": maze.width,
        "height": maze.height,
        "walls": sorted(list(c) for c in maze.walls),
        "obstacles": [{"id": ob.id, "cells": sorted(list(c) for c in ob.cells)}
                      for ob in maze.obstacles],
        "start": list(maze.start),
        "goal": list(maze.goal),
        "slip": maze.slip,
    })


def maze_from_json(text: str) -> GridMaze:
    d = json.loads(text)
    return GridMaze(
        d["width"], d["height"],
        frozenset(tuple(c) for c in d["walls"]),
        tuple(Obstacle(o["id"], frozenset(tuple(c) for c in o["cells"])) for o in d["obstacles"]),
        tuple(d["start"]), tuple(d["goal"]), d.get("slip", DEFAULT_SLIP),
    )


# -- geometric transforms ----------------------------------------------------

def transform_cell(c: Cell, op: str, width: int, height: int) -> Cell:
    x, y = c
    if op == "rot90":  # clockwise
        return (height - 1 - y, x)
    if op == "rot180":
        return (width - 1 - x, height - 1 - y)
    if op == "rot270":
        return (y, width - 1 - x)
    if op == "flip_h":
        return (width - 1 - x, y)
    if op == "flip_v":
        return (x, height - 1 - y)
    raise ValueError(f"unknown transform {op!r}")


def transform_maze(maze: GridMaze, op: str) -> GridMaze:
    w, h = maze.width, maze.height
    f = lambda c: transform_cell(c, op, w, h)  # noqa: E731
    nw, nh = (h, w) if op in ("rot90", "rot270") else (w, h)
    return GridMaze(
        nw, nh,
        frozenset(f(c) for c in maze.walls),
        tuple(Obstacle(ob.id, frozenset(f(c) for c in ob.cells)) for ob in maze.obstacles),
        f(maze.start), f(maze.goal), maze.slip,
    )


# -- construals ----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Construal:
    """Set of obstacle ids, stored as a bitmask."""

    bits: int = 0

    @classmethod
    def of(cls, ids: Iterable[int]) -> "Construal":
        bits = 0
        for i in ids:
            bits |= 1 << int(i)
        return cls(bits)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.bits.bit_length()) if self.bits >> i & 1)

    @property
    def cost(self) -> int:
        return bin(self.bits).count("1")

    def __contains__(self, i: int) -> bool:
        return bool(self.bits >> i & 1)

    def __len__(self) -> int:
        return self.cost

    def issubset(self, other: "Construal") -> bool:
        return self.bits & ~other.bits == 0

    def addition_cost(self, current: "Construal") -> int:
        """Number of obstacles in ``self`` missing from ``current``."""
        return bin(self.bits & ~current.bits).count("1")

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.ids)) + "}"


ConstrualLike = Union[Construal, int, Iterable[int]]


def as_construal(c: ConstrualLike) -> Construal:
    if isinstance(c, Construal):
        return c
    if isinstance(c, (int, np.integer)):
        return Construal(int(c))
    return Construal.of(c)


def full_construal(maze: GridMaze) -> Construal:
    return Construal((1 << maze.n_obstacles) - 1)


def all_construals(n_obstacles: int, max_size: Optional[int] = None) -> list[Construal]:
    """Every subset in bitmask order, optionally capped at ``max_size``."""
    out = [Construal(b) for b in range(1 << n_obstacles)]
    if max_size is not None:
        out = [c for c in out if c.cost <= max_size]
    return out


# -- effect potentials -------------------------------------------------------

def _action_index(a) -> int:
    return ACTIONS.index(a) if isinstance(a, str) else int(a)


@dataclass(frozen=True)
class EffectPotential:
    """A primitive cause-effect relationship ``phi(s' | s, a)``.

    The movement potential keeps an explicit sparse table.  Blocking
    potentials (walls, obstacles) only record the cells whose *entry* they
    forbid; every other weight is 1, including staying in place.
    """

    kind: str
    width: int
    height: int
    obstacle_id: Optional[int] = None
    blocked: frozenset = frozenset()
    table: Optional[sp.csr_array] = field(default=None, compare=False)

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def _index(self, s) -> int:
        return s[1] * self.width + s[0] if isinstance(s, tuple) else int(s)

    def weight(self, s, a, s_next) -> float:
        si, ai, ni = self._index(s), _action_index(a), self._index(s_next)
        if self.table is not None:
            return float(self.table[ai * self.n_states + si, ni])
        return 0.0 if (ni in self.blocked and ni != si) else 1.0

    def entry_mask(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Weights of the given ``(a*S + s, s')`` entries (blocking kinds)."""
        blocked = np.fromiter(self.blocked, dtype=int, count=len(self.blocked))
        s = rows % self.n_states
        return np.where(np.isin(cols, blocked) & (cols != s), 0.0, 1.0)


def _move_table(maze: GridMaze) -> sp.csr_array:
    n = maze.n_states
    rows, cols, vals = [], [], []
    for a, (dx, dy) in enumerate(DELTAS):
        for y in range(maze.height):
            for x in range(maze.width):
                s = maze.index((x, y))
                r = a * n + s
                nxt = (x + dx, y + dy)
                if maze.in_bounds(nxt):
                    rows += [r, r]
                    cols += [maze.index(nxt), s]
                    vals += [1.0 - maze.slip, maze.slip]
                else:
                    rows.append(r)
                    cols.append(s)
                    vals.append(1.0)
    table = sp.csr_array((vals, (rows, cols)), shape=(len(DELTAS) * n, n))
    table.eliminate_zeros()
    return table


@lru_cache(maxsize=64)
def build_effects(maze: GridMaze) -> tuple[EffectPotential, ...]:
    """``(Move, Walls, Obstacle_0, ..., Obstacle_{N-1})``."""
    w, h = maze.width, maze.height
    move = EffectPotential("move", w, h, table=_move_table(maze))
    walls = EffectPotential("walls", w, h, blocked=frozenset(maze.index(c) for c in maze.walls))
    obstacles = tuple(
        EffectPotential("obstacle", w, h, obstacle_id=ob.id,
                        blocked=frozenset(maze.index(c) for c in ob.cells))
        for ob in maze.obstacles
    )
    return (move, walls) + obstacles


@lru_cache(maxsize=64)
def _move_entries(maze: GridMaze):
    coo = build_effects(maze)[0].table.tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()


def compose_construed_mdp(maze: GridMaze, construal: ConstrualLike = 0,
                          discount: float = DEFAULT_DISCOUNT) -> TabularMDP:
    """Product of the movement, wall and chosen obstacle potentials.

    Weights are multiplied entrywise and renormalised per ``(s, a)``.  The
    movement potential has the smallest support, so the product is taken on
    its nonzero entries only.  The goal is absorbing with utility 0; every
    other state costs 1.
    """
    c = as_construal(construal)
    if c.bits >> maze.n_obstacles:
        raise ValueError(f"construal {c} names obstacles absent from the maze")
    effects = build_effects(maze)
    rows, cols, vals = _move_entries(maze)
    vals = vals.copy()
    chosen = [effects[1]] + [effects[2 + i] for i in c.ids]
    for phi in chosen:
        if phi.blocked:
            vals *= phi.entry_mask(rows, cols)
    n, m = maze.n_states, len(ACTIONS)
    P = sp.csr_array((vals, (rows, cols)), shape=(m * n, n))
    P.eliminate_zeros()
    sums = np.asarray(P.sum(axis=1)).ravel()
    P = sp.csr_array(sp.diags_array(1.0 / sums) @ P)

    g = maze.goal_index
    P = P.tolil()
    for a in range(m):
        P.rows[a * n + g] = [g]
        P.data[a * n + g] = [1.0]
    P = sp.csr_array(P)

    utility = -np.ones(n)
    utility[g] = 0.0
    terminal = np.zeros(n, dtype=bool)
    terminal[g] = True
    return TabularMDP(P, utility, discount, terminal, None, m)


def true_mdp(maze: GridMaze, discount: float = DEFAULT_DISCOUNT) -> TabularMDP:
    return compose_construed_mdp(maze, full_construal(maze), discount)


def reachable_cells(maze: GridMaze, mdp: Optional[TabularMDP] = None) -> list[int]:
    """States reachable from the start under any action sequence."""
    mdp = mdp if mdp is not None else true_mdp(maze)
    n = mdp.n_states
    adj = sp.csr_array(sum(mdp.action_block(a) for a in range(mdp.n_actions)))
    seen = np.zeros(n, dtype=bool)
    stack = [maze.start_index]
    seen[maze.start_index] = True
    while stack:
        s = stack.pop()
        if mdp.terminal[s]:
            continue
        for t in adj.indices[adj.indptr[s]:adj.indptr[s + 1]]:
            if not seen[t]:
                seen[t] = True
                stack.append(int(t))
    return [int(i) for i in np.flatnonzero(seen)]


TINY3 = "..G\n...\nS.."
TINY_OB = "...\nS0G\n..."
