"""Generate the reconstructed 11x11 fixture mazes shipped with the package.

The original layouts are not distributed as data, so these are new
mazes in the same style: a central plus-shaped wall and seven tetromino
obstacles.  Mazes 00-11 are random layouts; 12-15 are "critical" layouts
that were kept only if some obstacle is relevant to planning yet farther
from the start, goal and optimal paths than an obstacle the model ignores.

Run from the repository root:  python tools/make_fixtures.py
"""
import json
import sys
from pathlib import Path

import numpy as np

from construal.maze import GridMaze, Obstacle, serialize_maze, manhattan, reachable_cells, true_mdp
from construal.engine import vgc_scores
from construal.predictors import distance_predictors

SIZE = 11
PLUS = frozenset({(5, y) for y in range(2, 9)} | {(x, 5) for x in range(2, 9)})
SHAPES = {
    "I": [(0, 0), (1, 0), (2, 0), (3, 0)],
    "O": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "T": [(0, 0), (1, 0), (2, 0), (1, 1)],
    "S": [(1, 0), (2, 0), (0, 1), (1, 1)],
    "Z": [(0, 0), (1, 0), (1, 1), (2, 1)],
    "L": [(0, 0), (0, 1), (0, 2), (1, 2)],
    "J": [(1, 0), (1, 1), (1, 2), (0, 2)],
}


def orientations(cells):
    out, cur = set(), cells
    for _ in range(4):
        cur = [(-y, x) for x, y in cur]
        for shape in (cur, [(-x, y) for x, y in cur]):
            mx, my = min(x for x, _ in shape), min(y for _, y in shape)
            out.add(tuple(sorted((x - mx, y - my) for x, y in shape)))
    return sorted(out)


ORIENTED = [o for s in SHAPES.values() for o in orientations(s)]


def neighbours(c):
    x, y = c
    return {(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)}


def random_maze(rng, n_obstacles=7):
    free = [(x, y) for y in range(SIZE) for x in range(SIZE) if (x, y) not in PLUS]
    while True:
        s, g = (free[i] for i in rng.choice(len(free), 2, replace=False))
        if manhattan(s, g) >= 8:
            break
    taken = set(PLUS) | {s, g} | neighbours(s) | neighbours(g)
    obstacles = []
    tries = 0
    while len(obstacles) < n_obstacles and tries < 5000:
        tries += 1
        shape = ORIENTED[rng.integers(len(ORIENTED))]
        ox, oy = rng.integers(SIZE), rng.integers(SIZE)
        cells = {(ox + x, oy + y) for x, y in shape}
        if any(not (0 <= x < SIZE and 0 <= y < SIZE) for x, y in cells):
            continue
        halo = set().union(*(neighbours(c) for c in cells))
        if cells & taken or halo & set().union(set(), *[o for o in obstacles]):
            continue
        obstacles.append(cells)
        taken |= cells
    if len(obstacles) < n_obstacles:
        return None
    maze = GridMaze(SIZE, SIZE, PLUS, tuple(Obstacle(i, frozenset(c)) for i, c in enumerate(obstacles)), s, g)
    reach = set(reachable_cells(maze))
    if maze.goal_index not in reach or len(reach) != len(maze.free_cells()):
        return None
    return maze


def critical_pair(maze):
    vgc = vgc_scores(maze)
    d = distance_predictors(maze, seed=0)
    best = None
    for r in range(maze.n_obstacles):
        for i in range(maze.n_obstacles):
            if r == i or vgc[r] - vgc[i] < 0.5:
                continue
            far = all(d[r][k] > d[i][k] + 1 for k in ("start_dist", "goal_dist", "opt_dist"))
            if far:
                gap = vgc[r] - vgc[i]
                if best is None or gap > best[2]:
                    best = (r, i, gap)
    return best


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20221)
    mazes, critical = [], {}
    while len(mazes) < 12:
        m = random_maze(rng)
        if m is not None:
            mazes.append(m)
    while len(critical) < 4:
        m = random_maze(rng)
        if m is None:
            continue
        pair = critical_pair(m)
        if pair is not None:
            critical[f"maze_{12 + len(critical):02d}"] = {"relevant": pair[0], "irrelevant": pair[1]}
            mazes.append(m)
            print("critical", len(critical), pair, file=sys.stderr)
    for i, m in enumerate(mazes):
        (out / f"maze_{i:02d}.maze").write_text(serialize_maze(m) + "\n")
    (out / "critical.json").write_text(json.dumps(critical, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/construal/fixtures")
