"""Perceptual and path distance predictors.

All distances are minimum Manhattan distances from any cell of an obstacle
to the target; smaller means nearer.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..maze import DEFAULT_DISCOUNT, GridMaze, manhattan, true_mdp
from ..mdp import optimal_stochastic_policy, sample_trajectory, value_iteration


def _min_dist(cells, targets) -> int:
    return min(manhattan(o, t) for o in cells for t in targets)


def center_cell(maze: GridMaze):
    return ((maze.width - 1) // 2, (maze.height - 1) // 2)


def wall_targets(maze: GridMaze):
    """Wall cells, or the ring just outside the grid when there are none."""
    if maze.walls:
        return sorted(maze.walls)
    w, h = maze.width, maze.height
    return ([(x, -1) for x in range(w)] + [(x, h) for x in range(w)]
            + [(-1, y) for y in range(h)] + [(w, y) for y in range(h)])


def optimal_trajectories(maze: GridMaze, n: int = 100, seed: int = 0,
                         discount: float = DEFAULT_DISCOUNT, max_steps: int = 1000):
    """Cell sequences sampled from the true optimal stochastic policy."""
    mdp = true_mdp(maze, discount)
    _, q = value_iteration(mdp)
    policy = optimal_stochastic_policy(q)
    seeds = np.random.SeedSequence(seed).spawn(n)
    out = []
    for ss in seeds:
        traj = sample_trajectory(mdp, policy, maze.start_index,
                                 int(ss.generate_state(1)[0]), max_steps)
        out.append([maze.cell(s) for s, _ in traj])
    return out


def distance_predictors(maze: GridMaze, trajectory: Optional[Sequence] = None,
                        n_opt_samples: int = 100, seed: int = 0,
                        discount: float = DEFAULT_DISCOUNT) -> list[dict]:
    """Per-obstacle distance records.

    ``trajectory`` is an optional sequence of visited cells; when given,
    ``nav_dist`` and ``nav_dist_step`` (first step attaining ``nav_dist``)
    are filled in, otherwise they are ``None``.
    """
    if trajectory is not None:
        trajectory = [tuple(c) for c in trajectory]
        for c in trajectory:
            if not maze.in_bounds(c):
                raise ValueError(f"trajectory cell {c} out of bounds")
    samples = optimal_trajectories(maze, n_opt_samples, seed, discount)
    walls = wall_targets(maze)
    center = center_cell(maze)
    records = []
    for ob in maze.obstacles:
        rec = {
            "start_dist": float(_min_dist(ob.cells, [maze.start])),
            "goal_dist": float(_min_dist(ob.cells, [maze.goal])),
            "wall_dist": float(_min_dist(ob.cells, walls)),
            "center_dist": float(_min_dist(ob.cells, [center])),
            "opt_dist": float(np.mean([_min_dist(ob.cells, t) for t in samples])),
            "nav_dist": None,
            "nav_dist_step": None,
        }
        if trajectory:
            per_step = [_min_dist(ob.cells, [c]) for c in trajectory]
            best = min(per_step)
            rec["nav_dist"] = float(best)
            rec["nav_dist_step"] = float(per_step.index(best))
        records.append(rec)
    return records
