"""Single-construal value-guided construal.

Each construal is planned in its own construed MDP, the resulting plan is
evaluated under the true dynamics, and construals are scored by behavioral
utility minus their size.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .maze import (DEFAULT_DISCOUNT, Construal, ConstrualLike, GridMaze, all_construals,
                   as_construal, compose_construed_mdp, true_mdp)
from .mdp import optimal_stochastic_policy, policy_evaluation_exact, value_iteration

MAX_ENUMERATED_OBSTACLES = 20
PLAN_TIE_TOL = 1e-8


@lru_cache(maxsize=4096)
def _plan(maze: GridMaze, bits: int, discount: float):
    mdp = compose_construed_mdp(maze, bits, discount)
    v, q = value_iteration(mdp)
    policy = optimal_stochastic_policy(q, PLAN_TIE_TOL)
    for arr in (policy, v, q):
        arr.setflags(write=False)
    return policy, v, q


def plan_with_construal(maze: GridMaze, construal: ConstrualLike = 0,
                        discount: float = DEFAULT_DISCOUNT):
    """Optimal stochastic plan of the construed task: ``(policy, V, Q)``.

    Results are cached and returned read-only.
    """
    return _plan(maze, as_construal(construal).bits, float(discount))


def behavioral_utility(maze: GridMaze, plan: np.ndarray,
                       discount: float = DEFAULT_DISCOUNT) -> float:
    """Value of following ``plan`` from the start under the true dynamics."""
    v = policy_evaluation_exact(true_mdp(maze, discount), plan)
    return float(v[maze.start_index])


@dataclass(frozen=True)
class VorEntry:
    construal: Construal
    behavioral_utility: float
    cost: int
    vor: float
    plan: np.ndarray
    construed_value: float


def vor_table(maze: GridMaze, max_size: Optional[int] = None,
              discount: float = DEFAULT_DISCOUNT) -> dict[Construal, VorEntry]:
    """Value of representation for every construal, keyed in bitmask order."""
    n = maze.n_obstacles
    if n > MAX_ENUMERATED_OBSTACLES and max_size is None:
        raise ValueError(
            f"{n} obstacles give 2**{n} construals; pass max_size to restrict enumeration"
        )
    actual = true_mdp(maze, discount)
    table = {}
    for c in all_construals(n, max_size):
        plan, v, _ = plan_with_construal(maze, c, discount)
        u = float(policy_evaluation_exact(actual, plan)[maze.start_index])
        table[c] = VorEntry(c, u, c.cost, u - c.cost, plan, float(v[maze.start_index]))
    return table


def softmax(values: np.ndarray, inv_temp: float) -> np.ndarray:
    z = inv_temp * (values - values.max())
    p = np.exp(z)
    return p / p.sum()


def construal_distribution(table: Mapping[Construal, VorEntry],
                           alpha: float = 0.1) -> dict[Construal, float]:
    """Softmax over VOR with temperature ``alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    keys = list(table)
    p = softmax(np.array([table[c].vor for c in keys]), 1.0 / alpha)
    return dict(zip(keys, p.tolist()))


def obstacle_marginals(dist: Mapping[Construal, float], n_obstacles: int) -> np.ndarray:
    """Probability that each obstacle belongs to the selected construal."""
    out = np.zeros(n_obstacles)
    for c, p in dist.items():
        for i in c.ids:
            out[i] += p
    return np.clip(out, 0.0, 1.0)


def vgc_scores(maze: GridMaze, alpha: float = 0.1,
               discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    return obstacle_marginals(construal_distribution(vor_table(maze, discount=discount), alpha),
                              maze.n_obstacles)
