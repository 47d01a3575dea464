"""Construal modification as a decision process over (task state, construal).

Meta-state ``(s, c)`` is stored at index ``k * S + s`` where ``k`` is the
position of ``c`` in the candidate list (bitmask order, so the empty
construal is always ``k = 0``).  Choosing ``c'`` moves the task according to
the true dynamics under the plan computed for ``c'`` and costs the number of
obstacles ``c'`` adds to ``c``.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import itertools
import logging
from typing import Mapping, Optional, Sequence
import warnings

import numpy as np
import scipy.sparse as sp

from .engine import plan_with_construal
from .maze import DEFAULT_DISCOUNT, Construal, GridMaze, all_construals, true_mdp
from .mdp import (TabularMDP, bellman_q, eps_softmax_policy, policy_iteration_sparse,
                  policy_matrix, successor_row)
from .stats import ols_r2

log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "inv_temp_action": (1.0, 3.0, 5.0, 7.0),
    "eps_action": (0.0, 0.1, 0.2),
    "inv_temp_construal": (1.0, 3.0, 5.0, 7.0, 9.0),
    "eps_construal": (0.0, 0.05, 0.1, 0.2, 0.3),
}


@dataclass(frozen=True)
class NoiseParams:
    inv_temp_action: float = 1.0
    eps_action: float = 0.0
    inv_temp_construal: float = 10.0
    eps_construal: float = 0.0

    def __post_init__(self):
        if self.inv_temp_action < 0 or self.inv_temp_construal < 0:
            raise ValueError("inverse temperatures must be nonnegative")
        if not (0 <= self.eps_action <= 1 and 0 <= self.eps_construal <= 1):
            raise ValueError("epsilons must lie in [0, 1]")


def modification_cost(new: Construal, current: Construal) -> int:
    return new.addition_cost(current)


@dataclass(frozen=True)
class MetaMDP:
    maze: GridMaze
    construals: tuple
    mdp: TabularMDP
    task_transitions: np.ndarray = field(repr=False)  # (C, S, S): P(s' | s, c')
    cost: np.ndarray = field(repr=False)              # (C, C): cost[k, j] = C(c_j, c_k)

    @property
    def n_task_states(self) -> int:
        return self.maze.n_states

    @property
    def n_construals(self) -> int:
        return len(self.construals)

    @property
    def start(self) -> int:
        return self.index(self.maze.start_index, 0)

    def index(self, s: int, k: int) -> int:
        return k * self.n_task_states + s

    def split(self, m: int) -> tuple[int, int]:
        k, s = divmod(m, self.n_task_states)
        return s, k

    def construal_index(self, c: Construal) -> int:
        return self.construals.index(c)


def build_meta_mdp(maze: GridMaze, max_construal_size: Optional[int] = None,
                   action_noise: Optional[tuple[float, float]] = None,
                   discount: float = DEFAULT_DISCOUNT) -> MetaMDP:
    """Assemble the sparse construal-modification process.

    ``action_noise = (inv_temp, eps)`` swaps the optimal stochastic plans
    for epsilon-softmax plans over each construal's action values.
    """
    if max_construal_size is not None and max_construal_size > maze.n_obstacles:
        max_construal_size = maze.n_obstacles
    construals = tuple(all_construals(maze.n_obstacles, max_construal_size))
    n_c, n_s = len(construals), maze.n_states
    n_meta = n_c * n_s

    actual = true_mdp(maze, discount).dense()  # (S, A, S)
    task = np.empty((n_c, n_s, n_s))
    for j, c in enumerate(construals):
        plan, _, q = plan_with_construal(maze, c, discount)
        if action_noise is not None:
            plan = eps_softmax_policy(q, *action_noise)
        task[j] = np.einsum("sa,sat->st", plan, actual)

    cost = np.array([[modification_cost(cj, ck) for cj in construals] for ck in construals],
                    dtype=float)

    rows, cols, vals = [], [], []
    offsets = np.arange(n_c) * n_s
    for j in range(n_c):
        r, c = np.nonzero(task[j])
        v = task[j][r, c]
        rows.append((j * n_meta + offsets[:, None] + r[None, :]).ravel())
        cols.append(np.broadcast_to(j * n_s + c, (n_c, c.size)).ravel())
        vals.append(np.broadcast_to(v, (n_c, v.size)).ravel())
    P = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                     shape=(n_c * n_meta, n_meta))

    utility = np.tile(np.where(np.arange(n_s) == maze.goal_index, 0.0, -1.0), n_c)
    terminal = np.tile(np.arange(n_s) == maze.goal_index, n_c)
    action_cost = np.repeat(cost, n_s, axis=0)
    mdp = TabularMDP(P, utility, discount, terminal, action_cost, n_c)
    return MetaMDP(maze, construals, mdp, task, cost)


def solve_meta(meta: MetaMDP) -> np.ndarray:
    """Optimal construal-modification values over all meta-states."""
    _, v = policy_iteration_sparse(meta.mdp)
    return v


def meta_action_values(meta: MetaMDP, values: np.ndarray) -> np.ndarray:
    """``U(s) - C(c', c) + discount * sum P(s'|s,c') V(s', c')`` per meta-action."""
    return bellman_q(meta.mdp, values)


def construal_policy(meta: MetaMDP, values: np.ndarray, inv_temp_construal: float = 10.0,
                     eps_construal: float = 0.0) -> np.ndarray:
    """Epsilon-softmax choice of the next construal, shape ``(S_meta, C)``.

    The task utility is shared by every meta-action at a state, so softmax
    over the full action values equals softmax over backed-up value minus
    switching cost.
    """
    q = meta_action_values(meta, values)
    return eps_softmax_policy(q, inv_temp_construal, eps_construal)


@dataclass
class RolloutOccupancy:
    values: np.ndarray
    stderr: Optional[np.ndarray]
    n_truncated: int


def _exact_occupancy(meta: MetaMDP, policy: np.ndarray) -> np.ndarray:
    chain = policy_matrix(meta.mdp, policy)
    return successor_row(meta.mdp, chain, meta.start)


def rollout_occupancy(meta: MetaMDP, policy: np.ndarray, n: int = 1000, seed: int = 0,
                      max_steps: int = 1000, discounted: bool = True,
                      return_stderr: bool = False) -> RolloutOccupancy:
    """Monte Carlo estimate of the normalised meta-state occupancy.

    All ``n`` walkers advance together.  A visit at step ``t`` is weighted
    by ``discount**t`` when ``discounted`` so the estimate targets the same
    quantity as the exact successor-row computation.
    """
    if n <= 0:
        raise ValueError("need at least one rollout")
    rng = np.random.default_rng(seed)
    n_s, n_c = meta.n_task_states, meta.n_construals
    gamma = meta.mdp.discount if discounted else 1.0
    goal = meta.maze.goal_index
    pol_cum = np.cumsum(policy, axis=1)
    task_cum = np.cumsum(meta.task_transitions, axis=2)

    s = np.full(n, meta.maze.start_index)
    k = np.zeros(n, dtype=int)
    walkers = np.arange(n)
    acc = np.zeros(n_s * n_c)
    trace = [] if return_stderr else None
    weight = 1.0
    for t in range(max_steps + 1):
        m = k * n_s + s
        np.add.at(acc, m, weight)
        if trace is not None:
            trace.append((walkers, m, weight))
        live = s != goal
        s, k, walkers, m = s[live], k[live], walkers[live], m[live]
        if s.size == 0 or t == max_steps:
            break
        u = rng.random(s.size)
        k = np.minimum((pol_cum[m] < u[:, None] * pol_cum[m, -1:]).sum(axis=1), n_c - 1)
        rows = task_cum[k, s]
        u = rng.random(s.size)
        s = np.minimum((rows < u[:, None] * rows[:, -1:]).sum(axis=1), n_s - 1)
        weight *= gamma
    n_trunc = int(s.size)
    if n_trunc:
        warnings.warn(f"{n_trunc} of {n} rollouts truncated at {max_steps} steps",
                      RuntimeWarning, stacklevel=2)
    total = acc.sum()
    rho = acc / total

    stderr = None
    if trace is not None:
        w_idx = np.concatenate([t[0] for t in trace])
        m_idx = np.concatenate([t[1] for t in trace])
        w_val = np.concatenate([np.full(t[0].size, t[2]) for t in trace])
        per = sp.csr_array((w_val, (w_idx, m_idx)), shape=(n, n_s * n_c))
        totals = np.asarray(per.sum(axis=1)).ravel()
        # delta-method variance of the ratio estimator sum(w) / sum(T)
        dense = per.toarray()
        resid = dense - rho[None, :] * totals[:, None]
        var = (resid ** 2).sum(axis=0) / (n * max(n - 1, 1))
        stderr = np.sqrt(var) / totals.mean()
    return RolloutOccupancy(rho, stderr, n_trunc)


def occupancy(meta: MetaMDP, policy: np.ndarray, mode: str = "exact", n: int = 1000,
              seed: int = 0, max_steps: int = 1000, include_terminal: bool = True) -> np.ndarray:
    """Normalised occupancy of meta-states from ``(s0, {})``.

    ``mode`` is ``"exact"`` (successor row of the meta chain) or
    ``"rollouts"``.  With ``include_terminal=False`` goal meta-states are
    dropped before normalising.
    """
    if mode == "exact":
        rho = _exact_occupancy(meta, policy)
    elif mode == "rollouts":
        rho = rollout_occupancy(meta, policy, n, seed, max_steps).values
    else:
        raise ValueError(f"unknown occupancy mode {mode!r}")
    rho = np.clip(rho, 0.0, None)
    if not include_terminal:
        rho = rho.copy()
        rho[meta.mdp.terminal] = 0.0
    return rho / rho.sum()


def membership(construals: Sequence[Construal], n_obstacles: int) -> np.ndarray:
    return np.array([[i in c for i in range(n_obstacles)] for c in construals], dtype=float)


def obstacle_modification_scores(occ: np.ndarray, construals: Sequence[Construal],
                                 n_obstacles: int) -> np.ndarray:
    """Occupancy mass on construals that contain each obstacle."""
    mass = np.asarray(occ, dtype=float).reshape(len(construals), -1).sum(axis=1)
    return np.clip(membership(construals, n_obstacles).T @ mass, 0.0, 1.0)


def modification_scores(maze: GridMaze, params: Optional[NoiseParams] = None,
                        max_construal_size: Optional[int] = None, mode: str = "exact",
                        n_rollouts: int = 1000, seed: int = 0, max_steps: int = 1000,
                        discount: float = DEFAULT_DISCOUNT,
                        include_terminal: bool = True) -> np.ndarray:
    """Per-obstacle scores of the modification model.

    With ``params=None`` this is the fixed-parameter model: optimal
    stochastic plans, construal inverse temperature 10, no construal noise.
    """
    noise = None if params is None else (params.inv_temp_action, params.eps_action)
    meta = build_meta_mdp(maze, max_construal_size, noise, discount)
    v = solve_meta(meta)
    it_c = 10.0 if params is None else params.inv_temp_construal
    eps_c = 0.0 if params is None else params.eps_construal
    pol = construal_policy(meta, v, it_c, eps_c)
    occ = occupancy(meta, pol, mode, n_rollouts, seed, max_steps, include_terminal)
    return obstacle_modification_scores(occ, meta.construals, maze.n_obstacles)


# -- parameter fitting -------------------------------------------------------

def grid_points(grid: Mapping[str, Sequence[float]] = DEFAULT_GRID) -> list[NoiseParams]:
    keys = ("inv_temp_action", "eps_action", "inv_temp_construal", "eps_construal")
    missing = [k for k in keys if not grid.get(k)]
    if missing:
        raise ValueError(f"empty parameter grid for {missing}")
    return [NoiseParams(*vals) for vals in itertools.product(*(grid[k] for k in keys))]


def _maze_grid_scores(args) -> np.ndarray:
    maze, points, max_size, n_rollouts, seed, max_steps, discount = args
    out = np.empty((len(points), maze.n_obstacles))
    cache = {}
    for g, p in enumerate(points):
        key = (p.inv_temp_action, p.eps_action)
        if key not in cache:
            meta = build_meta_mdp(maze, max_size, key, discount)
            cache[key] = (meta, meta_action_values(meta, solve_meta(meta)))
        meta, q = cache[key]
        pol = eps_softmax_policy(q, p.inv_temp_construal, p.eps_construal)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            occ = rollout_occupancy(meta, pol, n_rollouts, seed, max_steps).values
        out[g] = obstacle_modification_scores(occ, meta.construals, maze.n_obstacles)
    return out


@dataclass
class FitResult:
    params: NoiseParams
    r_squared: float
    grid: list
    r_squared_by_point: np.ndarray
    scores: dict


def grid_scores(mazes: Mapping[str, GridMaze], grid: Mapping[str, Sequence[float]] = DEFAULT_GRID,
                max_construal_size: Optional[int] = 3, n_rollouts: int = 1000, seed: int = 0,
                max_steps: int = 1000, discount: float = DEFAULT_DISCOUNT,
                n_jobs: int = 1) -> tuple[list, dict]:
    """Rollout scores of every maze at every grid point.

    Returns the grid points and a map ``maze_id -> (n_points, N)`` array.
    Each maze uses its own seed stream shared across grid points.
    """
    points = grid_points(grid)
    ids = sorted(mazes)
    seeds = [int(np.random.SeedSequence([seed, i]).generate_state(1)[0]) for i in range(len(ids))]
    jobs = [(mazes[mid], points, max_construal_size, n_rollouts, seeds[i], max_steps, discount)
            for i, mid in enumerate(ids)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_maze = list(pool.map(_maze_grid_scores, jobs))
    else:
        per_maze = [_maze_grid_scores(j) for j in jobs]
    return points, dict(zip(ids, per_maze))


def best_grid_point(points: Sequence[NoiseParams], scores: Mapping[str, np.ndarray],
                    responses: Mapping[tuple, float]) -> FitResult:
    """Pick the grid point whose scores best explain ``responses`` (pooled OLS R^2)."""
    if not responses:
        raise ValueError("no responses to fit")
    keys = [(mid, o) for mid in sorted(scores) for o in range(scores[mid].shape[1])
            if (mid, o) in responses]
    if len(keys) < 3:
        raise ValueError("need responses for at least 3 obstacles")
    y = np.array([responses[k] for k in keys])
    r2 = np.zeros(len(points))
    for g in range(len(points)):
        x = np.array([scores[mid][g, o] for mid, o in keys])
        try:
            r2[g] = ols_r2(x, y).r_squared
        except ValueError:
            r2[g] = 0.0
    best = int(np.argmax(r2))
    log.info("best grid point %s with R^2 %.4f", points[best], r2[best])
    return FitResult(points[best], float(r2[best]), list(points), r2, dict(scores))


def fit_noise_params(mazes: Mapping[str, GridMaze], responses: Mapping[tuple, float],
                     grid: Mapping[str, Sequence[float]] = DEFAULT_GRID,
                     max_construal_size: Optional[int] = 3, n_rollouts: int = 1000,
                     seed: int = 0, max_steps: int = 1000,
                     discount: float = DEFAULT_DISCOUNT, n_jobs: int = 1) -> FitResult:
    """Grid search for the noise parameters maximising pooled R^2.

    ``responses`` maps ``(maze_id, obstacle_id)`` to a mean response.  Ties
    in R^2 go to the earliest grid point.
    """
    if not responses:
        raise ValueError("no responses to fit")
    points, scores = grid_scores(mazes, grid, max_construal_size, n_rollouts, seed,
                                 max_steps, discount, n_jobs)
    return best_grid_point(points, scores, responses)
