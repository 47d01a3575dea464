"""Heuristic search over action sequences and the obstacle hits it produces.

Both planners run on the true maze dynamics, start from the optimal value
function of the maze with its obstacles removed, and break ties among
greedy actions uniformly at random.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..maze import DEFAULT_DISCOUNT, GridMaze, compose_construed_mdp, manhattan, true_mdp
from ..mdp import TabularMDP, value_iteration

SEARCH_TIE_TOL = 1e-7
MAX_SWEEPS = 100_000


class SearchLimitError(RuntimeError):
    pass


def walls_only_heuristic(maze: GridMaze, discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    """Optimal values when only the walls block movement."""
    v, _ = value_iteration(compose_construed_mdp(maze, 0, discount))
    return v


def goal_side_adjacent(maze: GridMaze, s, o) -> bool:
    """Default hit geometry: ``o`` touches ``s`` and is closer to the goal."""
    return manhattan(s, o) == 1 and manhattan(o, maze.goal) < manhattan(s, maze.goal)


def hit_matrix(maze: GridMaze, predicate: Callable = goal_side_adjacent) -> np.ndarray:
    """``(S, N)`` indicator of which obstacles a visit to each state hits."""
    out = np.zeros((maze.n_states, maze.n_obstacles), dtype=bool)
    for s in range(maze.n_states):
        cell = maze.cell(s)
        for ob in maze.obstacles:
            out[s, ob.id] = any(predicate(maze, cell, o) for o in ob.cells)
    return out


class _Model:
    """Successor lists of a tabular MDP for fast scalar backups."""

    def __init__(self, mdp: TabularMDP):
        n, m = mdp.n_states, mdp.n_actions
        P = mdp.transition
        self.n_states, self.n_actions = n, m
        self.gamma = mdp.discount
        self.utility = mdp.utility.tolist()
        self.terminal = mdp.terminal.tolist()
        self.succ = [[None] * m for _ in range(n)]
        for a in range(m):
            for s in range(n):
                r = a * n + s
                lo, hi = P.indptr[r], P.indptr[r + 1]
                self.succ[s][a] = (P.indices[lo:hi].tolist(), P.data[lo:hi].tolist())

    def q_values(self, s: int, v) -> list:
        u, g = self.utility[s], self.gamma
        out = []
        for nxt, probs in self.succ[s]:
            total = 0.0
            for t, p in zip(nxt, probs):
                total += p * v[t]
            out.append(u + g * total)
        return out


def _greedy(q: list, rng: np.random.Generator) -> int:
    best = max(q)
    ties = [a for a, x in enumerate(q) if x >= best - SEARCH_TIE_TOL]
    return ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]


@dataclass
class SearchRun:
    value: float
    values: np.ndarray
    visits: list = field(repr=False)
    trials: int = 0


def lrtdp(mdp: TabularMDP, start: int, heuristic: np.ndarray, rng: np.random.Generator,
          epsilon: float = 1e-10, max_trials: int = 100_000,
          max_trial_length: int = 100_000) -> SearchRun:
    """Labeled RTDP.

    ``visits`` lists every state pushed onto a trial, in order, across all
    trials; it is what hit counting inspects.
    """
    model = _Model(mdp)
    v = [float(x) for x in heuristic]
    solved = list(model.terminal)
    visits = []

    def sample(s, a):
        nxt, probs = model.succ[s][a]
        if len(nxt) == 1:
            return nxt[0]
        u, acc = rng.random(), 0.0
        for t, p in zip(nxt, probs):
            acc += p
            if u < acc:
                return t
        return nxt[-1]

    def check_solved(s):
        ok = True
        open_, closed, seen = [], [], set()
        if not solved[s]:
            open_.append(s)
            seen.add(s)
        while open_:
            s = open_.pop()
            closed.append(s)
            q = model.q_values(s, v)
            if abs(v[s] - max(q)) > epsilon:
                ok = False
                continue
            a = _greedy(q, rng)
            for t in model.succ[s][a][0]:
                if not solved[t] and t not in seen:
                    seen.add(t)
                    open_.append(t)
        if ok:
            for t in closed:
                solved[t] = True
        else:
            while closed:
                t = closed.pop()
                v[t] = max(model.q_values(t, v))
        return ok

    trials = 0
    while not solved[start]:
        trials += 1
        if trials > max_trials:
            raise SearchLimitError(f"LRTDP exceeded {max_trials} trials")
        stack, s = [], start
        while not solved[s]:
            stack.append(s)
            visits.append(s)
            if model.terminal[s]:
                break
            if len(stack) > max_trial_length:
                raise SearchLimitError(f"LRTDP trial exceeded {max_trial_length} steps")
            q = model.q_values(s, v)
            a = _greedy(q, rng)
            v[s] = max(q)
            s = sample(s, a)
        while stack:
            if not check_solved(stack.pop()):
                break
    values = np.array(v)
    return SearchRun(values[start], values, visits, trials)


def lao_star(mdp: TabularMDP, start: int, heuristic: np.ndarray, rng: np.random.Generator,
             tol: float = 1e-10, max_iterations: int = 100_000) -> SearchRun:
    """LAO* that expands the whole fringe of the best partial solution graph.

    After each expansion the interior is re-solved by value iteration with
    unexpanded states held at their heuristic values.  ``visits`` lists the
    states expanded, in order.
    """
    n, m = mdp.n_states, mdp.n_actions
    model = _Model(mdp)
    P = mdp.transition
    v = np.asarray(heuristic, dtype=float).copy()
    terminal = mdp.terminal
    v[terminal] = mdp.utility[terminal]
    expanded = np.zeros(n, dtype=bool)
    visits = []
    reward = mdp.reward()

    for it in range(max_iterations):
        vl = v.tolist()
        fringe, seen, stack = [], {start}, [start]
        while stack:
            s = stack.pop()
            if terminal[s]:
                continue
            if not expanded[s]:
                fringe.append(s)
                continue
            a = _greedy(model.q_values(s, vl), rng)
            for t in model.succ[s][a][0]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        if not fringe:
            return SearchRun(float(v[start]), v, visits, it)
        fringe.sort()
        expanded[fringe] = True
        visits.extend(fringe)

        interior = expanded & ~terminal
        for _ in range(MAX_SWEEPS):
            q = reward + mdp.discount * (P @ v).reshape(m, n).T
            new = np.where(interior, q.max(axis=1), v)
            delta = np.max(np.abs(new - v))
            v = new
            if delta < tol:
                break
        else:
            raise SearchLimitError("LAO* value iteration did not converge")
    raise SearchLimitError(f"LAO* exceeded {max_iterations} iterations")


@dataclass
class HitTally:
    counts: np.ndarray  # (n_sims, N)
    aggregation: str
    values_at_start: np.ndarray

    def scores(self) -> np.ndarray:
        if self.aggregation == "mean":
            return np.log(self.counts.mean(axis=0) + 1.0)
        return self.counts.sum(axis=0) / self.counts.shape[0]


def _tally(maze: GridMaze, planner, aggregation: str, n_sims: int, seed: int,
           discount: float, predicate: Callable) -> HitTally:
    if n_sims <= 0:
        raise ValueError("n_sims must be positive")
    mdp = true_mdp(maze, discount)
    h = walls_only_heuristic(maze, discount)
    hits = hit_matrix(maze, predicate).astype(np.int64)
    counts = np.zeros((n_sims, maze.n_obstacles), dtype=np.int64)
    start_values = np.zeros(n_sims)
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(n_sims)):
        run = planner(mdp, maze.start_index, h, np.random.default_rng(child))
        if run.visits:
            counts[k] = hits[np.asarray(run.visits)].sum(axis=0)
        start_values[k] = run.value
    return HitTally(counts, aggregation, start_values)


def lrtdp_tally(maze: GridMaze, n_sims: int = 200, seed: int = 0,
                discount: float = DEFAULT_DISCOUNT,
                predicate: Callable = goal_side_adjacent) -> HitTally:
    return _tally(maze, lrtdp, "mean", n_sims, seed, discount, predicate)


def lao_star_tally(maze: GridMaze, n_sims: int = 200, seed: int = 0,
                   discount: float = DEFAULT_DISCOUNT,
                   predicate: Callable = goal_side_adjacent) -> HitTally:
    return _tally(maze, lao_star, "total", n_sims, seed, discount, predicate)


def lrtdp_hits(maze: GridMaze, n_sims: int = 200, seed: int = 0,
               discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    """Trajectory-based hit score: ``ln(mean hits per simulation + 1)``."""
    return lrtdp_tally(maze, n_sims, seed, discount).scores()


def lao_star_hits(maze: GridMaze, n_sims: int = 200, seed: int = 0,
                  discount: float = DEFAULT_DISCOUNT) -> np.ndarray:
    """Graph-based hit score: raw hits during expansion, per simulation."""
    return lao_star_tally(maze, n_sims, seed, discount).scores()
