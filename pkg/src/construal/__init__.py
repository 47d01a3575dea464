"""Construal-based planning models for gridworld mazes."""
from .engine import construal_distribution, obstacle_marginals, plan_with_construal, vgc_scores, vor_table
from .maze import Construal, GridMaze, Obstacle, parse_maze, serialize_maze, true_mdp
from .mdp import TabularMDP, policy_iteration_sparse, value_iteration

__version__ = "0.1.0"
