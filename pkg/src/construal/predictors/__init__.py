from .distances import center_cell, distance_predictors, optimal_trajectories
from .search import (HitTally, goal_side_adjacent, hit_matrix, lao_star, lao_star_hits,
                     lao_star_tally, lrtdp, lrtdp_hits, lrtdp_tally, walls_only_heuristic)
from .successor import BottleneckSet, bottleneck_distance, find_bottlenecks, sr_overlap

__all__ = [
    "BottleneckSet", "HitTally", "bottleneck_distance", "center_cell", "distance_predictors",
    "find_bottlenecks", "goal_side_adjacent", "hit_matrix", "lao_star", "lao_star_hits",
    "lao_star_tally", "lrtdp", "lrtdp_hits", "lrtdp_tally", "optimal_trajectories",
    "sr_overlap", "walls_only_heuristic",
]
