"""Predictor tables, response tables and simple-regression summaries.

Distances are reported as-is (smaller = nearer); regression slopes keep
their sign so the direction of each effect stays explicit.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .engine import vgc_scores
from .maze import DEFAULT_DISCOUNT, GridMaze
from .modification import modification_scores
from .predictors import (bottleneck_distance, distance_predictors, lao_star_hits, lrtdp_hits,
                         sr_overlap)
from .stats import ols_r2, zscore

log = logging.getLogger(__name__)

SCHEMA_LINE = "#schema=1"
KEY_COLUMNS = ("maze_id", "obstacle_id")
PREDICTORS = ("vgc", "vgc_mod", "traj_hs", "graph_hs", "bottleneck", "sr_overlap", "opt_dist",
              "goal_dist", "start_dist", "wall_dist", "center_dist", "nav_dist", "nav_dist_step")
OPTIONAL = ("nav_dist", "nav_dist_step")
RESPONSE_COLUMNS = ("maze_id", "obstacle_id", "measure", "mean_response")


class PredictorError(RuntimeError):
    pass


@dataclass
class PredictorConfig:
    seed: int = 0
    n_sims: int = 200
    alpha: float = 0.1
    meta_mode: str = "exact"
    n_rollouts: int = 1000
    n_opt_samples: int = 100
    discount: float = DEFAULT_DISCOUNT
    spectral: str = "fiedler"
    trajectories: dict = field(default_factory=dict)  # maze_id -> list of (x, y)


def _maze_seed(seed: int, maze_id: str) -> int:
    # depends only on the id, so a maze gets the same numbers in any table
    return int(np.random.SeedSequence([seed, zlib.crc32(maze_id.encode())]).generate_state(1)[0])


@dataclass
class PredictorTable:
    """One row per (maze, obstacle); values are floats, or None for absent optional columns."""
    rows: list

    def __post_init__(self):
        seen = set()
        for r in self.rows:
            key = (r["maze_id"], r["obstacle_id"])
            if key in seen:
                raise ValueError(f"duplicate row {key}")
            seen.add(key)
            for name in PREDICTORS:
                if r.get(name) is None and name not in OPTIONAL:
                    raise ValueError(f"row {key} is missing {name}")

    def __len__(self) -> int:
        return len(self.rows)

    def keys(self) -> list[tuple[str, int]]:
        return [(r["maze_id"], r["obstacle_id"]) for r in self.rows]

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(SCHEMA_LINE + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(KEY_COLUMNS + PREDICTORS)
        for r in self.rows:
            vals = ["" if r.get(p) is None else repr(float(r[p])) for p in PREDICTORS]
            w.writerow([r["maze_id"], str(r["obstacle_id"])] + vals)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PredictorTable":
        lines = text.splitlines()
        if not lines or lines[0].strip() != SCHEMA_LINE:
            raise ValueError(f"predictor table must start with {SCHEMA_LINE!r}")
        reader = csv.reader(lines[1:])
        header = tuple(next(reader, ()))
        if header != KEY_COLUMNS + PREDICTORS:
            raise ValueError(f"unexpected predictor table header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            row = {"maze_id": rec[0], "obstacle_id": int(rec[1])}
            for name, val in zip(PREDICTORS, rec[2:]):
                row[name] = None if val == "" else float(val)
            rows.append(row)
        return cls(rows)


def maze_predictors(maze_id: str, maze: GridMaze, config: PredictorConfig) -> list[dict]:
    """All predictor columns for one maze."""
    seed = _maze_seed(config.seed, maze_id)
    gamma = config.discount
    cols = {
        "vgc": vgc_scores(maze, config.alpha, gamma),
        "vgc_mod": modification_scores(maze, None, mode=config.meta_mode,
                                       n_rollouts=config.n_rollouts, seed=seed, discount=gamma),
        "traj_hs": lrtdp_hits(maze, config.n_sims, seed, gamma),
        "graph_hs": lao_star_hits(maze, config.n_sims, seed, gamma),
        "bottleneck": bottleneck_distance(maze, config.spectral, gamma),
        "sr_overlap": sr_overlap(maze, gamma),
    }
    dists = distance_predictors(maze, config.trajectories.get(maze_id), config.n_opt_samples,
                                seed, gamma)
    rows = []
    for i in range(maze.n_obstacles):
        row = {"maze_id": maze_id, "obstacle_id": i}
        row.update({k: float(v[i]) for k, v in cols.items()})
        row.update(dists[i])
        rows.append({k: row.get(k) for k in KEY_COLUMNS + PREDICTORS})
    return rows


def predictor_table(mazes: Mapping[str, GridMaze],
                    config: Optional[PredictorConfig] = None) -> PredictorTable:
    config = config or PredictorConfig()
    rows = []
    for mid in sorted(mazes):
        log.info("predictors for %s", mid)
        try:
            rows.extend(maze_predictors(mid, mazes[mid], config))
        except Exception as exc:
            raise PredictorError(f"{mid}: {exc}") from exc
    return PredictorTable(rows)


def zscore_table(table: PredictorTable) -> PredictorTable:
    """Population z-scores per column; absent optional entries stay absent."""
    rows = [dict(r) for r in table.rows]
    for name in PREDICTORS:
        idx = [i for i, r in enumerate(rows) if r.get(name) is not None]
        if not idx:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            z = zscore([rows[i][name] for i in idx])
        if np.all(z == 0.0):
            warnings.warn(f"column {name} has zero variance; z-scored to zeros", RuntimeWarning,
                          stacklevel=2)
        for i, v in zip(idx, z):
            rows[i][name] = float(v)
    return replace(table, rows=rows)


@dataclass
class ResponseTable:
    rows: list  # (maze_id, obstacle_id, measure, mean_response)

    def __post_init__(self):
        seen = set()
        for mid, oid, measure, value in self.rows:
            key = (mid, oid, measure)
            if key in seen:
                raise ValueError(f"duplicate response row {key}")
            if not math.isfinite(value):
                raise ValueError(f"non-finite response for {key}")
            seen.add(key)

    def measures(self) -> list[str]:
        return sorted({r[2] for r in self.rows})

    def for_measure(self, measure: str) -> dict:
        return {(mid, oid): v for mid, oid, m, v in self.rows if m == measure}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESPONSE_COLUMNS)
        for mid, oid, measure, value in self.rows:
            w.writerow([mid, oid, measure, repr(float(value))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResponseTable":
        reader = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
        if tuple(reader.fieldnames or ()) != RESPONSE_COLUMNS:
            raise ValueError(f"unexpected response table header {reader.fieldnames}")
        return cls([(r["maze_id"], int(r["obstacle_id"]), r["measure"], float(r["mean_response"]))
                    for r in reader])


def analyze(table: PredictorTable, responses: ResponseTable,
            predictors: Sequence[str] = PREDICTORS, standardize: bool = True) -> list[dict]:
    """One simple regression per (predictor, measure).

    Predictors are z-scored over the whole table first when ``standardize``
    is set; this rescales slopes but leaves R^2 unchanged.  Rows lacking a
    response or a predictor value are left out of that regression only.
    Failed fits are reported with an ``error`` field instead of numbers.
    """
    if standardize:
        table = zscore_table(table)
    out = []
    for measure in responses.measures():
        resp = responses.for_measure(measure)
        for name in predictors:
            pairs = [(r[name], resp[(r["maze_id"], r["obstacle_id"])]) for r in table.rows
                     if r.get(name) is not None and (r["maze_id"], r["obstacle_id"]) in resp]
            if not pairs and name in OPTIONAL:
                continue
            rec = {"predictor": name, "measure": measure, "n": len(pairs)}
            try:
                fit = ols_r2([p[0] for p in pairs], [p[1] for p in pairs])
                rec.update(slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared)
            except ValueError as exc:
                rec["error"] = str(exc)
            out.append(rec)
    return out
