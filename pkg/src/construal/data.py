"""Bundled fixture mazes."""
from __future__ import annotations

import json
from importlib import resources

from .maze import TINY3, TINY_OB, GridMaze, parse_maze

_PKG = "construal.fixtures"


def fixture_ids() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(_PKG).iterdir() if p.name.endswith(".maze"))


def load_fixture(maze_id: str) -> GridMaze:
    return parse_maze(resources.files(_PKG).joinpath(f"{maze_id}.maze").read_text("utf-8").rstrip("\n"))


def load_fixtures() -> dict[str, GridMaze]:
    """All 16 bundled 11x11 mazes keyed by id."""
    return {mid: load_fixture(mid) for mid in fixture_ids()}


def critical_pairs() -> dict[str, dict]:
    """For critical-style mazes: the relevant-but-far and irrelevant-but-near obstacle ids."""
    return json.loads(resources.files(_PKG).joinpath("critical.json").read_text("utf-8"))


def tiny_mazes() -> dict[str, GridMaze]:
    return {"TINY3": parse_maze(TINY3), "TINY-OB": parse_maze(TINY_OB)}
