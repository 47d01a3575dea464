import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from construal.data import load_fixtures  # noqa: E402
from construal.maze import TINY3, TINY_OB, parse_maze  # noqa: E402

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

# a corridor toward the goal that ends at obstacle 0 next to the goal
DEAD_END = ".....\n.###.\nS..0G\n.###.\n....."
# short route along the top blocked by obstacle 0, long route along the bottom past obstacle 1
TWO_ROUTE = "S.0.G\n.###.\n.....\n.###.\n..1.."
# two 3x3 rooms joined by the single door cell (3, 1)
DOOR = "...#...\nS.....G\n...#..."


@pytest.fixture(scope="session")
def tiny3():
    return parse_maze(TINY3)


@pytest.fixture(scope="session")
def tiny_ob():
    return parse_maze(TINY_OB)


@pytest.fixture(scope="session")
def fixtures():
    return load_fixtures()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
