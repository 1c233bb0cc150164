import math

import pytest

from elastocorner.geometry import SimplePolygon, build_cell_partition, build_nest_partition
from elastocorner.materials import LameParameters

ACCEPTANCE_LINES: list[str] = []


def square(side=1.0, center=(0.0, 0.0)):
    a = side / 2
    cx, cy = center
    return SimplePolygon.from_coords([(cx - a, cy - a), (cx + a, cy - a), (cx + a, cy + a), (cx - a, cy + a)])


def equilateral(area=1.0):
    a = math.sqrt(4 * area / math.sqrt(3))
    r_in = a * math.sqrt(3) / 6
    return SimplePolygon.from_coords([(-a / 2, -r_in), (a / 2, -r_in), (0.0, 2 * r_in)])


@pytest.fixture
def lame():
    return LameParameters(1.0, 1.0)


@pytest.fixture
def unit_square():
    return build_nest_partition([square()])


@pytest.fixture
def two_layer_nest():
    return build_nest_partition([square(2.0), square(1.0)])


@pytest.fixture
def split_square():
    return build_cell_partition(
        [
            SimplePolygon.from_coords([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5)]),
            SimplePolygon.from_coords([(-0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]),
        ]
    )


@pytest.fixture
def acceptance():
    def record(number: int, title: str, passed: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
