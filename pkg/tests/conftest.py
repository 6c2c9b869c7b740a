import numpy as np
import pytest

from impmaxwell.assembly import assemble_blocks
from impmaxwell.fespace import build_dof_map
from impmaxwell.mesh import build_cube_mesh, build_cube_with_hole_mesh

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cube1():
    return build_cube_mesh(1)


@pytest.fixture(scope="session")
def cube2():
    return build_cube_mesh(2)


@pytest.fixture(scope="session")
def hole1():
    return build_cube_with_hole_mesh(1)


@pytest.fixture(scope="session")
def blocks_cube2_p1(cube2):
    return assemble_blocks(cube2, build_dof_map(cube2, 1))
