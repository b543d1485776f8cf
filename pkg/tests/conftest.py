import numpy as np
import pytest

from reachcert import ActionLattice, Grid, builtin_system, value_iteration

LIN_AXES = [(-4.0, 4.0, 801)]
DI2_AXES = [(-2.5, 2.5, 51), (-2.0, 2.0, 41)]


@pytest.fixture(scope="session")
def lin():
    return builtin_system("linear1d")


@pytest.fixture(scope="session")
def lin_grid():
    return Grid.from_axes(LIN_AXES)


@pytest.fixture(scope="session")
def lin_lattice(lin):
    return ActionLattice.for_model(lin, 21, 11)


@pytest.fixture(scope="session")
def lin_field(lin, lin_grid, lin_lattice):
    return value_iteration(lin, lin_grid, 0.9, lin_lattice, tol=1e-6)


@pytest.fixture(scope="session")
def lin_field05(lin, lin_grid, lin_lattice):
    return value_iteration(lin, lin_grid, 0.5, lin_lattice, tol=1e-6)


@pytest.fixture(scope="session")
def di2():
    return builtin_system("di2")


@pytest.fixture(scope="session")
def di2_grid():
    return Grid.from_axes(DI2_AXES)


@pytest.fixture(scope="session")
def di2_lattice(di2):
    return ActionLattice.for_model(di2)


@pytest.fixture(scope="session")
def di2_field(di2, di2_grid, di2_lattice):
    return value_iteration(di2, di2_grid, 0.9, di2_lattice, tol=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
