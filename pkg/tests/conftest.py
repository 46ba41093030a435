import numpy as np
import pytest

from robinspec.geometry import Interval, Rectangle, build_mesh, make_sigma
from robinspec.spectral import ForwardModel


def model_for(spec, q=0.0, c=1.0):
    mesh, bmesh = build_mesh(spec)
    return ForwardModel(mesh, bmesh, q, c)


@pytest.fixture(scope="session")
def interval_model():
    return model_for(Interval(1.0, 2001))


@pytest.fixture(scope="session")
def square_model():
    return model_for(Rectangle(1.0, 1.0, 101, 101))


@pytest.fixture(scope="session")
def small_square():
    return model_for(Rectangle(1.0, 1.0, 31, 31))


@pytest.fixture(scope="session")
def square_bottom(square_model):
    return make_sigma(square_model.bmesh, 0.0, 1.0)


@pytest.fixture
def zeros():
    def _z(model):
        return np.zeros(model.bmesh.size)
    return _z


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
