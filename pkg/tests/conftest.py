import numpy as np
import pytest

from mpet.mesh import Mesh, unit_square_mesh


def skew_two_triangles() -> Mesh:
    """Two non-right triangles with two boundary markers."""
    return Mesh(
        np.array([[0.0, 0.0], [1.3, 0.2], [1.1, 1.4], [-0.2, 0.9]]),
        np.array([[0, 1, 2], [0, 2, 3]]),
        np.array([[0, 1], [1, 2], [2, 3], [3, 0]]),
        np.array([1, 1, 2, 2]),
    )


def unit_right_triangle() -> Mesh:
    return Mesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
        np.array([[0, 1], [1, 2], [2, 0]]),
        np.array([1, 1, 1]),
    )


@pytest.fixture
def skew_mesh():
    return skew_two_triangles()


@pytest.fixture
def right_triangle():
    return unit_right_triangle()


@pytest.fixture(params=["square", "skew"])
def two_triangle_mesh(request):
    return unit_square_mesh(1) if request.param == "square" else skew_two_triangles()


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines at the end of the session."""
    import sys

    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
