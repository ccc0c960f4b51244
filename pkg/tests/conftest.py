import numpy as np
import pytest

from zefoz.spin_algebra import make_spin_system
from zefoz.tensors import PR_YSO_SITE1, build_tensors, from_matrices

G_ISO = 0.001  # MHz/G


@pytest.fixture(scope="session")
def spin52():
    return make_spin_system(5)


@pytest.fixture(scope="session")
def site1():
    return build_tensors(**PR_YSO_SITE1)


@pytest.fixture(scope="session")
def isotropic():
    """Q = 0 and M = g * identity."""
    return from_matrices(G_ISO * np.eye(3), np.zeros((3, 3)))


def random_tensors(rng, e_max=1.0, d_max=5.0):
    """Random Q and M with generic orientation (principal values in the working ranges)."""
    from scipy.spatial.transform import Rotation

    e = rng.uniform(0.05, e_max)
    d = rng.uniform(1.0, d_max)
    g = rng.uniform(1.0, 12.0, 3)
    angles = rng.uniform(-180, 180, 3)
    t = build_tensors(e, d, g, angles, "zyz")
    # decouple the Zeeman and quadrupole frames
    r = Rotation.random(random_state=rng).as_matrix()
    return from_matrices(r @ np.asarray(t.m_matrix) @ r.T, t.q_matrix)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
