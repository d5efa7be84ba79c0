import numpy as np
import pytest
from hypothesis import settings

from admitrec import unit_cube_grid
from admitrec.synthetic import plane_wave_frame

settings.register_profile("admitrec", deadline=None, max_examples=50, print_blob=True)
settings.load_profile("admitrec")

GAMMA_ANISO = np.array([[2, 0.3, 0], [0.3, 1.5, 0.2], [0, 0.2, 3]]) + 1j * np.array(
    [[1, 0.1, 0], [0.1, 2, 0], [0, 0, 1.2]]
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid16():
    return unit_cube_grid(16)


@pytest.fixture(scope="session")
def frame_identity():
    return plane_wave_frame(np.eye(3))


@pytest.fixture(scope="session")
def frame_aniso():
    return plane_wave_frame(GAMMA_ANISO)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_admitrec_acceptance", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
