import numpy as np
import pytest

from swarmlift.payload import PayloadModel, RailPath, evenly_spaced_candidates
from swarmlift.scenarios import lshape_payload, rectangle_payload


@pytest.fixture
def rect_payload():
    return rectangle_payload()


@pytest.fixture
def l_payload():
    return lshape_payload()


@pytest.fixture
def plank_payload():
    """1 m plank, line contacts at the ends, slot pair centered on x = +0.5.

    The contacts sit on the y = 0 line, so only zero-roll loadings balance;
    the slot pair is mirrored about y = 0 to keep its combined lift on that
    line. Massless robots make the lever arithmetic exact.
    """
    footprint = np.array([[-0.5, -0.05], [0.5, -0.05], [0.5, 0.05], [-0.5, 0.05]])
    rail = RailPath(footprint, closed=True)
    candidates = np.array([[0.5, -0.001], [0.5, 0.001], [-0.5, 0.0]])
    return PayloadModel(
        footprint=footprint,
        rail=rail,
        candidates=candidates,
        contacts=np.array([[-0.5, 0.0], [0.5, 0.0]]),
        robot_mass=0.0,
        robot_max_thrust=14.2,
        n_robots=2,
    )


def make_payload(footprint, n_candidates=12, contacts=None, robot_mass=0.1,
                 n_robots=8):
    footprint = np.asarray(footprint, dtype=float)
    rail = RailPath(footprint, closed=True)
    return PayloadModel(
        footprint=footprint,
        rail=rail,
        candidates=evenly_spaced_candidates(rail, n_candidates),
        contacts=footprint.copy() if contacts is None else np.asarray(contacts, float),
        robot_mass=robot_mass,
        robot_max_thrust=14.2,
        n_robots=n_robots,
    )
