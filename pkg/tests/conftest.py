import numpy as np
import pytest

from occmap.grid import FREE, OCCUPIED, VOID, GroundTruthLayout, MapSpec


def box_layout(n=40, cell=0.05, walls=1, origin=(0.0, 0.0)):
    """Free square with a wall ring; no void."""
    cells = np.full((n, n), FREE, np.uint8)
    cells[:walls] = OCCUPIED
    cells[-walls:] = OCCUPIED
    cells[:, :walls] = OCCUPIED
    cells[:, -walls:] = OCCUPIED
    return GroundTruthLayout(cells, MapSpec(cell, n, origin))


def random_layout(rng, n=40, density=0.15, cell=0.05):
    cells = np.where(rng.random((n, n)) < density, OCCUPIED, FREE).astype(np.uint8)
    cells[rng.random((n, n)) < 0.02] = VOID
    cells[:, 0] = cells[:, -1] = OCCUPIED
    cells[0] = cells[-1] = OCCUPIED
    return GroundTruthLayout(cells, MapSpec(cell, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def box():
    return box_layout()
