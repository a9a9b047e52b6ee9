from pathlib import Path

import numpy as np
import pytest

from poachgrid.geoformats import GeoTransform
from poachgrid.grid import ParkGrid

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def format_fixtures():
    return FIXTURES / "formats"


def full_grid(width, height, resolution=1000.0, origin_x=0.0):
    """ParkGrid with every cell in-park, origin top at height*resolution."""
    transform = GeoTransform(origin_x, height * resolution, resolution, resolution)
    return ParkGrid(transform, width, height, resolution,
                    np.ones((height, width), dtype=bool))
