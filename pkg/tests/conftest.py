import math

import numpy as np
import pytest

from fkeit.conductivity import ConductivityField
from fkeit.geometry import ConvexPolygon, Disk, ElectrodeConfig, Rectangle


@pytest.fixture
def disk():
    return Disk((0.0, 0.0), 1.0)


@pytest.fixture
def square():
    return Rectangle((0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def hexagon():
    ang = np.arange(6) * math.pi / 3
    return ConvexPolygon(tuple(zip(np.cos(ang), np.sin(ang))))


@pytest.fixture
def identity():
    return ConductivityField.identity()


@pytest.fixture
def half_electrodes(disk):
    return ElectrodeConfig.for_domain(disk, ((0.0, math.pi), (math.pi, 2 * math.pi)), (1.0, -1.0), 1.0)
