import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkeit.boundary_data import BoundaryFunction
from fkeit.geometry import Disk, ElectrodeConfig, Rectangle

coef = st.lists(st.floats(-2, 2), min_size=0, max_size=4)


def test_fourier_evaluation(disk):
    f = BoundaryFunction.fourier(disk, cos=(1.0, 0.0), sin=(0.0, 0.5), constant=0.25)
    th = np.linspace(0, 2 * math.pi, 11)
    assert f(th) == pytest.approx(0.25 + np.cos(th) + 0.5 * np.sin(2 * th))


def test_fourier_uses_normalized_angle(square):
    f = BoundaryFunction.fourier(square, cos=(1.0,))
    assert f(1.0) == pytest.approx(math.cos(math.pi / 2), abs=1e-15)
    assert f(2.0) == pytest.approx(-1.0)


def test_coordinate_function(square):
    f = BoundaryFunction.coordinate(square, 1)
    s = np.linspace(0, 4, 17)
    assert f.on_domain(square, s) == pytest.approx(square.points_at(s)[:, 1])


def test_integrals(disk, square):
    assert BoundaryFunction.constant_on(disk, 2.0).integrate(disk) == pytest.approx(4 * math.pi)
    assert BoundaryFunction.fourier(disk, cos=(1.0,), sin=(0.0, 3.0)).integrate(disk) == pytest.approx(0.0, abs=1e-14)
    assert BoundaryFunction.coordinate(square, 0).integrate(square) == pytest.approx(2.0)
    cfg = ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.5)), (1.0, -1.0), 0.5)
    assert BoundaryFunction.from_electrodes(cfg, "f").integrate(disk) == pytest.approx(2 * 1.0 - 2 * 1.5)
    assert BoundaryFunction.from_electrodes(cfg, "g").integrate(disk) == pytest.approx(2 * 2.5)


def test_electrode_pieces(disk):
    cfg = ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.5)), (1.0, -1.0), 0.5)
    f = BoundaryFunction.from_electrodes(cfg, "f")
    assert f(0.5) == 2.0 and f(2.0) == -2.0 and f(1.5) == 0.0 and f(3.5) == 0.0


@settings(max_examples=100, deadline=None)
@given(coef, coef, st.floats(-3, 3), coef, st.floats(-2, 2), st.floats(0, 2 * math.pi))
def test_algebra_is_pointwise(c1, s1, k, c2, alpha, s):
    disk = Disk()
    f = BoundaryFunction.fourier(disk, c1, s1, k)
    g = BoundaryFunction.fourier(disk, c2, (), 0.0)
    assert (f + g)(s) == pytest.approx(f(s) + g(s), abs=1e-12)
    assert f.scaled(alpha)(s) == pytest.approx(alpha * f(s), abs=1e-12)
    assert f.shifted(alpha)(s) == pytest.approx(f(s) + alpha, abs=1e-12)


def test_face_averages(disk):
    f = BoundaryFunction.fourier(disk, cos=(1.0,))
    edges = np.linspace(0, 2 * math.pi, 9)
    exact = (np.sin(edges[1:]) - np.sin(edges[:-1])) / np.diff(edges)
    assert f.face_averages(disk, edges) == pytest.approx(exact, abs=1e-13)
    cfg = ElectrodeConfig.for_domain(disk, ((0.0, math.pi),), (1.0,), 1.0, check_grounding=False)
    pc = BoundaryFunction.from_electrodes(cfg, "f")
    assert pc.face_averages(disk, [0.0, 2.0, 4.0, 6.0]) == pytest.approx([1.0, (math.pi - 2) / 2, 0.0])


def test_table_interpolates_nodes():
    sq = Rectangle((0, 0), (1, 1))
    f = BoundaryFunction.from_callable(sq, lambda x, y: x * y, 64)
    s = np.arange(64) * (4 / 64)
    pts = sq.points_at(s)
    assert f.on_domain(sq, s) == pytest.approx(pts[:, 0] * pts[:, 1], abs=1e-12)


def test_dict_round_trip(disk):
    cfg = ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.5)), (1.0, -1.0), 0.5)
    f = BoundaryFunction.fourier(disk, (1.0, 2.0), (0.5,), 0.1) + BoundaryFunction.from_electrodes(cfg, "f")
    assert BoundaryFunction.from_dict(disk, f.to_dict()) == f


def test_period_mismatch_rejected(disk, square):
    with pytest.raises(ValueError):
        BoundaryFunction.constant_on(disk, 1.0) + BoundaryFunction.constant_on(square, 1.0)
