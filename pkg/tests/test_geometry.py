import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fkeit.geometry import (
    BoundaryPoint,
    ConvexPolygon,
    Disk,
    ElectrodeConfig,
    Rectangle,
    ambiguous_projection_check,
    domain_from_dict,
)
from fkeit.errors import AmbiguousProjection

coord = st.floats(-3.0, 3.0, allow_nan=False)


def test_signed_distance_examples(disk, square):
    assert disk.signed_distance((0.0, 0.0)) == -1.0
    assert disk.signed_distance((1.0, 0.0)) == 0.0
    assert square.signed_distance((0.5, 1.25)) == pytest.approx(0.25, abs=1e-15)


def test_projection_examples(disk, square):
    b = disk.project_to_boundary((0.5, 0.0))
    assert b.position == pytest.approx((1.0, 0.0)) and b.outward_normal == pytest.approx((1.0, 0.0))
    b = disk.project_to_boundary((1.2, 0.0))
    assert b.position == pytest.approx((1.0, 0.0)) and b.outward_normal == pytest.approx((1.0, 0.0))
    b = square.project_to_boundary((0.5, 0.9))
    assert b.position == pytest.approx((0.5, 1.0)) and b.outward_normal == pytest.approx((0.0, 1.0))


def test_measures(disk, square):
    assert disk.boundary_measure() == pytest.approx(2 * math.pi)
    assert disk.area() == pytest.approx(math.pi)
    assert square.boundary_measure() == pytest.approx(4.0)
    assert square.area() == pytest.approx(1.0)
    assert disk.scaled(3.0).boundary_measure() == pytest.approx(6 * math.pi)


def test_polygon_measures(hexagon):
    assert hexagon.boundary_measure() == pytest.approx(6.0)
    assert hexagon.area() == pytest.approx(3 * math.sqrt(3) / 2)


def test_polygon_rejects_nonconvex_and_clockwise():
    with pytest.raises(ValueError):
        ConvexPolygon(((0, 0), (1, 0), (0.2, 0.2), (0, 1)))
    with pytest.raises(ValueError):
        ConvexPolygon(((0, 0), (0, 1), (1, 1), (1, 0)))


def test_polygon_vertex_normal_is_bisector(hexagon):
    b = hexagon.project_to_boundary((2.0, 0.0))
    assert b.position == pytest.approx((1.0, 0.0))
    assert b.outward_normal == pytest.approx((1.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(coord, coord)
def test_signed_distance_matches_projection(x, y):
    for dom in (Disk((0.2, -0.1), 1.3), Rectangle((0.0, 0.0), (2.0, 1.0))):
        sd = dom.signed_distance((x, y))
        b = dom.project_to_boundary((x, y))
        d = math.hypot(x - b.position[0], y - b.position[1])
        if isinstance(dom, Disk) and math.hypot(x - 0.2, y + 0.1) < 1e-9:
            continue
        assert abs(abs(sd) - d) <= 1e-12 * max(1.0, d)
        assert abs(dom.signed_distance(b.position)) <= dom.tolerance
        assert math.hypot(*b.outward_normal) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 2 * math.pi, exclude_max=True))
def test_projection_idempotent_on_boundary(theta):
    ang = np.arange(6) * math.pi / 3
    for dom in (Disk(), Rectangle((0, 0), (1, 2)), ConvexPolygon(tuple(zip(np.cos(ang), np.sin(ang))))):
        s = theta / (2 * math.pi) * dom.boundary_measure()
        p = dom.point_at(s)
        q = dom.project_to_boundary(p.position)
        assert q.position == pytest.approx(p.position, abs=1e-12)
        r = dom.project_to_boundary(q.position)
        assert r.position == pytest.approx(q.position, abs=1e-12)


def test_arc_parameter_round_trip(disk, square, hexagon):
    for dom in (disk, square, hexagon):
        arcs = np.linspace(0, dom.boundary_measure(), 37, endpoint=False) + 0.013
        pts = dom.points_at(arcs)
        proj = dom.project_many(pts[:, :2])
        assert np.allclose(proj[:, 4], arcs, atol=1e-12)


def test_interior_sampling(disk, square, hexagon):
    rng = np.random.default_rng(0)
    n = 1_000_000
    p = disk.sample_interior(rng, n)
    se = p.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(p.mean(axis=0)) <= 3 * se)
    assert np.all(disk.signed_distance(p[:1000]) <= 0)
    q = square.sample_interior(rng, n)
    frac = np.mean(q[:, 0] <= 0.5)
    assert abs(frac - 0.5) <= 3 * 0.5 / math.sqrt(n)
    h = hexagon.sample_interior(rng, 100_000)
    assert np.all(hexagon.signed_distance(h) <= hexagon.tolerance)
    assert np.abs(h.mean(axis=0)).max() < 0.01


def test_boundary_sampling_uniform(disk):
    b = disk.sample_boundary(np.random.default_rng(1), 20_000)
    ang = np.mod(np.arctan2(b[:, 1], b[:, 0]), 2 * math.pi)
    assert stats.kstest(ang / (2 * math.pi), "uniform").pvalue > 0.01
    assert np.allclose(np.hypot(b[:, 0], b[:, 1]), 1.0)


def test_electrode_at_examples(disk):
    one = ElectrodeConfig.for_domain(disk, ((0.0, math.pi),), (0.0,))
    assert one.electrode_at(disk.point_at(math.pi / 2)) == 0
    assert one.electrode_at(disk.point_at(3 * math.pi / 2)) is None
    two = ElectrodeConfig.for_domain(disk, ((0.0, math.pi / 2), (math.pi, 3 * math.pi / 2)), (1.0, -1.0))
    assert two.electrode_at(disk.point_at(math.pi)) == 1
    assert two.electrode_at(BoundaryPoint((-1.0, 0.0), (-1.0, 0.0), math.pi)) == 1


def test_electrode_validation(disk):
    with pytest.raises(ValueError):
        ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (0.5, 2.0)), (1.0, -1.0))
    with pytest.raises(ValueError):
        ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.0)), (1.0, 1.0))
    with pytest.raises(ValueError):
        ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.0)), (1.0, -1.0), contact_impedance=0.0)
    with pytest.raises(ValueError):
        ElectrodeConfig.for_domain(disk, ((1.0, 1.0),), (0.0,))


def test_electrode_indicators_disjoint(disk):
    cfg = ElectrodeConfig.for_domain(disk, ((0.0, 1.0), (2.0, 3.5), (5.0, 5.5)), (1.0, -2.0, 1.0), 0.5)
    assert cfg.total_length() <= disk.boundary_measure()
    s = np.linspace(0, disk.boundary_measure(), 5000, endpoint=False)
    hits = np.zeros((3, s.size), dtype=bool)
    for k, v in enumerate(s):
        l = cfg.electrode_at(v)
        if l is not None:
            hits[l, k] = True
    assert np.all(hits.sum(axis=0) <= 1)
    assert cfg.g_at(0.5) == 2.0 and cfg.f_at(2.5) == -4.0 and cfg.g_at(1.5) == 0.0


def test_wrapping_electrode(disk):
    cfg = ElectrodeConfig.for_domain(disk, ((6.0, 7.0), (2.0, 3.0)), (1.0, -1.0))
    assert cfg.electrode_at(0.2) == 0
    assert cfg.electrode_at(6.1) == 0


def test_polygon_electrode_may_cross_corner(square):
    cfg = ElectrodeConfig.for_domain(square, ((0.5, 1.5), (2.5, 3.5)), (1.0, -1.0))
    assert cfg.electrode_at(square.project_to_boundary((1.0, 0.2)).arc_parameter) == 0


def test_domain_dict_round_trip(disk, square, hexagon):
    for dom in (disk, square, hexagon):
        assert domain_from_dict(dom.to_dict()) == dom


def test_ambiguous_projection_at_center(disk):
    with pytest.raises(AmbiguousProjection):
        ambiguous_projection_check(disk, (0.0, 0.0))
    assert ambiguous_projection_check(disk, (0.5, 0.0)).position == pytest.approx((1.0, 0.0))
