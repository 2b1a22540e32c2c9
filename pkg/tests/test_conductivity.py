import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkeit.conductivity import ConductivityField
from fkeit.errors import EllipticityViolation
from fkeit.geometry import Disk, Rectangle


def test_identity_evaluates_to_identity():
    f = ConductivityField.identity()
    for x in [(0.0, 0.0), (0.3, -0.7), (1.0, 0.0)]:
        assert np.array_equal(f.evaluate(x), np.eye(2))


def test_bump_center_value():
    f = ConductivityField.bump(2.0, (0.1, 0.2), 0.5)
    assert f.evaluate((0.1, 0.2)) == pytest.approx(3 * np.eye(2))
    assert f.evaluate((0.9, 0.2)) == pytest.approx(np.eye(2))


def test_grid_exact_at_nodes():
    rng = np.random.default_rng(0)
    vals = 1.0 + rng.random((7, 5))
    f = ConductivityField.grid_sampled(vals, (-1.0, -1.0, 1.0, 1.0))
    xs = np.linspace(-1, 1, 7)
    ys = np.linspace(-1, 1, 5)
    for i in (0, 3, 6):
        for j in (0, 2, 4):
            k = f.evaluate((xs[i], ys[j]))
            assert k[0, 0] == pytest.approx(vals[i, j], abs=1e-12)
            assert k[0, 1] == 0.0


def test_factor_examples():
    assert ConductivityField.identity().diffusion_factor((0, 0)) == pytest.approx(math.sqrt(2) * np.eye(2))
    f = ConductivityField.constant(((2.0, 0.0), (0.0, 0.5)))
    assert f.diffusion_factor((0, 0)) == pytest.approx(np.diag([2.0, 1.0]))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(-0.95, 0.95))
def test_factor_reproduces_two_kappa(l1, l2, c):
    k12 = c * math.sqrt(l1 * l2)
    m = np.array([[l1, k12], [k12, l2]])
    f = ConductivityField.constant(m, c0=1e3)
    b = f.diffusion_factor((0.0, 0.0))
    assert b[0, 1] == 0.0
    assert b @ b.T == pytest.approx(2 * m, rel=1e-12, abs=1e-12)


def test_drift_examples():
    assert np.array_equal(ConductivityField.constant(((2.0, 0.3), (0.3, 1.0))).drift((0.2, 0.1)), [0.0, 0.0])
    f = ConductivityField.affine(1.0, (1.0, 0.0))
    assert f.evaluate((0.3, 0.0)) == pytest.approx(1.3 * np.eye(2))
    assert f.drift((0.3, -0.2)) == pytest.approx([1.0, 0.0])


def test_bump_drift_matches_central_differences():
    f = ConductivityField.bump(2.0, (0.1, 0.0), 0.6)
    h = 1e-5
    for x in [(0.2, 0.1), (-0.2, 0.3), (0.4, -0.25)]:
        x = np.array(x)
        dx = (f.evaluate(x + (h, 0)) - f.evaluate(x - (h, 0))) / (2 * h)
        dy = (f.evaluate(x + (0, h)) - f.evaluate(x - (0, h))) / (2 * h)
        a = np.array([dx[0, 0] + dy[1, 0], dx[0, 1] + dy[1, 1]])
        assert f.drift(x) == pytest.approx(a, abs=1e-6)


def test_grid_drift_matches_central_differences():
    xs = np.linspace(-1, 1, 9)
    vals = 2 + np.sin(xs)[:, None] * np.cos(xs)[None, :]
    f = ConductivityField.grid_sampled(vals, (-1.0, -1.0, 1.0, 1.0))
    h = 1e-6
    x = np.array([0.13, -0.31])
    dx = (f.evaluate(x + (h, 0))[0, 0] - f.evaluate(x - (h, 0))[0, 0]) / (2 * h)
    dy = (f.evaluate(x + (0, h))[0, 0] - f.evaluate(x - (0, h))[0, 0]) / (2 * h)
    # drift uses a difference step of a quarter grid spacing, so O(h_k^2) agreement
    h_k = 0.25 * (xs[1] - xs[0])
    assert f.drift(x) == pytest.approx([dx, dy], abs=h_k**2)


def test_ellipticity_checks():
    disk = Disk()
    rng = np.random.default_rng(0)
    rep = ConductivityField.constant(np.eye(2), c0=1.0).check_ellipticity(disk, 100, rng)
    assert rep.passed and rep.c0_estimate == 1.0
    bad = ConductivityField.constant(np.diag([4.0, 0.25]), c0=2.0)
    assert not bad.check_ellipticity(disk, 100, rng).passed
    with pytest.raises(EllipticityViolation):
        bad.evaluate((0.0, 0.0))
    bump = ConductivityField.bump(2.0, (0.0, 0.0), 0.5, c0=4.0)
    rep = bump.check_ellipticity(disk, 2000, rng)
    assert rep.passed and rep.max_eigenvalue <= 3.0 + 1e-12


def test_collar_is_identity_near_boundary():
    disk = Disk()
    f = ConductivityField.constant(np.diag([3.0, 2.0])).with_collar(disk, 0.1)
    assert f.satisfies_a1
    for r in (0.9, 0.95, 1.0):
        for th in np.linspace(0, 2 * math.pi, 9):
            assert f.evaluate((r * math.cos(th), r * math.sin(th))) == pytest.approx(np.eye(2), abs=1e-12)
    assert f.evaluate((0.0, 0.0)) == pytest.approx(np.diag([3.0, 2.0]))


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_evaluated_matrices_symmetric(x, y):
    sq = Rectangle((-1, -1), (1, 1))
    for f in (
        ConductivityField.bump(1.5, (0.2, 0.0), 0.7, background=((2.0, 0.5), (0.5, 1.0))),
        ConductivityField.radial((1.0, 0.0, 0.5)),
        ConductivityField.constant(((2.0, 0.5), (0.5, 1.0))).with_collar(sq, 0.2),
    ):
        k = f.evaluate((x, y))
        assert k[0, 1] == k[1, 0]
        assert np.all(np.linalg.eigvalsh(k) > 0)


def test_rescaled_field():
    f = ConductivityField.bump(2.0, (0.0, 0.0), 0.5)
    g = f.rescaled(2.0)
    assert g.evaluate((0.1, 0.05)) == pytest.approx(f.evaluate((0.2, 0.1)) / 4)
