import math

import numpy as np
import pytest

from fkeit.boundary_data import BoundaryFunction
from fkeit.conductivity import ConductivityField
from fkeit.errors import CompatibilityViolation, MissingCollar
from fkeit.feynman_kac import (
    NeumannData,
    RobinData,
    continuum_horizon,
    martingale_residual,
    occupation_check,
    solve_cem,
    solve_continuum,
    solve_dirichlet,
)
from fkeit.geometry import Disk, ElectrodeConfig
from fkeit.pde_oracle import half_disk_electrodes_solution
from fkeit.reflecting_sde import SimulationParams, uniform_starts

I = ConductivityField.identity()
DISK = Disk()
HALVES = ((0.0, math.pi), (math.pi, 2 * math.pi))
C3_DISK = 3.3899  # first nonzero Neumann eigenvalue of the unit disk, (j'_11)^2


def test_dirichlet_constant_data_is_exact():
    r = solve_dirichlet((0.3, 0.1), BoundaryFunction.constant_on(DISK, 0.7), I, DISK, SimulationParams(), 500)
    assert r.mean == 0.7 and r.stderr == 0.0 and r.n_paths == 500


def test_dirichlet_harmonic_extension():
    phi = BoundaryFunction.fourier(DISK, cos=(1.0,))
    r = solve_dirichlet((0.5, 0.0), phi, I, DISK, SimulationParams(dt=1e-4, seed=2), 20_000)
    assert r.contains(0.5, slack=0.01)


def test_dirichlet_boundary_start():
    phi = BoundaryFunction.fourier(DISK, cos=(1.0,), sin=(0.0, 1.0))
    th = 0.8
    r = solve_dirichlet((math.cos(th), math.sin(th)), phi, I, DISK, SimulationParams(), 100)
    assert r.mean == pytest.approx(phi(th), abs=1e-12) and r.stderr == pytest.approx(0.0, abs=1e-12)


def test_dirichlet_shift_covariance():
    phi = BoundaryFunction.fourier(DISK, cos=(1.0,), sin=(0.3,))
    p = SimulationParams(dt=1e-3, seed=5)
    a = solve_dirichlet((0.2, -0.4), phi, I, DISK, p, 2000)
    b = solve_dirichlet((0.2, -0.4), phi.shifted(1.5), I, DISK, p, 2000)
    assert b.mean - a.mean == pytest.approx(1.5, abs=1e-12)
    assert b.stderr == pytest.approx(a.stderr, rel=1e-9)


def test_probes_do_not_share_paths():
    phi = BoundaryFunction.fourier(DISK, cos=(1.0,))
    p = SimulationParams(dt=1e-3, seed=5)
    a, b = solve_dirichlet([(0.1, 0.0), (0.1, 0.0)], phi, I, DISK, p, 1000)
    assert a.mean != b.mean


def test_continuum_zero_data():
    r = solve_continuum((0.5, 0.0), NeumannData(BoundaryFunction.constant_on(DISK, 0.0)), I, DISK,
                        SimulationParams(dt=1e-3), 100, c3=C3_DISK)
    assert r.mean == 0.0


def test_continuum_disk_cos():
    f = NeumannData(BoundaryFunction.fourier(DISK, cos=(1.0,)))
    p = SimulationParams(dt=4e-4, seed=7)
    a, b = solve_continuum([(0.5, 0.0), (0.0, 0.0)], f, I, DISK, p, 4000, c3=C3_DISK)
    assert a.contains(0.5, slack=0.02)
    assert b.contains(0.0, slack=0.02)
    assert a.horizon_used == pytest.approx(continuum_horizon(C3_DISK).T)
    assert a.truncation_tail_bound == pytest.approx(0.005)


def test_continuum_spatial_mean_is_zero():
    f = NeumannData(BoundaryFunction.fourier(DISK, cos=(1.0,), sin=(0.0, 0.5)))
    probes = uniform_starts(DISK, 3000, 11)
    res = solve_continuum(probes, f, I, DISK, SimulationParams(dt=1e-3, seed=11), 1, c3=C3_DISK)
    v = np.array([r.mean for r in res])
    assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_continuum_rejects_bad_input():
    f = NeumannData(BoundaryFunction.fourier(DISK, cos=(1.0,)))
    with pytest.raises(MissingCollar):
        solve_continuum((0, 0), f, ConductivityField.constant(2 * np.eye(2)), DISK, SimulationParams(), 10, c3=1.0)
    with pytest.raises(CompatibilityViolation):
        solve_continuum((0, 0), NeumannData(BoundaryFunction.constant_on(DISK, 1.0)), I, DISK, SimulationParams(),
                        10, c3=1.0)


def test_continuum_horizon_rule():
    h = continuum_horizon(2.0, 0.01)
    assert h.T == pytest.approx(0.5 + math.log(100) / 2)
    assert h.tail_bound == pytest.approx(0.01)


def test_cem_grounded_electrodes_give_zero():
    cfg = ElectrodeConfig.for_domain(DISK, HALVES, (0.0, 0.0), 1.0)
    r = solve_cem((0.3, 0.2), cfg, I, DISK, SimulationParams(dt=1e-3), 50)
    assert r.mean == 0.0 and r.stderr == 0.0


def test_cem_full_boundary_electrode_gives_one():
    cfg = ElectrodeConfig.for_domain(DISK, ((0.0, 2 * math.pi),), (1.0,), 0.7, check_grounding=False)
    p = SimulationParams(dt=1e-3, seed=1)
    r = solve_cem((0.4, -0.2), cfg, I, DISK, p, 200)
    # ∫ e^{-L/z} dL/z stopped at discount ε_kill is 1 − ε_kill per path, up to one step
    assert r.mean == pytest.approx(1.0, abs=2 * p.kill_threshold)


def test_cem_linearity_in_voltages():
    p = SimulationParams(dt=1e-3, seed=4)
    a = solve_cem((0.0, 0.5), ElectrodeConfig.for_domain(DISK, HALVES, (1.0, -1.0), 1.0), I, DISK, p, 300)
    b = solve_cem((0.0, 0.5), ElectrodeConfig.for_domain(DISK, HALVES, (2.5, -2.5), 1.0), I, DISK, p, 300)
    assert b.mean == pytest.approx(2.5 * a.mean, rel=1e-12)
    assert b.stderr == pytest.approx(2.5 * a.stderr, rel=1e-9)


def test_cem_half_disk_against_oracle():
    cfg = ElectrodeConfig.for_domain(DISK, HALVES, (1.0, -1.0), 1.0)
    probes = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)]
    exact = half_disk_electrodes_solution(1.0)(np.array(probes))
    res = solve_cem(probes, cfg, I, DISK, SimulationParams(dt=4e-4, seed=3), 2000)
    for r, u in zip(res, exact):
        assert r.contains(u, slack=0.02), (r, u)
        assert r.truncation_tail_bound <= 1e-5


def test_robin_data_checks():
    with pytest.raises(ValueError):
        RobinData(BoundaryFunction.constant_on(DISK, 1.0), BoundaryFunction.constant_on(DISK, -1.0)).check(DISK)
    with pytest.raises(ValueError):
        RobinData(BoundaryFunction.constant_on(DISK, 1.0), BoundaryFunction.constant_on(DISK, 0.0)).check(DISK)


def test_martingale_residual_constant_is_zero():
    zero = BoundaryFunction.constant_on(DISK, 0.0)
    res = martingale_residual(lambda p: np.full(len(p), 3.0), RobinData(zero, zero), I, DISK,
                              SimulationParams(dt=1e-3), [0.1, 0.5], 200)
    assert all(r.mean == 0.0 and r.stderr == 0.0 for r in res.residuals)


def test_martingale_residual_true_vs_shifted_solution():
    cfg = ElectrodeConfig.for_domain(DISK, HALVES, (1.0, -1.0), 1.0)
    u = half_disk_electrodes_solution(1.0, 4001)
    p = SimulationParams(dt=4e-4, seed=6)
    good = martingale_residual(u, cfg, I, DISK, p, [0.1, 0.5, 1.0], 4000, x=(0.2, 0.3))
    assert np.all(good.within(3.0))
    bad = martingale_residual(lambda q: u(q) + 0.1, cfg, I, DISK, p, [0.1, 0.5, 1.0], 4000, x=(0.2, 0.3))
    # the perturbation enters as −0.1·E L_t·g, which grows with t
    assert not bad.within(3.0)[-1]
    assert abs(bad.residuals[-1].mean) > abs(bad.residuals[0].mean)


def test_occupation_checks():
    p = SimulationParams(dt=1e-4, seed=3)
    one = occupation_check(BoundaryFunction.constant_on(DISK, 1.0), 1.0, I, DISK, p, 2000)
    assert one.reference == pytest.approx(2.0) and abs(one.z_score) < 3
    cos1 = occupation_check(BoundaryFunction.fourier(DISK, cos=(1.0,)), 1.0, I, DISK, p, 2000)
    assert cos1.reference == pytest.approx(0.0, abs=1e-12) and abs(cos1.z_score) < 3
    assert occupation_check(BoundaryFunction.constant_on(DISK, 1.0), 0.0, I, DISK, p, 10).estimate.mean == 0.0


def test_occupation_fixed_start():
    p = SimulationParams(dt=1e-4, seed=13)
    r = occupation_check(BoundaryFunction.constant_on(DISK, 1.0), 0.5, I, DISK, p, 2000, start=(0.5, 0.0))
    assert abs(r.z_score) < 3 + 0.02 / r.estimate.stderr
