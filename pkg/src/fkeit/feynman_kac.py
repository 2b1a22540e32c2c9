"""Monte Carlo estimators for the Dirichlet, continuum (Neumann) and electrode (Robin) problems.

All solvers take probe points and run ``n_paths`` independent paths per
probe; probe ``j`` uses path indices ``j*n_paths ... (j+1)*n_paths - 1`` so
no randomness is shared between probes.

* Dirichlet: ``u(x) = E_x φ(X_τ)`` with τ the first exit time.
* Continuum: ``u(x) = lim_t E_x ∫_0^t f(X_s) dL_s``, truncated at ``T``.
* Electrodes: ``u(x) = E_x ∫_0^∞ e_g(t) f(X_t) dL_t`` with
  ``e_g(t) = exp(-∫_0^t g dL)``, stopped once the discount is below the
  kill threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .boundary_data import BoundaryFunction
from .conductivity import ConductivityField
from .errors import CompatibilityViolation, MissingCollar
from .geometry import Domain, ElectrodeConfig
from .reflecting_sde import (
    SimulationParams,
    batch_discounted,
    batch_exit,
    batch_reflect,
    uniform_starts,
)
from .stats import EstimatorResult

DEFAULT_TAIL_TOLERANCE = 0.005


@dataclass(frozen=True)
class NeumannData:
    """Outgoing current density ``f`` with zero total flux."""

    f: BoundaryFunction

    def check(self, domain: Domain) -> None:
        total = self.f.integrate(domain)
        scale = domain.boundary_measure() * max(self.f.sup_norm(domain), 1e-300)
        if abs(total) > 1e-8 * scale:
            raise CompatibilityViolation(f"∫f dσ = {total:.3e} is not zero")


@dataclass(frozen=True)
class RobinData:
    """Robin data ``κν·∇u + g u = f``; electrodes give ``f = U_l/z`` and ``g = 1/z`` on ``E_l``."""

    f: BoundaryFunction
    g: BoundaryFunction

    @classmethod
    def from_electrodes(cls, config: ElectrodeConfig) -> "RobinData":
        return cls(BoundaryFunction.from_electrodes(config, "f"), BoundaryFunction.from_electrodes(config, "g"))

    def check(self, domain: Domain) -> None:
        s = np.linspace(0.0, domain.boundary_measure(), 4096, endpoint=False)
        gv = self.g.on_domain(domain, s)
        if np.any(gv < 0):
            raise ValueError("Robin coefficient g must be nonnegative")
        if not self.g.integrate(domain) > 0:
            raise ValueError("Robin coefficient g must be positive on a set of positive length")


def _probe_starts(probes, n_paths: int) -> tuple[np.ndarray, int]:
    pr = np.atleast_2d(np.asarray(probes, dtype=float))
    return np.repeat(pr, n_paths, axis=0), pr.shape[0]


def _split(values: np.ndarray, n_probes: int, n_paths: int) -> list[np.ndarray]:
    return [values[j * n_paths : (j + 1) * n_paths] for j in range(n_probes)]


# --------------------------------------------------------------------------
# Dirichlet


def dirichlet_samples(probes, phi: BoundaryFunction, field_, domain, params, n_paths):
    """Per-path ``φ(X_τ)`` plus the raw exit sample (for diagnostics)."""
    starts, n_probes = _probe_starts(probes, n_paths)
    ex = batch_exit(domain, field_, params, starts)
    vals = phi(ex.arcs, ex.exit_points[:, 0], ex.exit_points[:, 1])
    return _split(vals, n_probes, n_paths), ex


def solve_dirichlet(x, phi: BoundaryFunction, field_: ConductivityField, domain: Domain, params: SimulationParams, n_paths: int):
    """``E_x φ(X_τ)``; returns one :class:`EstimatorResult` (or a list for several probes)."""
    vals, _ = dirichlet_samples(x, phi, field_, domain, params, n_paths)
    res = [EstimatorResult.from_samples(v) for v in vals]
    return res[0] if np.ndim(x) == 1 else res


# --------------------------------------------------------------------------
# continuum


@dataclass(frozen=True)
class Horizon:
    T: float
    c3: float
    t0: float
    tail_bound: float


def continuum_horizon(c3: float, tol: float = DEFAULT_TAIL_TOLERANCE, t0: float | None = None) -> Horizon:
    """``T = t0 + ln(1/tol)/c3`` so that ``exp(-c3 (T - t0)) = tol``; ``t0`` defaults to ``1/c3``."""
    t0 = 1.0 / c3 if t0 is None else t0
    T = t0 + math.log(1.0 / tol) / c3
    # exp(-c3 (T - t0)) equals tol by construction; report it exactly rather than after rounding
    return Horizon(T, c3, t0, tol)


def solve_continuum(
    x, data: NeumannData, field_: ConductivityField, domain: Domain, params: SimulationParams, n_paths: int,
    c3: float | None = None, tol: float = DEFAULT_TAIL_TOLERANCE, t0: float | None = None,
    oracle_resolution: int = 48,
):
    """Truncated ``E_x ∫_0^T f dL``, the zero-mean Neumann solution.

    ``c3`` defaults to the smallest nonzero Neumann eigenvalue from the
    finite-volume oracle on the same domain and field.
    """
    if not field_.satisfies_a1:
        raise MissingCollar("continuum estimator needs κ = I near the boundary (declare a collar)")
    data.check(domain)
    if c3 is None:
        from .pde_oracle import spectral_gap

        c3 = spectral_gap(domain, field_, oracle_resolution)
    hz = continuum_horizon(c3, tol, t0)
    starts, n_probes = _probe_starts(x, n_paths)
    s = batch_reflect(domain, field_, params, starts, [hz.T], phi_a=data.f)
    res = [
        EstimatorResult.from_samples(v, horizon_used=hz.T, truncation_tail_bound=hz.tail_bound)
        for v in _split(s.integral_a[:, -1], n_probes, n_paths)
    ]
    return res[0] if np.ndim(x) == 1 else res


# --------------------------------------------------------------------------
# electrodes


def cem_samples(probes, robin: RobinData, field_, domain, params, n_paths):
    starts, n_probes = _probe_starts(probes, n_paths)
    s = batch_discounted(domain, field_, params, starts, robin.f, robin.g)
    return s, n_probes


def solve_cem(
    x, electrodes: ElectrodeConfig | RobinData, field_: ConductivityField, domain: Domain,
    params: SimulationParams, n_paths: int,
):
    """Discounted boundary functional until the discount drops below the kill threshold.

    The reported tail bound is ``‖f‖∞ · (largest final discount) · (largest
    observed gauge)``, a proxy for the neglected remainder.
    """
    robin = electrodes if isinstance(electrodes, RobinData) else RobinData.from_electrodes(electrodes)
    robin.check(domain)
    s, n_probes = cem_samples(x, robin, field_, domain, params, n_paths)
    fsup = robin.f.sup_norm(domain)
    out = []
    for j in range(n_probes):
        sl = slice(j * n_paths, (j + 1) * n_paths)
        bound = fsup * float(np.max(s.final_discount[sl])) * float(np.max(s.gauge[sl]))
        out.append(
            EstimatorResult.from_samples(
                s.values[sl], horizon_used=float(np.max(s.stop_times[sl])), truncation_tail_bound=bound
            )
        )
    return out[0] if np.ndim(x) == 1 else out


# --------------------------------------------------------------------------
# martingale residual


@dataclass(frozen=True)
class ResidualResult:
    times: np.ndarray
    residuals: list[EstimatorResult]

    def within(self, k: float = 3.0) -> np.ndarray:
        return np.array([abs(r.mean) <= k * r.stderr for r in self.residuals])


def martingale_residual(
    u_candidate: Callable[[np.ndarray], np.ndarray], electrodes: ElectrodeConfig | RobinData,
    field_: ConductivityField, domain: Domain, params: SimulationParams, t_grid: Sequence[float], n_paths: int,
    x=(0.0, 0.0), boundary_nodes: int = 4096,
) -> ResidualResult:
    """Estimate ``E_x[u(X_t) − u(x) − ∫_0^t g u dL + ∫_0^t f dL]`` on ``t_grid``.

    ``u_candidate`` maps an ``(n, 2)`` array of points to values; its boundary
    trace is tabulated on ``boundary_nodes`` equispaced arc nodes.
    """
    robin = electrodes if isinstance(electrodes, RobinData) else RobinData.from_electrodes(electrodes)
    ub = BoundaryFunction.from_callable(domain, lambda bx, by: u_candidate(np.column_stack([bx, by])), boundary_nodes)
    starts = np.repeat(np.atleast_2d(np.asarray(x, dtype=float)), n_paths, axis=0)
    s = batch_reflect(domain, field_, params, starts, list(t_grid), phi_a=robin.f, phi_b=robin.g, phi_c=ub)
    n, m = s.local_time.shape
    uX = np.asarray(u_candidate(s.positions.reshape(-1, 2)), dtype=float).reshape(n, m)
    u0 = float(np.asarray(u_candidate(np.atleast_2d(np.asarray(x, dtype=float))))[0])
    M = uX - u0 - s.integral_b + s.integral_a
    return ResidualResult(s.times.copy(), [EstimatorResult.from_samples(M[:, k], horizon_used=s.times[k]) for k in range(m)])


# --------------------------------------------------------------------------
# occupation formula


@dataclass(frozen=True)
class OccupationCheck:
    estimate: EstimatorResult
    reference: float

    @property
    def z_score(self) -> float:
        if self.estimate.stderr == 0:
            return 0.0 if self.estimate.mean == self.reference else math.inf
        return (self.estimate.mean - self.reference) / self.estimate.stderr


def occupation_check(
    phi: BoundaryFunction, t: float, field_: ConductivityField, domain: Domain, params: SimulationParams,
    n_paths: int, start=None,
) -> OccupationCheck:
    """Compare ``E ∫_0^t φ dL`` with the occupation-formula reference.

    With ``start=None`` paths start uniformly, the law is stationary and the
    reference is exactly ``t ∫φ dσ / |D|``.  A fixed start is supported on
    the unit disk with κ = I, where the transient comes from the Neumann heat
    kernel series.
    """
    if t == 0:
        return OccupationCheck(EstimatorResult(0.0, 0.0, n_paths, 0.0), 0.0)
    if start is None:
        starts = uniform_starts(domain, n_paths, params.seed)
        ref = t * phi.integrate(domain) / domain.area()
    else:
        from .pde_oracle import disk_occupation_reference

        starts = np.repeat(np.atleast_2d(np.asarray(start, dtype=float)), n_paths, axis=0)
        ref = disk_occupation_reference(phi, domain, field_, start, t)
    s = batch_reflect(domain, field_, params, starts, [t], phi_a=phi)
    return OccupationCheck(EstimatorResult.from_samples(s.integral_a[:, -1], horizon_used=t), ref)
