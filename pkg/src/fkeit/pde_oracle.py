"""Deterministic reference solutions.

* Closed forms on the unit disk with κ = I: Neumann and constant-coefficient
  Robin solutions by separation of variables, the Dirichlet-to-Neumann
  multiplier ``|n|``, the boundary jump kernel and the occupation integral
  ``E_x ∫_0^t φ dL`` from the Neumann heat-kernel expansion.
* A cell-centred finite-volume solver for ``∇·(κ∇u) = 0`` on rectangles
  (Cartesian cells) and disks (polar cells) with Dirichlet, Neumann or
  Robin boundary conditions, and the first nonzero Neumann eigenvalue of the
  same discrete operator.

Face conductivities are harmonic means of the neighbouring cell values, so
piecewise-constant fields are handled.  Only isotropic fields are supported.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.special import jnp_zeros, jv

from .boundary_data import BoundaryFunction
from .conductivity import ConductivityField
from .errors import CompatibilityViolation, SolverDiverged
from .geometry import Disk, Domain, Rectangle

SOLVER_RTOL = 1e-10


# --------------------------------------------------------------------------
# closed forms on the unit disk


@dataclass(frozen=True)
class FourierBoundaryData:
    """``a0 + Σ_n a_n cos nθ + b_n sin nθ`` (``cos[n-1] = a_n``)."""

    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()
    mean: float = 0.0

    def __post_init__(self):
        n = max(len(self.cos), len(self.sin))
        c = tuple(float(v) for v in self.cos) + (0.0,) * (n - len(self.cos))
        s = tuple(float(v) for v in self.sin) + (0.0,) * (n - len(self.sin))
        if not all(map(math.isfinite, c + s + (self.mean,))):
            raise ValueError("Fourier coefficients must be finite")
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)

    @property
    def n_max(self) -> int:
        return len(self.cos)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.mean)
        for n in range(1, self.n_max + 1):
            out = out + self.cos[n - 1] * np.cos(n * theta) + self.sin[n - 1] * np.sin(n * theta)
        return out

    def to_boundary_function(self, domain: Domain) -> BoundaryFunction:
        return BoundaryFunction.fourier(domain, self.cos, self.sin, self.mean)

    @classmethod
    def from_boundary_function(cls, f: BoundaryFunction) -> "FourierBoundaryData":
        if f.pieces or f.table or any(f.linear):
            raise ValueError("only pure Fourier boundary functions convert exactly")
        return cls(f.cos, f.sin, f.constant)


def _polar(x, y):
    return np.hypot(x, y), np.arctan2(y, x)


def disk_neumann_analytic(data: FourierBoundaryData, r, theta):
    """Zero-mean solution of ``Δu = 0``, ``∂_r u = f`` on the unit circle."""
    if abs(data.mean) > 1e-14:
        raise CompatibilityViolation("Neumann data must have zero mean")
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(r, theta).shape)
    for n in range(1, data.n_max + 1):
        out = out + r**n * (data.cos[n - 1] * np.cos(n * theta) + data.sin[n - 1] * np.sin(n * theta)) / n
    return out


def disk_dtn(data: FourierBoundaryData) -> FourierBoundaryData:
    """Dirichlet-to-Neumann map on the unit disk: harmonic ``n`` is multiplied by ``n``."""
    n = np.arange(1, data.n_max + 1)
    return FourierBoundaryData(tuple(n * np.array(data.cos)), tuple(n * np.array(data.sin)), 0.0)


def disk_robin_analytic(f: FourierBoundaryData, g: float, r, theta):
    """Solution of ``Δu = 0``, ``∂_r u + g u = f`` on the unit circle with constant ``g > 0``."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.full(np.broadcast(r, theta).shape, f.mean / g)
    for n in range(1, f.n_max + 1):
        out = out + r**n * (f.cos[n - 1] * np.cos(n * theta) + f.sin[n - 1] * np.sin(n * theta)) / (n + g)
    return out


def half_disk_electrodes_solution(z: float = 1.0, n_terms: int = 20001):
    """Callable ``u(points)`` for two electrodes ``[0, π)`` at +1 and ``[π, 2π)`` at −1.

    The electrodes cover the circle, so ``g = 1/z`` everywhere and
    ``f = sign(sin θ)/z``; the series is summed to ``n_terms``.
    """
    n = np.arange(1, n_terms + 1, 2)
    coef = 4.0 / (math.pi * z * n * (n + 1.0 / z))

    def u(points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r, th = _polar(p[:, 0], p[:, 1])
        return (r[:, None] ** n[None, :] * np.sin(np.outer(th, n)) * coef).sum(axis=1)

    return u


def disk_jump_kernel(theta_x, theta_y):
    """Jump intensity ``N(x, y) = 1/(2π|x − y|²)`` of the boundary process on the unit circle (κ = I)."""
    d2 = 2.0 - 2.0 * np.cos(np.asarray(theta_x) - np.asarray(theta_y))
    return 1.0 / (2.0 * math.pi * d2)


def disk_occupation_reference(phi: BoundaryFunction, domain: Domain, field_: ConductivityField, start, t: float,
                              n_radial: int = 400) -> float:
    """``E_x ∫_0^t φ dL`` on the unit disk with κ = I, from the Neumann heat-kernel series.

    For the mode ``cos nθ`` (or ``sin nθ``) the contribution is
    ``Σ_k (1 − e^{−λ t})/λ · 2 J_n(j r_x) cos(nθ_x) / ((1 − n²/j²) J_n(j))``
    with ``j = j'_{n,k}``, ``λ = j²``; the constant mode adds ``t ∫φ dσ/|D|``.
    """
    if not (isinstance(domain, Disk) and domain.radius == 1.0 and domain.center == (0.0, 0.0)):
        raise ValueError("the heat-kernel reference is implemented for the unit disk")
    if not field_.is_identity:
        raise ValueError("the heat-kernel reference needs κ = I")
    data = FourierBoundaryData.from_boundary_function(phi)
    r, th = _polar(float(start[0]), float(start[1]))
    total = t * 2.0 * data.mean  # t ∫φ dσ/|D| with σ = 2π, |D| = π

    def radial_sum(n):
        j = jnp_zeros(n, n_radial)
        lam = j * j
        w = (1.0 - np.exp(-lam * t)) / lam * 2.0 * jv(n, j * r) / ((1.0 - n * n / lam) * jv(n, j))
        return float(np.sum(w))

    total += data.mean * radial_sum(0)
    for n in range(1, data.n_max + 1):
        a, b = data.cos[n - 1], data.sin[n - 1]
        if a == 0 and b == 0:
            continue
        total += radial_sum(n) * (a * math.cos(n * th) + b * math.sin(n * th))
    return total


# --------------------------------------------------------------------------
# finite-volume grids


@dataclass
class _Grid:
    """Cells with centres, volumes and face connectivity in a uniform format."""

    centers: np.ndarray  # (n, 2)
    volumes: np.ndarray  # (n,)
    # interior faces: cell a, cell b, transmissibility geometry |face|/distance
    ia: np.ndarray
    ib: np.ndarray
    geo: np.ndarray
    # boundary faces: owning cell, face length, half-cell distance, arc interval, midpoint
    bc: np.ndarray
    blen: np.ndarray
    bdist: np.ndarray
    barc: np.ndarray  # (m, 2)
    bmid: np.ndarray  # (m, 2)
    shape: tuple[int, int]
    kind: str
    meta: dict = field(default_factory=dict)


def _rect_grid(rect: Rectangle, n: int) -> _Grid:
    nx = n
    ny = max(2, int(round(n * rect.height / rect.width)))
    hx = rect.width / nx
    hy = rect.height / ny
    xc = rect.lo[0] + (np.arange(nx) + 0.5) * hx
    yc = rect.lo[1] + (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    idx = np.arange(nx * ny).reshape(nx, ny)
    ia = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    ib = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    geo = np.concatenate([np.full((nx - 1) * ny, hy / hx), np.full(nx * (ny - 1), hx / hy)])
    w, h = rect.width, rect.height
    i = np.arange(nx)
    j = np.arange(ny)
    # bottom, right, top, left in arc order
    bc = np.concatenate([idx[:, 0], idx[-1, :], idx[::-1, -1], idx[0, ::-1]])
    blen = np.concatenate([np.full(nx, hx), np.full(ny, hy), np.full(nx, hx), np.full(ny, hy)])
    bdist = np.concatenate([np.full(nx, hy / 2), np.full(ny, hx / 2), np.full(nx, hy / 2), np.full(ny, hx / 2)])
    s_bot = np.column_stack([i * hx, (i + 1) * hx])
    s_right = w + np.column_stack([j * hy, (j + 1) * hy])
    s_top = w + h + np.column_stack([i * hx, (i + 1) * hx])
    s_left = 2 * w + h + np.column_stack([j * hy, (j + 1) * hy])
    barc = np.concatenate([s_bot, s_right, s_top, s_left])
    x0, y0 = rect.lo
    x1, y1 = rect.hi
    bmid = np.concatenate(
        [
            np.column_stack([xc, np.full(nx, y0)]),
            np.column_stack([np.full(ny, x1), yc]),
            np.column_stack([xc[::-1], np.full(nx, y1)]),
            np.column_stack([np.full(ny, x0), yc[::-1]]),
        ]
    )
    return _Grid(
        np.column_stack([X.ravel(), Y.ravel()]), np.full(nx * ny, hx * hy), ia, ib, geo, bc, blen, bdist, barc,
        bmid, (nx, ny), "rectangle", {"xc": xc, "yc": yc, "rect": rect},
    )


def _disk_grid(disk: Disk, n: int) -> _Grid:
    nr = n
    nt = 4 * n
    R = disk.radius
    hr = R / nr
    ht = 2 * math.pi / nt
    rc = (np.arange(nr) + 0.5) * hr
    tc = (np.arange(nt) + 0.5) * ht
    Rg, Tg = np.meshgrid(rc, tc, indexing="ij")
    cx, cy = disk.center
    centers = np.column_stack([(cx + Rg * np.cos(Tg)).ravel(), (cy + Rg * np.sin(Tg)).ravel()])
    vol = (Rg * hr * ht).ravel()
    idx = np.arange(nr * nt).reshape(nr, nt)
    # radial faces at r_{i+1/2}
    ra = idx[:-1, :].ravel()
    rb = idx[1:, :].ravel()
    rgeo = np.repeat((np.arange(1, nr) * hr) * ht / hr, nt)
    # angular faces (periodic)
    ta = idx.ravel()
    tb = np.roll(idx, -1, axis=1).ravel()
    tgeo = np.repeat(hr / (rc * ht), nt)
    bc = idx[-1, :]
    blen = np.full(nt, R * ht)
    bdist = np.full(nt, hr / 2)
    barc = R * np.column_stack([np.arange(nt) * ht, (np.arange(nt) + 1) * ht])
    bmid = np.column_stack([cx + R * np.cos(tc), cy + R * np.sin(tc)])
    return _Grid(
        centers, vol, np.concatenate([ra, ta]), np.concatenate([rb, tb]), np.concatenate([rgeo, tgeo]), bc, blen,
        bdist, barc, bmid, (nr, nt), "disk", {"rc": rc, "tc": tc, "disk": disk},
    )


def make_grid(domain: Domain, resolution: int) -> _Grid:
    if resolution < 4:
        raise ValueError("resolution too small")
    if isinstance(domain, Disk):
        return _disk_grid(domain, resolution)
    if isinstance(domain, Rectangle):
        return _rect_grid(domain, resolution)
    raise NotImplementedError("the finite-volume oracle supports rectangles and disks")


def _isotropic_values(field_: ConductivityField, pts: np.ndarray) -> np.ndarray:
    k = field_.evaluate_many(pts)
    if np.any(np.abs(k[:, 1]) > 1e-12 * np.abs(k[:, 0])) or np.any(np.abs(k[:, 0] - k[:, 2]) > 1e-12 * np.abs(k[:, 0])):
        raise ValueError("the finite-volume oracle needs an isotropic conductivity")
    if np.any(k[:, 0] <= 0):
        raise ValueError("conductivity must be positive")
    return k[:, 0]


def _stiffness(grid: _Grid, kc: np.ndarray) -> sp.csr_matrix:
    """Flux matrix ``K`` (positive semidefinite) with ``(K u)_a = Σ_faces T (u_a − u_b)``."""
    ka = kc[grid.ia]
    kb = kc[grid.ib]
    T = grid.geo * 2.0 * ka * kb / (ka + kb)
    n = grid.centers.shape[0]
    rows = np.concatenate([grid.ia, grid.ib, grid.ia, grid.ib])
    cols = np.concatenate([grid.ia, grid.ib, grid.ib, grid.ia])
    vals = np.concatenate([T, T, -T, -T])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class GridSolution:
    """Cell values of a finite-volume solution with boundary-face values for interpolation."""

    domain: Domain
    problem: str
    resolution: int
    cell_centers: np.ndarray
    values: np.ndarray
    boundary_values: np.ndarray
    boundary_arcs: np.ndarray
    flux_residual: float
    solver_residual: float
    _grid: _Grid = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self._grid.shape

    def _interpolator(self):
        g = self._grid
        if g.kind == "disk":
            nr, nt = g.shape
            rc, tc = g.meta["rc"], g.meta["tc"]
            R = self.domain.radius
            u = self.values.reshape(nr, nt)
            ub = self.boundary_values
            centre = np.full(nt, u[0].mean())
            table = np.vstack([centre, u, ub])
            rr = np.concatenate([[0.0], rc, [R]])
            # periodic padding in θ
            table = np.hstack([table[:, -1:], table, table[:, :1]])
            tt = np.concatenate([[tc[0] - (tc[1] - tc[0])], tc, [tc[-1] + (tc[1] - tc[0])]])
            return RegularGridInterpolator((rr, tt), table, bounds_error=False, fill_value=None)
        nx, ny = g.shape
        xc, yc = g.meta["xc"], g.meta["yc"]
        rect = g.meta["rect"]
        u = self.values.reshape(nx, ny)
        ub = self.boundary_values
        bot = ub[:nx]
        right = ub[nx : nx + ny]
        top = ub[nx + ny : 2 * nx + ny][::-1]
        left = ub[2 * nx + ny :][::-1]
        table = np.empty((nx + 2, ny + 2))
        table[1:-1, 1:-1] = u
        table[1:-1, 0] = bot
        table[1:-1, -1] = top
        table[0, 1:-1] = left
        table[-1, 1:-1] = right
        table[0, 0] = 0.5 * (left[0] + bot[0])
        table[-1, 0] = 0.5 * (right[0] + bot[-1])
        table[0, -1] = 0.5 * (left[-1] + top[0])
        table[-1, -1] = 0.5 * (right[-1] + top[-1])
        xx = np.concatenate([[rect.lo[0]], xc, [rect.hi[0]]])
        yy = np.concatenate([[rect.lo[1]], yc, [rect.hi[1]]])
        return RegularGridInterpolator((xx, yy), table, bounds_error=False, fill_value=None)

    def __call__(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        interp = self.__dict__.get("_interp_cache")
        if interp is None:
            interp = self._interpolator()
            self.__dict__["_interp_cache"] = interp
        if self._grid.kind == "disk":
            cx, cy = self.domain.center
            r = np.minimum(np.hypot(p[:, 0] - cx, p[:, 1] - cy), self.domain.radius)
            th = np.mod(np.arctan2(p[:, 1] - cy, p[:, 0] - cx), 2 * math.pi)
            return interp(np.column_stack([r, th]))
        lo, hi = np.array(self.domain.lo), np.array(self.domain.hi)
        return interp(np.clip(p, lo, hi))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(self.cell_centers, self.values):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    @staticmethod
    def read_csv(path) -> np.ndarray:
        return np.loadtxt(path, delimiter=",", skiprows=1)


def fd_solve(
    problem: str, domain: Domain, field_: ConductivityField, data, resolution: int, g: BoundaryFunction | None = None,
) -> GridSolution:
    """Finite-volume solve of ``∇·(κ∇u) = 0``.

    ``problem`` is ``"dirichlet"`` (``data`` = boundary values φ),
    ``"continuum"`` (``data`` = outgoing flux f, zero mean, solution
    normalised to zero mean) or ``"cem"`` (``data`` = ElectrodeConfig or a
    flux ``f`` together with ``g``).
    """
    from .feynman_kac import RobinData  # circular import guard
    from .geometry import ElectrodeConfig

    grid = make_grid(domain, resolution)
    kc = _isotropic_values(field_, grid.centers)
    kb = kc[grid.bc]
    K = _stiffness(grid, kc)
    n = grid.centers.shape[0]

    if problem == "cem":
        if isinstance(data, ElectrodeConfig):
            robin = RobinData.from_electrodes(data)
        elif isinstance(data, RobinData):
            robin = data
        else:
            if g is None:
                raise ValueError("cem problem needs g")
            robin = RobinData(data, g)
        fb = robin.f.face_averages(domain, np.append(grid.barc[:, 0], grid.barc[-1, 1]))
        gb = robin.g.face_averages(domain, np.append(grid.barc[:, 0], grid.barc[-1, 1]))
    else:
        fb = data.face_averages(domain, np.append(grid.barc[:, 0], grid.barc[-1, 1]))
        gb = None

    a = kb / grid.bdist  # half-cell conductance per unit length
    rhs = np.zeros(n)
    diag = np.zeros(n)
    if problem == "dirichlet":
        np.add.at(diag, grid.bc, a * grid.blen)
        np.add.at(rhs, grid.bc, a * grid.blen * fb)
        A = (K + sp.diags(diag)).tocsc()
        u = spla.spsolve(A, rhs)
        res = np.linalg.norm(A @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        ub = fb
        flux = a * (ub - u[grid.bc]) * grid.blen
    elif problem == "continuum":
        total = float(np.sum(fb * grid.blen))
        scale = float(np.sum(np.abs(fb) * grid.blen))
        if abs(total) > 1e-8 * max(scale, 1e-300):
            raise CompatibilityViolation(f"discrete ∫f dσ = {total:.3e} is not zero")
        np.add.at(rhs, grid.bc, fb * grid.blen)
        w = grid.volumes
        A = sp.bmat([[K, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]]).tocsc()
        b = np.append(rhs, 0.0)
        sol = spla.spsolve(A, b)
        res = np.linalg.norm(A @ sol - b) / max(np.linalg.norm(b), 1e-300)
        u = sol[:n]
        ub = u[grid.bc] + fb * grid.bdist / kb
        flux = fb * grid.blen
    elif problem == "cem":
        # boundary value from κ (u_b − u_c)/d = f − g u_b
        coef = a * gb / (gb + a)
        np.add.at(diag, grid.bc, coef * grid.blen)
        np.add.at(rhs, grid.bc, a * fb / (gb + a) * grid.blen)
        A = (K + sp.diags(diag)).tocsc()
        u = spla.spsolve(A, rhs)
        res = np.linalg.norm(A @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        ub = (fb + a * u[grid.bc]) / (gb + a)
        flux = (fb - gb * ub) * grid.blen
    else:
        raise ValueError(f"unknown problem {problem!r}")
    if not np.all(np.isfinite(u)) or res > SOLVER_RTOL:
        raise SolverDiverged(f"relative residual {res:.3e} above {SOLVER_RTOL}")
    # net flux through the boundary must vanish for a source-free problem
    flux_scale = max(float(np.sum(np.abs(flux))), 1e-300)
    flux_res = abs(float(np.sum(flux))) / flux_scale
    return GridSolution(domain, problem, resolution, grid.centers, u, ub, grid.barc.copy(), flux_res, float(res), grid)


def richardson_error(coarse: GridSolution, fine: GridSolution, points) -> np.ndarray:
    """``|u_h − u_{h/2}|/3``, the second-order error estimate of the fine solution."""
    return np.abs(coarse(points) - fine(points)) / 3.0


# --------------------------------------------------------------------------
# spectral gap


def _field_key(field_: ConductivityField):
    grid = None if field_.grid is None else field_.grid.tobytes()
    return (field_.kind, field_.params, grid, field_.collar_radius, field_.blend_width, field_.value_scale,
            field_.coord_scale)


@lru_cache(maxsize=64)
def _gap_cached(domain: Domain, fkey, field_, resolution: int) -> float:
    grid = make_grid(domain, resolution)
    kc = _isotropic_values(field_, grid.centers)
    K = _stiffness(grid, kc).tocsc()
    M = sp.diags(grid.volumes).tocsc()
    try:
        vals = spla.eigsh(K, k=3, M=M, sigma=-1.0, which="LM", return_eigenvectors=False)
    except Exception as exc:  # ARPACK failure
        raise SolverDiverged(f"eigen solve failed: {exc}") from exc
    vals = np.sort(vals)
    scale = max(abs(vals[-1]), 1.0)
    nonzero = vals[vals > 1e-8 * scale]
    if nonzero.size == 0:
        raise SolverDiverged("no nonzero Neumann eigenvalue found")
    return float(nonzero[0])


def spectral_gap(domain: Domain, field_: ConductivityField, resolution: int = 48) -> float:
    """Smallest nonzero eigenvalue of the discrete Neumann operator ``−∇·κ∇``."""
    return _gap_cached(domain, _field_key(field_), _HashableField(field_), resolution)


class _HashableField:
    """Carries the field through the cache without participating in the key."""

    def __init__(self, f):
        self.f = f

    def __hash__(self):
        return 0

    def __eq__(self, other):
        return True

    def __getattr__(self, name):
        return getattr(self.f, name)
