"""Symmetric positive-definite conductivity fields.

Every field is packed as ``(kind, params, grid)`` for the compiled kernels.
``params`` starts with a four-entry header

    [collar_radius, blend_width, value_scale, coord_scale]

followed by kind-specific numbers.  The raw field is ``K(x)``; the evaluated
field is ``value_scale * K(coord_scale * x)``, blended towards the identity
near the boundary when a collar is declared:

    κ(x) = I + χ(d(x)) (κ_raw(x) − I),   d = distance to the boundary,

with ``χ = 0`` for ``d < collar_radius`` and a quintic smoothstep up to 1 over
``blend_width``.  The drift is the row divergence ``a_i = Σ_j ∂_j κ_ij``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import EllipticityViolation, FactorizationFailure
from .geometry import PROJECT_FUNCS, SD_FUNCS, Domain, dom_project, dom_signed_distance

CONSTANT = 0
RADIAL = 1
BUMP = 2
GRID = 3
AFFINE = 4
INCLUSIONS = 5

_H = 4  # header length

_KIND_NAMES = {
    CONSTANT: "constant",
    RADIAL: "radial",
    BUMP: "bump",
    GRID: "grid",
    AFFINE: "affine",
    INCLUSIONS: "inclusions",
}


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _smoothstep(t):
    # quintic: C2, zero derivative at both ends
    if t <= 0.0:
        return 0.0, 0.0
    if t >= 1.0:
        return 1.0, 0.0
    v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    dv = 30.0 * t * t * (1.0 - t) * (1.0 - t)
    return v, dv


@njit(cache=True, nogil=True)
def _catmull_weights(t):
    t2 = t * t
    t3 = t2 * t
    w0 = 0.5 * (-t3 + 2.0 * t2 - t)
    w1 = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0)
    w2 = 0.5 * (-3.0 * t3 + 4.0 * t2 + t)
    w3 = 0.5 * (t3 - t2)
    return w0, w1, w2, w3


@njit(cache=True, nogil=True)
def _grid_value(p, g, x, y):
    # g carries one ghost layer on each side (linear extrapolation)
    nx = g.shape[0] - 2
    ny = g.shape[1] - 2
    x0 = p[_H]
    y0 = p[_H + 1]
    x1 = p[_H + 2]
    y1 = p[_H + 3]
    u = (x - x0) / (x1 - x0) * (nx - 1)
    v = (y - y0) / (y1 - y0) * (ny - 1)
    u = min(max(u, 0.0), nx - 1.0)
    v = min(max(v, 0.0), ny - 1.0)
    i = min(int(u), nx - 2)
    j = min(int(v), ny - 2)
    a0, a1, a2, a3 = _catmull_weights(u - i)
    b0, b1, b2, b3 = _catmull_weights(v - j)
    val = 0.0
    for di in range(4):
        if di == 0:
            wa = a0
        elif di == 1:
            wa = a1
        elif di == 2:
            wa = a2
        else:
            wa = a3
        row = b0 * g[i + di, j] + b1 * g[i + di, j + 1] + b2 * g[i + di, j + 2] + b3 * g[i + di, j + 3]
        val += wa * row
    return val


@njit(cache=True, nogil=True)
def _raw_radial(p, g, x, y):
    cx = p[_H]
    cy = p[_H + 1]
    n = int(p[_H + 2])
    dx = x - cx
    dy = y - cy
    q = dx * dx + dy * dy
    c = 0.0
    dc = 0.0  # dc/dq
    qk = 1.0
    for k in range(n):
        c += p[_H + 3 + k] * qk
        if k + 1 < n:
            dc += (k + 1) * p[_H + 4 + k] * qk
        qk *= q
    return c, 0.0, c, 2.0 * dc * dx, 2.0 * dc * dy


@njit(cache=True, nogil=True)
def _raw_bump(p, g, x, y):
    k11 = p[_H]
    k12 = p[_H + 1]
    k22 = p[_H + 2]
    r = p[_H + 5]
    amp = p[_H + 6]
    dx = x - p[_H + 3]
    dy = y - p[_H + 4]
    q = (dx * dx + dy * dy) / (r * r)
    if q >= 1.0:
        return k11, k12, k22, 0.0, 0.0
    psi = math.exp(1.0 - 1.0 / (1.0 - q))
    dpsi = -psi / ((1.0 - q) * (1.0 - q))  # d psi / d q
    gx = amp * dpsi * 2.0 * dx / (r * r)
    gy = amp * dpsi * 2.0 * dy / (r * r)
    return k11 + amp * psi, k12, k22 + amp * psi, gx, gy


@njit(cache=True, nogil=True)
def _raw_grid(p, g, x, y):
    nx = g.shape[0] - 2
    ny = g.shape[1] - 2
    hx = 0.25 * (p[_H + 2] - p[_H]) / (nx - 1)
    hy = 0.25 * (p[_H + 3] - p[_H + 1]) / (ny - 1)
    c = _grid_value(p, g, x, y)
    gx = (_grid_value(p, g, x + hx, y) - _grid_value(p, g, x - hx, y)) / (2.0 * hx)
    gy = (_grid_value(p, g, x, y + hy) - _grid_value(p, g, x, y - hy)) / (2.0 * hy)
    return c, 0.0, c, gx, gy


@njit(cache=True, nogil=True)
def _raw_inclusions(p, g, x, y):
    # background, n, width, then (cx, cy, r, value) per disc
    c = p[_H]
    n = int(p[_H + 1])
    w = p[_H + 2]
    gx = 0.0
    gy = 0.0
    for k in range(n):
        o = _H + 3 + 4 * k
        dx = x - p[o]
        dy = y - p[o + 1]
        rr = math.sqrt(dx * dx + dy * dy)
        jump = p[o + 3] - p[_H]
        if w <= 0.0:
            if rr < p[o + 2]:
                c += jump
        else:
            s, ds = _smoothstep((p[o + 2] - rr) / w + 0.5)
            c += jump * s
            if rr > 0.0 and ds != 0.0:
                gx -= jump * ds / w * dx / rr
                gy -= jump * ds / w * dy / rr
    return c, 0.0, c, gx, gy


@njit(cache=True, nogil=True)
def _raw_constant(p, g, x, y):
    return p[_H], p[_H + 1], p[_H + 2], 0.0, 0.0


@njit(cache=True, nogil=True)
def _raw_affine(p, g, x, y):
    c = p[_H] + p[_H + 1] * x + p[_H + 2] * y
    return c, 0.0, c, p[_H + 1], p[_H + 2]


@njit(cache=True, nogil=True)
def _raw(kind, p, g, x, y):
    """Raw field before scaling and collar: ``(k11, k12, k22, a1, a2)``."""
    if kind == CONSTANT:
        return _raw_constant(p, g, x, y)
    if kind == AFFINE:
        return _raw_affine(p, g, x, y)
    if kind == RADIAL:
        return _raw_radial(p, g, x, y)
    if kind == BUMP:
        return _raw_bump(p, g, x, y)
    if kind == GRID:
        return _raw_grid(p, g, x, y)
    return _raw_inclusions(p, g, x, y)


RAW_FUNCS = {
    CONSTANT: _raw_constant,
    AFFINE: _raw_affine,
    RADIAL: _raw_radial,
    BUMP: _raw_bump,
    GRID: _raw_grid,
    INCLUSIONS: _raw_inclusions,
}


@njit(cache=True, nogil=True)
def _scale(p, k11, k12, k22, a1, a2):
    vs = p[2]
    cs = p[3]
    return vs * k11, vs * k12, vs * k22, vs * cs * a1, vs * cs * a2


@njit(cache=True, nogil=True)
def _blend(p, k11, k12, k22, a1, a2, d, nx, ny):
    # identity inside the collar, smooth transition over the blend width;
    # (nx, ny) is the outward normal at the nearest boundary point
    chi, dchi = _smoothstep((d - p[0]) / p[1])
    if chi == 1.0:
        return k11, k12, k22, a1, a2
    if chi == 0.0:
        return 1.0, 0.0, 1.0, 0.0, 0.0
    gcx = -dchi / p[1] * nx
    gcy = -dchi / p[1] * ny
    m11 = k11 - 1.0
    m22 = k22 - 1.0
    b1 = chi * a1 + m11 * gcx + k12 * gcy
    b2 = chi * a2 + k12 * gcx + m22 * gcy
    return 1.0 + chi * m11, chi * k12, 1.0 + chi * m22, b1, b2


@njit(cache=True, nogil=True)
def field_eval(kind, p, g, dkind, dp, x, y):
    """Evaluated field and drift: ``(k11, k12, k22, a1, a2)``."""
    cs = p[3]
    k11, k12, k22, a1, a2 = _raw(kind, p, g, cs * x, cs * y)
    k11, k12, k22, a1, a2 = _scale(p, k11, k12, k22, a1, a2)
    if p[0] <= 0.0:
        return k11, k12, k22, a1, a2
    d = -dom_signed_distance(dkind, dp, x, y)
    if d >= p[0] + p[1]:
        return k11, k12, k22, a1, a2
    _, _, nx, ny, _ = dom_project(dkind, dp, x, y)
    return _blend(p, k11, k12, k22, a1, a2, d, nx, ny)


def make_field_eval(fkind: int, dkind: int, collar: bool):
    """Compiled ``(p, g, dp, x, y) -> (k11, k12, k22, a1, a2)`` specialised to one field and domain shape."""
    raw = RAW_FUNCS[fkind]
    sd = SD_FUNCS[dkind]
    proj = PROJECT_FUNCS[dkind]
    if not collar:

        @njit(cache=True, nogil=True)
        def fe(p, g, dp, x, y):
            cs = p[3]
            k11, k12, k22, a1, a2 = raw(p, g, cs * x, cs * y)
            return _scale(p, k11, k12, k22, a1, a2)

        return fe

    @njit(cache=True, nogil=True)
    def fe_collar(p, g, dp, x, y):
        d = -sd(dp, x, y)
        if d <= p[0]:
            return 1.0, 0.0, 1.0, 0.0, 0.0
        cs = p[3]
        k11, k12, k22, a1, a2 = raw(p, g, cs * x, cs * y)
        k11, k12, k22, a1, a2 = _scale(p, k11, k12, k22, a1, a2)
        if d >= p[0] + p[1]:
            return k11, k12, k22, a1, a2
        _, _, nx, ny, _ = proj(dp, x, y)
        return _blend(p, k11, k12, k22, a1, a2, d, nx, ny)

    return fe_collar


@njit(cache=True, nogil=True)
def factor(k11, k12, k22):
    """Lower-triangular ``B`` with ``B Bᵀ = 2κ``; returns ``(b11, b21, b22)``.

    Non-positive pivots come back as NaN so callers can raise.
    """
    if k11 <= 0.0:
        return math.nan, math.nan, math.nan
    b11 = math.sqrt(2.0 * k11)
    b21 = 2.0 * k12 / b11
    r = 2.0 * k22 - b21 * b21
    if r <= 0.0:
        return math.nan, math.nan, math.nan
    return b11, b21, math.sqrt(r)


@njit(cache=True, nogil=True)
def _eval_many(kind, p, g, dkind, dp, pts, out):
    for i in range(pts.shape[0]):
        k11, k12, k22, a1, a2 = field_eval(kind, p, g, dkind, dp, pts[i, 0], pts[i, 1])
        out[i, 0] = k11
        out[i, 1] = k12
        out[i, 2] = k22
        out[i, 3] = a1
        out[i, 4] = a2


# --------------------------------------------------------------------------
# Python surface


def _eigs(k11, k12, k22):
    m = 0.5 * (k11 + k22)
    r = np.hypot(0.5 * (k11 - k22), k12)
    return m - r, m + r


@dataclass(frozen=True)
class ConductivityField:
    """Conductivity with declared ellipticity bound ``c0`` and optional identity collar.

    Build instances with the ``constant``/``radial``/``bump``/``grid``/
    ``affine``/``inclusions`` constructors.
    """

    kind: int
    params: tuple[float, ...]
    grid: np.ndarray | None = field(default=None, compare=False, repr=False)
    domain: Domain | None = None
    collar_radius: float = 0.0
    blend_width: float = 0.0
    value_scale: float = 1.0
    coord_scale: float = 1.0
    c0: float = 100.0

    def __post_init__(self):
        if self.collar_radius > 0:
            if self.domain is None:
                raise ValueError("a boundary collar needs the domain")
            if not self.blend_width > 0:
                raise ValueError("collar blend width must be positive")
        if self.kind == GRID and self.grid is None:
            raise ValueError("grid field needs grid values")

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, matrix=((1.0, 0.0), (0.0, 1.0)), **kw) -> "ConductivityField":
        m = np.asarray(matrix, dtype=float)
        if m.ndim == 0:
            m = m * np.eye(2)
        if abs(m[0, 1] - m[1, 0]) > 1e-14 * np.abs(m).max():
            raise ValueError("conductivity matrix must be symmetric")
        return cls(CONSTANT, (m[0, 0], m[0, 1], m[1, 1]), **kw)

    @classmethod
    def identity(cls, **kw) -> "ConductivityField":
        return cls.constant(np.eye(2), **kw)

    @classmethod
    def radial(cls, coefficients, center=(0.0, 0.0), **kw) -> "ConductivityField":
        """Isotropic ``c(r) = Σ_k a_k r^{2k}`` about ``center``."""
        a = tuple(float(c) for c in coefficients)
        return cls(RADIAL, (float(center[0]), float(center[1]), len(a)) + a, **kw)

    @classmethod
    def bump(cls, amplitude, center=(0.0, 0.0), radius=0.5, background=((1.0, 0.0), (0.0, 1.0)), **kw):
        """``background + amplitude * exp(1 - 1/(1 - |x-c|²/r²)) I`` inside the bump radius."""
        b = np.asarray(background, dtype=float)
        if b.ndim == 0:
            b = b * np.eye(2)
        return cls(
            BUMP,
            (b[0, 0], b[0, 1], b[1, 1], float(center[0]), float(center[1]), float(radius), float(amplitude)),
            **kw,
        )

    @classmethod
    def affine(cls, c0_value=1.0, gradient=(0.0, 0.0), **kw) -> "ConductivityField":
        """Isotropic ``c + g·x``; mostly a test field with a known drift."""
        return cls(AFFINE, (float(c0_value), float(gradient[0]), float(gradient[1])), **kw)

    @classmethod
    def grid_sampled(cls, values, bbox, **kw) -> "ConductivityField":
        """Isotropic nodal values ``values[i, j]`` at ``x_i, y_j`` spanning ``bbox=(x0, y0, x1, y1)``."""
        v = np.asarray(values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 2:
            raise ValueError("grid needs at least 2x2 nodes")
        g = np.empty((v.shape[0] + 2, v.shape[1] + 2))
        g[1:-1, 1:-1] = v
        g[0, 1:-1] = 2 * v[0] - v[1]
        g[-1, 1:-1] = 2 * v[-1] - v[-2]
        g[:, 0] = 2 * g[:, 1] - g[:, 2]
        g[:, -1] = 2 * g[:, -2] - g[:, -3]
        return cls(GRID, tuple(float(b) for b in bbox), grid=g, **kw)

    @classmethod
    def inclusions(cls, background, discs, width=0.0, **kw) -> "ConductivityField":
        """Isotropic background with disc inclusions ``(cx, cy, r, value)``.

        ``width = 0`` gives the piecewise-constant field (finite-difference
        oracle only); ``width > 0`` mollifies each interface over that width.
        """
        flat = [float(background), len(discs), float(width)]
        for d in discs:
            flat.extend(float(v) for v in d)
        return cls(INCLUSIONS, tuple(flat), **kw)

    @classmethod
    def from_grid_csv(cls, path, **kw) -> "ConductivityField":
        """Read a grid field: first row ``nx,ny,x0,y0,x1,y1`` then rows ``i,j,value``."""
        with open(Path(path), newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        head = rows[0]
        try:
            float(head[0])
        except ValueError:
            rows = rows[1:]
        nx, ny = int(float(rows[0][0])), int(float(rows[0][1]))
        bbox = tuple(float(v) for v in rows[0][2:6])
        vals = np.full((nx, ny), np.nan)
        for r in rows[1:]:
            try:
                i, j, v = int(float(r[0])), int(float(r[1])), float(r[2])
            except ValueError:
                continue
            vals[i, j] = v
        if np.isnan(vals).any():
            raise ValueError("grid CSV is missing nodal values")
        return cls.grid_sampled(vals, bbox, **kw)

    def with_collar(self, domain: Domain, radius: float, blend_width: float | None = None):
        bw = radius if blend_width is None else blend_width
        return ConductivityField(
            self.kind, self.params, self.grid, domain, radius, bw, self.value_scale, self.coord_scale, self.c0
        )

    def with_domain(self, domain: Domain):
        return ConductivityField(
            self.kind,
            self.params,
            self.grid,
            domain,
            self.collar_radius,
            self.blend_width,
            self.value_scale,
            self.coord_scale,
            self.c0,
        )

    def rescaled(self, factor: float) -> "ConductivityField":
        """Field for the domain shrunk by ``1/factor``: ``κ^R(x) = R⁻² κ(R x)``."""
        if self.collar_radius > 0:
            raise ValueError("rescaling a collared field is not supported")
        return ConductivityField(
            self.kind,
            self.params,
            self.grid,
            None if self.domain is None else self.domain.scaled(1.0 / factor),
            0.0,
            0.0,
            self.value_scale / factor**2,
            self.coord_scale * factor,
            self.c0,
        )

    # packing ----------------------------------------------------------
    @property
    def packed(self) -> tuple[int, np.ndarray, np.ndarray]:
        head = [self.collar_radius, self.blend_width, self.value_scale, self.coord_scale]
        p = np.asarray(head + list(self.params), dtype=float)
        g = self.grid if self.grid is not None else np.zeros((1, 1))
        return self.kind, p, np.ascontiguousarray(g, dtype=float)

    def _dom(self):
        if self.domain is None:
            return 0, np.array([0.0, 0.0, 1.0])
        return self.domain.packed

    # properties -------------------------------------------------------
    @property
    def is_smooth(self) -> bool:
        """False for the piecewise-constant inclusion field (oracle only)."""
        return not (self.kind == INCLUSIONS and self.params[2] <= 0)

    @property
    def satisfies_a1(self) -> bool:
        """κ is the identity in a neighbourhood of the boundary."""
        if self.collar_radius > 0:
            return True
        return self.is_identity

    @property
    def is_identity(self) -> bool:
        if self.kind != CONSTANT:
            return False
        k11, k12, k22 = (self.value_scale * v for v in self.params[:3])
        return k11 == 1.0 and k12 == 0.0 and k22 == 1.0

    @property
    def is_isotropic_constant(self) -> bool:
        return self.kind == CONSTANT and self.params[1] == 0.0 and self.params[0] == self.params[2]

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]

    # evaluation -------------------------------------------------------
    def evaluate_many(self, pts) -> np.ndarray:
        """Columns ``k11, k12, k22, a1, a2`` at each point (no ellipticity check)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty((pts.shape[0], 5))
        kind, p, g = self.packed
        dk, dp = self._dom()
        _eval_many(kind, p, g, dk, dp, pts, out)
        return out

    def evaluate(self, x) -> np.ndarray:
        k11, k12, k22, _, _ = self.evaluate_many([x])[0]
        lo, hi = _eigs(k11, k12, k22)
        if lo < 1.0 / self.c0 or hi > self.c0:
            raise EllipticityViolation(
                f"eigenvalues ({lo:.6g}, {hi:.6g}) at {tuple(x)} outside [{1 / self.c0:.6g}, {self.c0:.6g}]"
            )
        return np.array([[k11, k12], [k12, k22]])

    def diffusion_factor(self, x) -> np.ndarray:
        try:
            k = self.evaluate(x)
        except EllipticityViolation as exc:
            raise FactorizationFailure(str(exc)) from exc
        b11, b21, b22 = factor(k[0, 0], k[0, 1], k[1, 1])
        if math.isnan(b11):
            raise FactorizationFailure(f"conductivity not positive definite at {tuple(x)}")
        return np.array([[b11, 0.0], [b21, b22]])

    def drift(self, x) -> np.ndarray:
        return self.evaluate_many([x])[0, 3:5].copy()

    def check_ellipticity(self, domain: Domain, n_samples: int, rng: np.random.Generator, c0=None):
        """Eigenvalue envelope over uniform interior samples against the declared bound."""
        c0 = self.c0 if c0 is None else c0
        pts = domain.sample_interior(rng, n_samples)
        k = self.evaluate_many(pts)
        lo, hi = _eigs(k[:, 0], k[:, 1], k[:, 2])
        est = max(float(np.max(hi)), 1.0 / float(np.min(lo))) if np.min(lo) > 0 else math.inf
        return EllipticityReport(est, est <= c0 * (1 + 1e-12), float(np.min(lo)), float(np.max(hi)))

    # config round trip ------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind_name, "params": list(self.params), "c0": self.c0}
        if self.grid is not None:
            d["grid"] = self.grid[1:-1, 1:-1].tolist()
        if self.collar_radius > 0:
            d["collar_radius"] = self.collar_radius
            d["blend_width"] = self.blend_width
        if self.value_scale != 1.0 or self.coord_scale != 1.0:
            d["value_scale"] = self.value_scale
            d["coord_scale"] = self.coord_scale
        return d


@dataclass(frozen=True)
class EllipticityReport:
    c0_estimate: float
    passed: bool
    min_eigenvalue: float
    max_eigenvalue: float
