"""Two-dimensional Lipschitz domains, boundary points and electrode layouts.

Each shape is packed into ``(kind, params)`` so the compiled path kernels can
evaluate signed distances and projections without Python objects.  The
Python classes below are thin, immutable wrappers around those kernels.

Arc-length parameter conventions (counter-clockwise):

* disk: ``s = R * angle`` with the angle measured from the +x axis;
* rectangle: starts at the lower-left corner, runs along the bottom edge;
* polygon: starts at vertex 0 and follows the vertex order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .errors import AmbiguousProjection

DISK = 0
RECTANGLE = 1
POLYGON = 2

REL_TOL = 1e-12


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _poly_n(p):
    return int(p[0])


@njit(cache=True, nogil=True)
def disk_sd(p, x, y):
    dx = x - p[0]
    dy = y - p[1]
    return math.sqrt(dx * dx + dy * dy) - p[2]


@njit(cache=True, nogil=True)
def rect_sd(p, x, y):
    dx = max(p[0] - x, x - p[2])
    dy = max(p[1] - y, y - p[3])
    if dx <= 0.0 and dy <= 0.0:
        return max(dx, dy)
    dx = max(dx, 0.0)
    dy = max(dy, 0.0)
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True, nogil=True)
def poly_sd(p, x, y):
    n = _poly_n(p)
    inside = True
    best_in = -1e300
    for i in range(n):
        h = p[1 + 2 * n + i] * (x - p[1 + i]) + p[1 + 3 * n + i] * (y - p[1 + n + i])
        if h > 0.0:
            inside = False
        if h > best_in:
            best_in = h
    if inside:
        return best_in
    best = 1e300
    for i in range(n):
        j = (i + 1) % n
        ln = p[1 + 4 * n + i]
        tx = (p[1 + j] - p[1 + i]) / ln
        ty = (p[1 + n + j] - p[1 + n + i]) / ln
        t = (x - p[1 + i]) * tx + (y - p[1 + n + i]) * ty
        t = min(max(t, 0.0), ln)
        ex = x - p[1 + i] - t * tx
        ey = y - p[1 + n + i] - t * ty
        d = math.sqrt(ex * ex + ey * ey)
        if d < best:
            best = d
    return best


@njit(cache=True, nogil=True)
def dom_signed_distance(kind, p, x, y):
    if kind == DISK:
        return disk_sd(p, x, y)
    if kind == RECTANGLE:
        return rect_sd(p, x, y)
    return poly_sd(p, x, y)


@njit(cache=True, nogil=True)
def disk_project(p, x, y):
    cx = p[0]
    cy = p[1]
    r = p[2]
    dx = x - cx
    dy = y - cy
    d = math.sqrt(dx * dx + dy * dy)
    if d == 0.0:
        # every boundary point is nearest; pick angle 0 by convention
        return cx + r, cy, 1.0, 0.0, 0.0
    nx = dx / d
    ny = dy / d
    a = math.atan2(ny, nx)
    if a < 0.0:
        a += 2.0 * math.pi
    return cx + r * nx, cy + r * ny, nx, ny, r * a


@njit(cache=True, nogil=True)
def rect_project(p, x, y):
    x0 = p[0]
    y0 = p[1]
    x1 = p[2]
    y1 = p[3]
    w = x1 - x0
    h = y1 - y0
    if x0 <= x <= x1 and y0 <= y <= y1:
        # interior (or on boundary): nearest face
        db = y - y0
        dr = x1 - x
        dt = y1 - y
        dl = x - x0
        m = min(min(db, dr), min(dt, dl))
        if m == db:
            return x, y0, 0.0, -1.0, x - x0
        if m == dr:
            return x1, y, 1.0, 0.0, w + (y - y0)
        if m == dt:
            return x, y1, 0.0, 1.0, w + h + (x1 - x)
        return x0, y, -1.0, 0.0, 2.0 * w + h + (y1 - y)
    px = min(max(x, x0), x1)
    py = min(max(y, y0), y1)
    cxo = x < x0 or x > x1
    cyo = y < y0 or y > y1
    if cxo and cyo:
        c = 1.0 / math.sqrt(2.0)
        if x < x0 and y < y0:
            return px, py, -c, -c, 0.0
        if x > x1 and y < y0:
            return px, py, c, -c, w
        if x > x1 and y > y1:
            return px, py, c, c, w + h
        return px, py, -c, c, 2.0 * w + h
    if cyo:
        if y < y0:
            return px, y0, 0.0, -1.0, px - x0
        return px, y1, 0.0, 1.0, w + h + (x1 - px)
    if x > x1:
        return x1, py, 1.0, 0.0, w + (py - y0)
    return x0, py, -1.0, 0.0, 2.0 * w + h + (y1 - py)


@njit(cache=True, nogil=True)
def poly_project(p, x, y):
    n = _poly_n(p)
    best = 1e300
    bi = 0
    bt = 0.0
    for i in range(n):
        j = (i + 1) % n
        ln = p[1 + 4 * n + i]
        tx = (p[1 + j] - p[1 + i]) / ln
        ty = (p[1 + n + j] - p[1 + n + i]) / ln
        t = (x - p[1 + i]) * tx + (y - p[1 + n + i]) * ty
        t = min(max(t, 0.0), ln)
        ex = x - p[1 + i] - t * tx
        ey = y - p[1 + n + i] - t * ty
        d = math.sqrt(ex * ex + ey * ey)
        if d < best:
            best = d
            bi = i
            bt = t
    j = (bi + 1) % n
    ln = p[1 + 4 * n + bi]
    eps = REL_TOL * p[2 + 6 * n]
    cum_i = p[1 + 5 * n + bi]
    if bt <= eps:
        k = (bi - 1 + n) % n
        nx = p[1 + 2 * n + k] + p[1 + 2 * n + bi]
        ny = p[1 + 3 * n + k] + p[1 + 3 * n + bi]
        nn = math.sqrt(nx * nx + ny * ny)
        return p[1 + bi], p[1 + n + bi], nx / nn, ny / nn, cum_i
    if bt >= ln - eps:
        nx = p[1 + 2 * n + bi] + p[1 + 2 * n + j]
        ny = p[1 + 3 * n + bi] + p[1 + 3 * n + j]
        nn = math.sqrt(nx * nx + ny * ny)
        return p[1 + j], p[1 + n + j], nx / nn, ny / nn, (cum_i + ln) % p[1 + 6 * n]
    tx = (p[1 + j] - p[1 + bi]) / ln
    ty = (p[1 + n + j] - p[1 + n + bi]) / ln
    return p[1 + bi] + bt * tx, p[1 + n + bi] + bt * ty, p[1 + 2 * n + bi], p[1 + 3 * n + bi], cum_i + bt


@njit(cache=True, nogil=True)
def dom_project(kind, p, x, y):
    """Nearest boundary point: returns ``(px, py, nx, ny, arc)``."""
    if kind == DISK:
        return disk_project(p, x, y)
    if kind == RECTANGLE:
        return rect_project(p, x, y)
    return poly_project(p, x, y)


SD_FUNCS = {DISK: disk_sd, RECTANGLE: rect_sd, POLYGON: poly_sd}
PROJECT_FUNCS = {DISK: disk_project, RECTANGLE: rect_project, POLYGON: poly_project}


@njit(cache=True, nogil=True)
def dom_perimeter(kind, p):
    if kind == DISK:
        return 2.0 * math.pi * p[2]
    if kind == RECTANGLE:
        return 2.0 * ((p[2] - p[0]) + (p[3] - p[1]))
    n = _poly_n(p)
    return p[1 + 6 * n]


@njit(cache=True, nogil=True)
def dom_point_at(kind, p, s):
    """Boundary point at arc parameter ``s`` (taken modulo the perimeter)."""
    per = dom_perimeter(kind, p)
    s = s % per
    if kind == DISK:
        a = s / p[2]
        nx = math.cos(a)
        ny = math.sin(a)
        return p[0] + p[2] * nx, p[1] + p[2] * ny, nx, ny
    if kind == RECTANGLE:
        x0, y0, x1, y1 = p[0], p[1], p[2], p[3]
        w = x1 - x0
        h = y1 - y0
        if s < w:
            return x0 + s, y0, 0.0, -1.0
        if s < w + h:
            return x1, y0 + (s - w), 1.0, 0.0
        if s < 2 * w + h:
            return x1 - (s - w - h), y1, 0.0, 1.0
        return x0, y1 - (s - 2 * w - h), -1.0, 0.0
    n = _poly_n(p)
    vx = p[1 : 1 + n]
    vy = p[1 + n : 1 + 2 * n]
    ex = p[1 + 2 * n : 1 + 3 * n]
    ey = p[1 + 3 * n : 1 + 4 * n]
    ln = p[1 + 4 * n : 1 + 5 * n]
    cum = p[1 + 5 * n : 2 + 6 * n]
    i = 0
    while i < n - 1 and s >= cum[i + 1]:
        i += 1
    t = s - cum[i]
    j = (i + 1) % n
    return (
        vx[i] + t * (vx[j] - vx[i]) / ln[i],
        vy[i] + t * (vy[j] - vy[i]) / ln[i],
        ex[i],
        ey[i],
    )


@njit(cache=True, nogil=True)
def dom_sample_interior(kind, p, u1, u2, u3):
    """Map three uniforms to a point distributed uniformly over the domain."""
    if kind == DISK:
        r = p[2] * math.sqrt(u1)
        a = 2.0 * math.pi * u2
        return p[0] + r * math.cos(a), p[1] + r * math.sin(a)
    if kind == RECTANGLE:
        return p[0] + u1 * (p[2] - p[0]), p[1] + u2 * (p[3] - p[1])
    n = _poly_n(p)
    vx = p[1 : 1 + n]
    vy = p[1 + n : 1 + 2 * n]
    # triangle fan from vertex 0, area-weighted
    tot = 0.0
    for i in range(1, n - 1):
        tot += 0.5 * abs((vx[i] - vx[0]) * (vy[i + 1] - vy[0]) - (vx[i + 1] - vx[0]) * (vy[i] - vy[0]))
    target = u3 * tot
    acc = 0.0
    k = n - 2
    for i in range(1, n - 1):
        acc += 0.5 * abs((vx[i] - vx[0]) * (vy[i + 1] - vy[0]) - (vx[i + 1] - vx[0]) * (vy[i] - vy[0]))
        if target <= acc:
            k = i
            break
    a = u1
    b = u2
    if a + b > 1.0:
        a = 1.0 - a
        b = 1.0 - b
    x = vx[0] + a * (vx[k] - vx[0]) + b * (vx[k + 1] - vx[0])
    y = vy[0] + a * (vy[k] - vy[0]) + b * (vy[k + 1] - vy[0])
    return x, y


@njit(cache=True, nogil=True)
def _sd_many(kind, p, pts, out):
    for i in range(pts.shape[0]):
        out[i] = dom_signed_distance(kind, p, pts[i, 0], pts[i, 1])


@njit(cache=True, nogil=True)
def _project_many(kind, p, pts, out):
    for i in range(pts.shape[0]):
        px, py, nx, ny, s = dom_project(kind, p, pts[i, 0], pts[i, 1])
        out[i, 0] = px
        out[i, 1] = py
        out[i, 2] = nx
        out[i, 3] = ny
        out[i, 4] = s


@njit(cache=True, nogil=True)
def _point_at_many(kind, p, arcs, out):
    for i in range(arcs.shape[0]):
        px, py, nx, ny = dom_point_at(kind, p, arcs[i])
        out[i, 0] = px
        out[i, 1] = py
        out[i, 2] = nx
        out[i, 3] = ny


@njit(cache=True, nogil=True)
def _sample_interior_many(kind, p, u, out):
    for i in range(u.shape[0]):
        x, y = dom_sample_interior(kind, p, u[i, 0], u[i, 1], u[i, 2])
        out[i, 0] = x
        out[i, 1] = y


# --------------------------------------------------------------------------
# Python surface


@dataclass(frozen=True)
class BoundaryPoint:
    position: tuple[float, float]
    outward_normal: tuple[float, float]
    arc_parameter: float

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]


class Domain:
    """Common behaviour for the packed shapes."""

    kind: int

    @cached_property
    def params(self) -> np.ndarray:
        return self._pack()

    def _pack(self) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def packed(self) -> tuple[int, np.ndarray]:
        return (self.kind, self.params)

    @property
    def tolerance(self) -> float:
        return REL_TOL * self.diameter

    # geometry queries -------------------------------------------------
    def signed_distance(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(pts.shape[0])
        _sd_many(self.kind, self.params, pts, out)
        return out if np.ndim(x) > 1 else float(out[0])

    def contains(self, x, closed: bool = True):
        sd = self.signed_distance(x)
        return sd <= self.tolerance if closed else sd < -self.tolerance

    def project_to_boundary(self, x) -> BoundaryPoint:
        px, py, nx, ny, s = dom_project(self.kind, self.params, float(x[0]), float(x[1]))
        return BoundaryPoint((px, py), (nx, ny), s)

    def project_many(self, pts) -> np.ndarray:
        """Vectorized projection; columns are ``px, py, nx, ny, arc``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty((pts.shape[0], 5))
        _project_many(self.kind, self.params, pts, out)
        return out

    def point_at(self, s: float) -> BoundaryPoint:
        px, py, nx, ny = dom_point_at(self.kind, self.params, float(s))
        return BoundaryPoint((px, py), (nx, ny), float(s) % self.boundary_measure())

    def points_at(self, arcs) -> np.ndarray:
        arcs = np.asarray(arcs, dtype=float).ravel()
        out = np.empty((arcs.size, 4))
        _point_at_many(self.kind, self.params, arcs, out)
        return out

    def boundary_measure(self) -> float:
        return float(dom_perimeter(self.kind, self.params))

    def area(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def diameter(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def boundary_moments(self) -> tuple[float, float]:
        """``(∫x dσ, ∫y dσ)`` over the boundary."""
        raise NotImplementedError  # pragma: no cover

    # sampling ---------------------------------------------------------
    def sample_interior(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        u = rng.random((n, 3))
        out = np.empty((n, 2))
        _sample_interior_many(self.kind, self.params, u, out)
        return out

    def sample_boundary(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Arclength-uniform boundary samples; columns ``x, y, nx, ny, arc``."""
        arcs = rng.random(n) * self.boundary_measure()
        pts = self.points_at(arcs)
        return np.column_stack([pts, arcs])

    def scaled(self, factor: float) -> "Domain":  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class Disk(Domain):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    kind: int = field(default=DISK, init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def _pack(self):
        return np.array([self.center[0], self.center[1], float(self.radius)])

    def area(self):
        return math.pi * self.radius**2

    @property
    def diameter(self):
        return 2.0 * self.radius

    def boundary_moments(self):
        per = self.boundary_measure()
        return per * self.center[0], per * self.center[1]

    def scaled(self, factor):
        return Disk((self.center[0] * factor, self.center[1] * factor), self.radius * factor)

    def to_dict(self):
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True, eq=True)
class Rectangle(Domain):
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)
    kind: int = field(default=RECTANGLE, init=False, repr=False)

    def __post_init__(self):
        lo = (float(self.lo[0]), float(self.lo[1]))
        hi = (float(self.hi[0]), float(self.hi[1]))
        if not (hi[0] > lo[0] and hi[1] > lo[1]):
            raise ValueError("rectangle needs hi > lo in both coordinates")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def _pack(self):
        return np.array([self.lo[0], self.lo[1], self.hi[0], self.hi[1]])

    @property
    def width(self):
        return self.hi[0] - self.lo[0]

    @property
    def height(self):
        return self.hi[1] - self.lo[1]

    def area(self):
        return self.width * self.height

    @property
    def diameter(self):
        return math.hypot(self.width, self.height)

    def boundary_moments(self):
        per = self.boundary_measure()
        return per * 0.5 * (self.lo[0] + self.hi[0]), per * 0.5 * (self.lo[1] + self.hi[1])

    def scaled(self, factor):
        return Rectangle(
            (self.lo[0] * factor, self.lo[1] * factor), (self.hi[0] * factor, self.hi[1] * factor)
        )

    def to_dict(self):
        return {"shape": "rectangle", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, eq=True)
class ConvexPolygon(Domain):
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: tuple[tuple[float, float], ...] = ()
    kind: int = field(default=POLYGON, init=False, repr=False)

    def __post_init__(self):
        v = tuple((float(a), float(b)) for a, b in self.vertices)
        if len(v) < 3:
            raise ValueError("polygon needs at least three vertices")
        n = len(v)
        for i in range(n):
            ax, ay = v[i]
            bx, by = v[(i + 1) % n]
            cx, cy = v[(i + 2) % n]
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            if cross <= 0:
                raise ValueError("polygon vertices must be strictly convex and counter-clockwise")
        object.__setattr__(self, "vertices", v)

    def _pack(self):
        v = np.asarray(self.vertices)
        n = len(v)
        nxt = np.roll(v, -1, axis=0)
        e = nxt - v
        ln = np.hypot(e[:, 0], e[:, 1])
        normals = np.column_stack([e[:, 1], -e[:, 0]]) / ln[:, None]
        cum = np.concatenate([[0.0], np.cumsum(ln)])
        diam = max(np.hypot(*(a - b)) for a in v for b in v)
        return np.concatenate([[n], v[:, 0], v[:, 1], normals[:, 0], normals[:, 1], ln, cum, [diam]])

    def area(self):
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def diameter(self):
        return float(self.params[-1])

    def boundary_moments(self):
        v = np.asarray(self.vertices)
        nxt = np.roll(v, -1, axis=0)
        ln = np.hypot(*(nxt - v).T)
        mid = 0.5 * (v + nxt)
        return float(np.sum(ln * mid[:, 0])), float(np.sum(ln * mid[:, 1]))

    def scaled(self, factor):
        return ConvexPolygon(tuple((a * factor, b * factor) for a, b in self.vertices))

    def to_dict(self):
        return {"shape": "polygon", "vertices": [list(p) for p in self.vertices]}


def domain_from_dict(d: dict) -> Domain:
    shape = d.get("shape")
    if shape == "disk":
        return Disk(tuple(d.get("center", (0.0, 0.0))), float(d.get("radius", 1.0)))
    if shape == "rectangle":
        return Rectangle(tuple(d.get("lo", (0.0, 0.0))), tuple(d.get("hi", (1.0, 1.0))))
    if shape == "polygon":
        return ConvexPolygon(tuple(tuple(p) for p in d["vertices"]))
    raise ValueError(f"unknown domain shape {shape!r}")


def ambiguous_projection_check(domain: Domain, x) -> BoundaryPoint:
    """Projection that refuses points with several nearest boundary points.

    Convex shapes only produce ties at isolated interior points (the disk
    centre, rectangle diagonals); those are rejected here for callers that
    need a unique normal.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(domain, Disk):
        if math.hypot(x[0] - domain.center[0], x[1] - domain.center[1]) <= domain.tolerance:
            raise AmbiguousProjection("disk centre has no unique nearest boundary point")
    return domain.project_to_boundary(x)


# --------------------------------------------------------------------------
# electrodes


@dataclass(frozen=True)
class ElectrodeConfig:
    """Electrode arcs ``[a_l, b_l)`` in arc parameter, voltages and contact impedance.

    An arc may wrap past the end of the boundary parametrisation by giving
    ``b_l`` larger than the perimeter.
    """

    arcs: tuple[tuple[float, float], ...]
    voltages: tuple[float, ...]
    contact_impedance: float = 1.0
    perimeter: float = 2.0 * math.pi
    check_grounding: bool = True

    def __post_init__(self):
        arcs = tuple((float(a), float(b)) for a, b in self.arcs)
        volts = tuple(float(u) for u in self.voltages)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "voltages", volts)
        if len(arcs) != len(volts):
            raise ValueError("one voltage per electrode is required")
        if not self.contact_impedance > 0:
            raise ValueError("contact impedance must be positive")
        for a, b in arcs:
            if not b > a:
                raise ValueError("electrode arcs need positive length")
            if b - a > self.perimeter + 1e-12:
                raise ValueError("electrode longer than the boundary")
        if self.check_grounding and abs(sum(volts)) > 1e-12 * max(1.0, max(map(abs, volts), default=1.0)):
            raise ValueError("voltages must sum to zero (grounding)")
        # disjointness: compare every pair on the circle of circumference `perimeter`
        for i in range(len(arcs)):
            for j in range(i + 1, len(arcs)):
                if _arcs_overlap(arcs[i], arcs[j], self.perimeter):
                    raise ValueError(f"electrodes {i} and {j} overlap")

    @classmethod
    def for_domain(cls, domain: Domain, arcs, voltages, contact_impedance=1.0, check_grounding=True):
        return cls(
            tuple(arcs), tuple(voltages), contact_impedance, domain.boundary_measure(), check_grounding
        )

    @property
    def n_electrodes(self) -> int:
        return len(self.arcs)

    def electrode_at(self, p: BoundaryPoint | float) -> int | None:
        s = p.arc_parameter if isinstance(p, BoundaryPoint) else float(p)
        for l, (a, b) in enumerate(self.arcs):
            if (s - a) % self.perimeter < b - a:
                return l
        return None

    def g_at(self, p) -> float:
        return 0.0 if self.electrode_at(p) is None else 1.0 / self.contact_impedance

    def f_at(self, p) -> float:
        l = self.electrode_at(p)
        return 0.0 if l is None else self.voltages[l] / self.contact_impedance

    def total_length(self) -> float:
        return sum(b - a for a, b in self.arcs)

    def scaled_voltages(self, alpha: float) -> "ElectrodeConfig":
        return ElectrodeConfig(
            self.arcs,
            tuple(alpha * u for u in self.voltages),
            self.contact_impedance,
            self.perimeter,
            self.check_grounding,
        )

    def to_dict(self) -> dict:
        return {
            "arcs": [list(a) for a in self.arcs],
            "voltages": list(self.voltages),
            "contact_impedance": self.contact_impedance,
            "check_grounding": self.check_grounding,
        }


def _arcs_overlap(a, b, per):
    # length of the intersection of two arcs on a circle of circumference `per`
    la = a[1] - a[0]
    lb = b[1] - b[0]
    d = (b[0] - a[0]) % per
    # b starts inside a, or a starts inside b
    return d < la - 1e-12 or (per - d) % per < lb - 1e-12
