"""Boundary functions evaluated inside the compiled path kernels.

A :class:`BoundaryFunction` is a sum of simple pieces, all functions of the
boundary point ``(x, y)`` with arc parameter ``s``:

* a constant,
* a linear function of the coordinates ``lx*x + ly*y``,
* a truncated Fourier series in ``s`` with the boundary perimeter as period,
* piecewise constants on arcs ``[a, b)`` (electrode indicators),
* a periodic table sampled on an equispaced arc grid, linearly interpolated.

The pieces are packed into one float array; :func:`bf_eval` is the compiled
evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Domain, ElectrodeConfig

_HEADER = 7  # const, lx, ly, period, nF, nP, nT


@njit(cache=True, nogil=True)
def bf_eval(p, s, x, y):
    val = p[0] + p[1] * x + p[2] * y
    per = p[3]
    nf = int(p[4])
    npc = int(p[5])
    nt = int(p[6])
    k = _HEADER
    if nf > 0:
        w = 2.0 * math.pi * s / per
        for n in range(nf):
            a = p[k + n]
            b = p[k + nf + n]
            if a != 0.0 or b != 0.0:
                val += a * math.cos((n + 1) * w) + b * math.sin((n + 1) * w)
        k += 2 * nf
    if npc > 0:
        for i in range(npc):
            a = p[k + i]
            b = p[k + npc + i]
            if (s - a) % per < b - a:
                val += p[k + 2 * npc + i]
        k += 3 * npc
    if nt > 0:
        u = (s % per) / per * nt
        j = int(u)
        if j >= nt:
            j = nt - 1
        t = u - j
        val += (1.0 - t) * p[k + j] + t * p[k + (j + 1) % nt]
    return val


@njit(cache=True, nogil=True)
def _eval_many(p, s, x, y, out):
    for i in range(s.shape[0]):
        out[i] = bf_eval(p, s[i], x[i], y[i])


@dataclass(frozen=True)
class BoundaryFunction:
    """Real function on the boundary, see module docstring for the pieces."""

    period: float
    constant: float = 0.0
    linear: tuple[float, float] = (0.0, 0.0)
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()
    pieces: tuple[tuple[float, float, float], ...] = ()
    table: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        nf = max(len(self.cos), len(self.sin))
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos) + (0.0,) * (nf - len(self.cos)))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin) + (0.0,) * (nf - len(self.sin)))
        object.__setattr__(self, "pieces", tuple((float(a), float(b), float(v)) for a, b, v in self.pieces))
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        object.__setattr__(self, "linear", (float(self.linear[0]), float(self.linear[1])))

    # constructors -----------------------------------------------------
    @classmethod
    def constant_on(cls, domain: Domain, c: float) -> "BoundaryFunction":
        return cls(domain.boundary_measure(), constant=float(c))

    @classmethod
    def fourier(cls, domain: Domain, cos=(), sin=(), constant=0.0) -> "BoundaryFunction":
        """``constant + Σ cos[n-1] cos(nθ) + sin[n-1] sin(nθ)`` with ``θ = 2π s / σ(∂D)``."""
        return cls(domain.boundary_measure(), constant=constant, cos=tuple(cos), sin=tuple(sin))

    @classmethod
    def coordinate(cls, domain: Domain, axis: int) -> "BoundaryFunction":
        lin = (1.0, 0.0) if axis == 0 else (0.0, 1.0)
        return cls(domain.boundary_measure(), linear=lin)

    @classmethod
    def from_electrodes(cls, config: ElectrodeConfig, which: str) -> "BoundaryFunction":
        """Robin data induced by electrodes: ``which`` is ``"f"`` (U_l/z) or ``"g"`` (1/z)."""
        z = config.contact_impedance
        if which == "f":
            vals = [u / z for u in config.voltages]
        elif which == "g":
            vals = [1.0 / z] * config.n_electrodes
        else:
            raise ValueError("which must be 'f' or 'g'")
        return cls(config.perimeter, pieces=tuple((a, b, v) for (a, b), v in zip(config.arcs, vals)))

    @classmethod
    def tabulate(cls, domain: Domain, values) -> "BoundaryFunction":
        """Periodic table on ``len(values)`` equispaced arc nodes starting at ``s=0``."""
        return cls(domain.boundary_measure(), table=tuple(np.asarray(values, dtype=float)))

    @classmethod
    def from_callable(cls, domain: Domain, fn, n_nodes: int = 4096) -> "BoundaryFunction":
        """Tabulate ``fn(x, y)`` on the boundary."""
        per = domain.boundary_measure()
        s = np.arange(n_nodes) * (per / n_nodes)
        pts = domain.points_at(s)
        return cls.tabulate(domain, fn(pts[:, 0], pts[:, 1]))

    # algebra ----------------------------------------------------------
    def scaled(self, alpha: float) -> "BoundaryFunction":
        return BoundaryFunction(
            self.period,
            alpha * self.constant,
            (alpha * self.linear[0], alpha * self.linear[1]),
            tuple(alpha * c for c in self.cos),
            tuple(alpha * c for c in self.sin),
            tuple((a, b, alpha * v) for a, b, v in self.pieces),
            tuple(alpha * v for v in self.table),
        )

    def __add__(self, other: "BoundaryFunction") -> "BoundaryFunction":
        if not math.isclose(self.period, other.period, rel_tol=1e-14):
            raise ValueError("boundary functions live on different boundaries")
        nf = max(len(self.cos), len(other.cos))

        def pad(t):
            return np.pad(np.asarray(t, dtype=float), (0, nf - len(t)))

        if self.table and other.table:
            if len(self.table) != len(other.table):
                raise ValueError("cannot add tables of different sizes")
            table = tuple(np.add(self.table, other.table))
        else:
            table = self.table or other.table
        return BoundaryFunction(
            self.period,
            self.constant + other.constant,
            (self.linear[0] + other.linear[0], self.linear[1] + other.linear[1]),
            tuple(pad(self.cos) + pad(other.cos)),
            tuple(pad(self.sin) + pad(other.sin)),
            self.pieces + other.pieces,
            table,
        )

    def shifted(self, c: float) -> "BoundaryFunction":
        return BoundaryFunction(
            self.period, self.constant + c, self.linear, self.cos, self.sin, self.pieces, self.table
        )

    # evaluation -------------------------------------------------------
    @property
    def packed(self) -> np.ndarray:
        nf = len(self.cos)
        parts = [
            [self.constant, self.linear[0], self.linear[1], self.period, nf, len(self.pieces), len(self.table)],
            self.cos,
            self.sin,
            [a for a, _, _ in self.pieces],
            [b for _, b, _ in self.pieces],
            [v for _, _, v in self.pieces],
            self.table,
        ]
        return np.concatenate([np.asarray(q, dtype=float) for q in parts])

    def __call__(self, s, x=0.0, y=0.0):
        s = np.asarray(s, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), s.shape)
        y = np.broadcast_to(np.asarray(y, dtype=float), s.shape)
        out = np.empty(s.size)
        _eval_many(self.packed, s.ravel().copy(), x.ravel().copy(), y.ravel().copy(), out)
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def on_domain(self, domain: Domain, s):
        """Evaluate at arc parameters ``s`` using the domain's boundary coordinates."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        pts = domain.points_at(s)
        return self(s, pts[:, 0], pts[:, 1])

    def sup_norm(self, domain: Domain, n: int = 8192) -> float:
        """Sampled ``max |f|`` over the boundary (exact for the piecewise parts)."""
        per = domain.boundary_measure()
        s = np.concatenate([np.arange(n) * (per / n), [a for a, _, _ in self.pieces]])
        return float(np.max(np.abs(self.on_domain(domain, s))))

    def integrate(self, domain: Domain) -> float:
        """Exact ``∫ f dσ`` over the boundary."""
        per = domain.boundary_measure()
        if not math.isclose(per, self.period, rel_tol=1e-12):
            raise ValueError("function period differs from the boundary length")
        mx, my = domain.boundary_moments()
        total = self.constant * per + self.linear[0] * mx + self.linear[1] * my
        total += sum(v * (b - a) for a, b, v in self.pieces)
        if self.table:
            total += per * float(np.mean(self.table))
        return total

    def face_averages(self, domain: Domain, edges) -> np.ndarray:
        """Average of ``f`` over each arc ``[edges[k], edges[k+1])``.

        Electrode pieces are integrated exactly; the smooth parts use
        8-point Gauss–Legendre on each arc.
        """
        edges = np.asarray(edges, dtype=float)
        a = edges[:-1]
        b = edges[1:]
        smooth = BoundaryFunction(self.period, self.constant, self.linear, self.cos, self.sin, (), self.table)
        xg, wg = np.polynomial.legendre.leggauss(8)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        s = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        vals = smooth.on_domain(domain, s).reshape(len(a), 8)
        out = 0.5 * (vals * wg[None, :]).sum(axis=1)
        per = self.period
        for pa, pb, v in self.pieces:
            # overlap of [a, b) with the periodic copies of [pa, pb)
            cover = np.zeros(len(a))
            for shift in (-per, 0.0, per):
                lo = np.maximum(a, pa + shift)
                hi = np.minimum(b, pb + shift)
                cover += np.clip(hi - lo, 0.0, None)
            out += v * cover / (b - a)
        return out

    def to_dict(self) -> dict:
        d = {"constant": self.constant}
        if any(self.linear):
            d["linear"] = list(self.linear)
        if self.cos:
            d["cos"] = list(self.cos)
        if self.sin:
            d["sin"] = list(self.sin)
        if self.pieces:
            d["pieces"] = [list(p) for p in self.pieces]
        if self.table:
            d["table"] = list(self.table)
        return d

    @classmethod
    def from_dict(cls, domain: Domain, d: dict) -> "BoundaryFunction":
        return cls(
            domain.boundary_measure(),
            float(d.get("constant", 0.0)),
            tuple(d.get("linear", (0.0, 0.0))),
            tuple(d.get("cos", ())),
            tuple(d.get("sin", ())),
            tuple(tuple(p) for p in d.get("pieces", ())),
            tuple(d.get("table", ())),
        )
