"""The boundary trace process ``X̂_s = X_{τ(s)}`` and its empirical generator.

``τ(s)`` is the right-inverse of the local time ``L``.  The trace is sampled
on a local-time grid ``s_k = k Δs``; consecutive samples farther apart than
the jump threshold are recorded as jumps.  On the disk with κ = I the trace
generator is the Dirichlet-to-Neumann map and the jump intensity is
``N(x, y) = 1/(2π|x − y|²)``, entering the compensator with a factor 2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .boundary_data import BoundaryFunction
from .conductivity import ConductivityField
from .errors import InsufficientData, LocalTimeExhausted
from .geometry import BoundaryPoint, Domain
from .rng import derive_seed
from .reflecting_sde import LocalTimeLedger, SimulationParams, batch_exit, batch_trace
from .stats import EstimatorResult

DEFAULT_DTN_STEP = 0.01
JUMP_THRESHOLD_FACTOR = 10.0


def inverse_local_time(ledger: LocalTimeLedger, s: float) -> float:
    """``τ(s)``: the first recorded time at which the accumulated local time exceeds ``s``."""
    L = np.asarray(ledger.local_times, dtype=float)
    if s < 0:
        raise ValueError("local-time parameter must be nonnegative")
    if L[-1] <= s:
        raise LocalTimeExhausted(f"path ended with L = {L[-1]:.6g} ≤ s = {s:.6g}")
    k = int(np.searchsorted(L, s, side="right"))
    return float(ledger.times[k])


def jump_threshold(ds: float, dt: float, rho: float) -> float:
    """Smallest gap between consecutive trace samples that counts as a jump."""
    return JUMP_THRESHOLD_FACTOR * math.sqrt(ds * dt / rho)


@dataclass(frozen=True)
class BoundaryTrace:
    """Trace samples of one path on the grid ``s_k = k ds``."""

    ds: float
    s: np.ndarray
    arcs: np.ndarray
    points: np.ndarray  # (K, 2)
    times: np.ndarray
    threshold: float
    direct_integral: float = math.nan  # ∫ φ dL over [0, K ds), accumulated step by step

    @property
    def gaps(self) -> np.ndarray:
        return np.hypot(*np.diff(self.points, axis=0).T)

    @property
    def jump_mask(self) -> np.ndarray:
        """``mask[k]`` is true when the move from sample ``k−1`` to ``k`` is a jump (``mask[0]`` is false)."""
        return np.concatenate([[False], self.gaps > self.threshold])

    def jumps(self, domain: Domain | None = None) -> list[tuple[float, BoundaryPoint, BoundaryPoint, float]]:
        out = []
        gaps = self.gaps
        for k in np.nonzero(self.jump_mask)[0]:
            a = self._bp(k - 1, domain)
            b = self._bp(k, domain)
            out.append((float(self.s[k]), a, b, float(gaps[k - 1])))
        return out

    def samples(self, domain: Domain | None = None) -> list[tuple[float, BoundaryPoint]]:
        return [(float(self.s[k]), self._bp(k, domain)) for k in range(len(self.s))]

    def _bp(self, k, domain):
        p = (float(self.points[k, 0]), float(self.points[k, 1]))
        n = (math.nan, math.nan) if domain is None else domain.project_to_boundary(p).outward_normal
        return BoundaryPoint(p, n, float(self.arcs[k]))

    def count_jumps(self, min_gap: float) -> int:
        return int(np.sum(self.gaps > min_gap))

    def riemann_sum(self, phi: BoundaryFunction) -> float:
        """``Σ_k φ(X̂_{s_k}) Δs``, the trace-side view of ``∫ φ dL``."""
        return float(np.sum(phi(self.arcs, self.points[:, 0], self.points[:, 1])) * self.ds)


def _traces_from_sample(ts, threshold: float) -> list[BoundaryTrace]:
    K = ts.arcs.shape[1]
    s = np.arange(K) * ts.ds
    out = []
    for i in range(ts.arcs.shape[0]):
        ok = np.isfinite(ts.arcs[i])
        out.append(
            BoundaryTrace(ts.ds, s[ok], ts.arcs[i, ok], ts.points[i, ok], ts.times[i, ok], threshold,
                          float(ts.direct_integral[i]))
        )
    return out


def trace_paths(
    starts, S: float, field_: ConductivityField, domain: Domain, params: SimulationParams, ds: float = 1e-3,
    threshold: float | None = None, phi: BoundaryFunction | None = None,
) -> list[BoundaryTrace]:
    """One trace per start point, sampled on ``[0, S)`` with spacing ``ds``."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n_samples = int(round(S / ds))
    thr = jump_threshold(ds, params.dt, params.rho) if threshold is None else threshold
    ts = batch_trace(domain, field_, params, starts, ds, n_samples, phi)
    return _traces_from_sample(ts, thr)


def trace_path(
    start: BoundaryPoint, S: float, field_: ConductivityField, domain: Domain, params: SimulationParams,
    ds: float = 1e-3, threshold: float | None = None, phi: BoundaryFunction | None = None,
) -> BoundaryTrace:
    """Trace of a single path from the boundary point ``start``."""
    if abs(domain.signed_distance(start.position)) > domain.tolerance:
        raise ValueError("trace must start on the boundary")
    return trace_paths([start.position], S, field_, domain, params, ds, threshold, phi)[0]


# --------------------------------------------------------------------------
# Dirichlet-to-Neumann map


@dataclass(frozen=True)
class DtnEstimate:
    """``Λ̂φ(x) = (φ(x) − mean φ(X̂_t))/t`` at each start point."""

    arcs: np.ndarray
    points: np.ndarray
    t: float
    results: list[EstimatorResult]

    @property
    def values(self) -> np.ndarray:
        return np.array([r.mean for r in self.results])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([r.stderr for r in self.results])

    def relative_l2_error(self, reference: np.ndarray) -> float:
        """Discrete ``‖Λ̂φ − ref‖/‖ref‖`` over the (equispaced) start grid."""
        ref = np.asarray(reference, dtype=float)
        return float(np.linalg.norm(self.values - ref) / np.linalg.norm(ref))


def _trace_endpoints(start_arcs, t, field_, domain, params, n_paths):
    arcs = np.asarray(start_arcs, dtype=float).ravel()
    pts = domain.points_at(arcs)[:, :2]
    starts = np.repeat(pts, n_paths, axis=0)
    ts = batch_trace(domain, field_, params, starts, t, 2)
    return arcs, pts, ts.arcs[:, 1], ts.points[:, 1, :]


def estimate_dtn_many(
    phis: Sequence[BoundaryFunction], t: float, field_: ConductivityField, domain: Domain,
    params: SimulationParams, n_paths: int, start_arcs,
) -> list[DtnEstimate]:
    """Estimates for several functions on shared paths (so the map is exactly linear)."""
    arcs, pts, end_arcs, end_pts = _trace_endpoints(start_arcs, t, field_, domain, params, n_paths)
    out = []
    for phi in phis:
        phi0 = phi(arcs, pts[:, 0], pts[:, 1])
        phit = phi(end_arcs, end_pts[:, 0], end_pts[:, 1]).reshape(len(arcs), n_paths)
        res = [EstimatorResult.from_samples((phi0[j] - phit[j]) / t, horizon_used=t) for j in range(len(arcs))]
        out.append(DtnEstimate(arcs, pts, t, res))
    return out


def estimate_dtn(
    phi: BoundaryFunction, t: float, field_: ConductivityField, domain: Domain, params: SimulationParams,
    n_paths: int, start_arcs,
) -> DtnEstimate:
    """Forward difference of the trace semigroup at local time ``t``."""
    return estimate_dtn_many([phi], t, field_, domain, params, n_paths, start_arcs)[0]


@dataclass(frozen=True)
class DriftField:
    """``b = Λ_κ id`` at boundary points, with normal and tangential components."""

    arcs: np.ndarray
    points: np.ndarray
    b: np.ndarray  # (n, 2)
    stderr: np.ndarray  # (n, 2)
    normals: np.ndarray  # (n, 2)

    @property
    def normal_component(self) -> np.ndarray:
        return np.sum(self.b * self.normals, axis=1)

    @property
    def tangential_component(self) -> np.ndarray:
        tang = np.column_stack([-self.normals[:, 1], self.normals[:, 0]])
        return np.sum(self.b * tang, axis=1)

    @property
    def tangential_stderr(self) -> np.ndarray:
        tang = np.column_stack([-self.normals[:, 1], self.normals[:, 0]])
        return np.sqrt(np.sum((self.stderr * tang) ** 2, axis=1))


def drift_field(
    field_: ConductivityField, domain: Domain, params: SimulationParams, n_paths: int, start_arcs,
    t: float = DEFAULT_DTN_STEP,
) -> DriftField:
    """Coordinate-wise DtN estimate of ``φ(y) = y₁`` and ``φ(y) = y₂``."""
    ex, ey = estimate_dtn_many(
        [BoundaryFunction.coordinate(domain, 0), BoundaryFunction.coordinate(domain, 1)], t, field_, domain,
        params, n_paths, start_arcs,
    )
    normals = domain.points_at(ex.arcs)[:, 2:4]
    return DriftField(
        ex.arcs, ex.points, np.column_stack([ex.values, ey.values]), np.column_stack([ex.stderr, ey.stderr]),
        normals,
    )


# --------------------------------------------------------------------------
# jump kernel


@dataclass(frozen=True)
class JumpKernelEstimate:
    edges: np.ndarray  # arc bin edges
    counts: np.ndarray  # (B, B) jumps from bin i to bin j
    exposure: np.ndarray  # (B,) local time spent in each source bin
    estimate: np.ndarray  # counts / (2 · exposure_i · |bin_j|)
    min_gap: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_bin", "target_bin", "source_arc", "target_arc", "count", "exposure", "estimate"])
            c = self.centers
            for i in range(len(c)):
                for j in range(len(c)):
                    w.writerow([i, j, repr(float(c[i])), repr(float(c[j])), int(self.counts[i, j]),
                                repr(float(self.exposure[i])), repr(float(self.estimate[i, j]))])


def jump_statistics(traces: Sequence[BoundaryTrace], bins, perimeter: float, min_gap: float | None = None) -> JumpKernelEstimate:
    """Bin trace jumps by (source arc, target arc) and normalize by local-time exposure.

    ``bins`` is a bin count or an array of arc edges covering ``[0, perimeter]``.
    ``min_gap`` overrides the per-trace jump threshold.
    """
    edges = np.linspace(0.0, perimeter, int(bins) + 1) if np.ndim(bins) == 0 else np.asarray(bins, dtype=float)
    B = len(edges) - 1
    counts = np.zeros((B, B))
    exposure = np.zeros(B)
    for tr in traces:
        if len(tr.arcs) == 0:
            continue
        idx = np.clip(np.searchsorted(edges, np.mod(tr.arcs, perimeter), side="right") - 1, 0, B - 1)
        exposure += np.bincount(idx, minlength=B) * tr.ds
        thr = tr.threshold if min_gap is None else min_gap
        jm = np.nonzero(tr.gaps > thr)[0]
        np.add.at(counts, (idx[jm], idx[jm + 1]), 1.0)
    if np.any(exposure == 0):
        raise InsufficientData(f"{int(np.sum(exposure == 0))} source bins have no exposure")
    est = counts / (2.0 * exposure[:, None] * np.diff(edges)[None, :])
    thr_used = min_gap if min_gap is not None else (traces[0].threshold if traces else math.nan)
    return JumpKernelEstimate(edges, counts, exposure, est, float(thr_used))


def write_traces_csv(traces: Sequence[BoundaryTrace], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "s", "arc", "jump"])
        for i, tr in enumerate(traces):
            jm = tr.jump_mask
            for k in range(len(tr.s)):
                w.writerow([i, repr(float(tr.s[k])), repr(float(tr.arcs[k])), int(jm[k])])


def read_traces_csv(path, ds: float, threshold: float, domain: Domain) -> list[BoundaryTrace]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for i in np.unique(data[:, 0]).astype(int):
        rows = data[data[:, 0] == i]
        pts = domain.points_at(rows[:, 2])[:, :2]
        out.append(BoundaryTrace(ds, rows[:, 1], rows[:, 2], pts, np.full(len(rows), math.nan), threshold))
    return out


# --------------------------------------------------------------------------
# continuum solution through the trace


def continuum_via_trace(
    x, f: BoundaryFunction, field_: ConductivityField, domain: Domain, params: SimulationParams, n_paths: int,
    S: float, ds: float = 1e-3,
) -> list[EstimatorResult]:
    """``E_x v(X_{τ_D}, S)`` with ``v(y, S) = ∫_0^S E_y f(X̂_s) ds``.

    Each path first runs to the exit point ``X_{τ_D}``; a second, independent
    reflected path then starts there and ``v`` is the Riemann sum of ``f``
    along its trace.
    """
    probes = np.atleast_2d(np.asarray(x, dtype=float))
    starts = np.repeat(probes, n_paths, axis=0)
    ex = batch_exit(domain, field_, params, starts)
    p2 = params.with_(seed=derive_seed(params.seed, 0x7472))
    traces = trace_paths(ex.exit_points, S, field_, domain, p2, ds, phi=f)
    vals = np.array([tr.riemann_sum(f) for tr in traces])
    return [EstimatorResult.from_samples(vals[j * n_paths : (j + 1) * n_paths], horizon_used=S)
            for j in range(probes.shape[0])]
