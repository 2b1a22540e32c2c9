"""Reflected Euler–Maruyama path engine with boundary local time.

One step from ``x``:

    y = x + a(x) dt + B(x) sqrt(dt) Z,      B Bᵀ = 2 κ(x),

and if ``y`` leaves the closed domain it is pushed back along the conormal
``κ(p)ν`` at the nearest boundary point ``p``:

    x' = y − 2δ κ(p)ν / (ν·κ(p)ν),   ΔL = ρ δ / (ν·κ(p)ν),

where ``δ`` is the overshoot distance.  With ``κ(p) = I`` this is the mirror
image ``p − δν`` and ``ΔL = ρδ``.  ``ρ = 2`` is the half-space constant for
which the uniform law is stationary and ``E L_t = t σ(∂D)/|D|``.

The compiled kernels below work on a range of path indices ``[i0, i1)`` and
write one row per path, so results do not depend on how the range is split
across worker threads.  Gaussian increments come from the counter-based
generator keyed by ``(seed, path index, step index)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from types import SimpleNamespace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .boundary_data import BoundaryFunction, bf_eval
from .conductivity import ConductivityField, factor, make_field_eval
from .errors import (
    CalibrationDiverged,
    FactorizationFailure,
    HorizonExceeded,
    StuckAtCorner,
)
from .geometry import PROJECT_FUNCS, SD_FUNCS, BoundaryPoint, Domain, dom_sample_interior
from .rng import STREAM_START, STREAM_STEP, gaussian_pair, uniform_pair
from .stats import EstimatorResult

RHO_HALF_SPACE = 2.0

OK = 0
HORIZON = 1
STUCK = 2
BAD_FACTOR = 3

_STATUS_ERRORS = {HORIZON: HorizonExceeded, STUCK: StuckAtCorner, BAD_FACTOR: FactorizationFailure}


# --------------------------------------------------------------------------
# compiled engine, specialised per (domain shape, field kind, collar)
#
# Kernels are closures over per-shape and per-kind helpers so that each
# combination compiles to straight-line code without runtime dispatch.


@njit(cache=True, nogil=True)
def _k_uniform_starts(i0, i1, seed, dk, dp, out):
    for i in range(i0, i1):
        u1, u2 = uniform_pair(seed, STREAM_START, i, 0)
        u3, _ = uniform_pair(seed, STREAM_START, i, 1)
        x, y = dom_sample_interior(dk, dp, u1, u2, u3)
        out[i, 0] = x
        out[i, 1] = y


def _build_engine(dk: int, fk: int, collar: bool) -> SimpleNamespace:
    sd = SD_FUNCS[dk]
    proj = PROJECT_FUNCS[dk]
    fe = make_field_eval(fk, dk, collar)

    @njit(cache=True, nogil=True)
    def propose(dp, fp, fg, x, y, dt, z1, z2):
        k11, k12, k22, a1, a2 = fe(fp, fg, dp, x, y)
        b11, b21, b22 = factor(k11, k12, k22)
        sq = math.sqrt(dt)
        return x + a1 * dt + b11 * sq * z1, y + a2 * dt + (b21 * z1 + b22 * z2) * sq

    @njit(cache=True, nogil=True)
    def push_back(dp, fp, fg, yx, yy, dist):
        px, py, nx, ny, arc = proj(dp, yx, yy)
        c11, c12, c22, _, _ = fe(fp, fg, dp, px, py)
        kx = c11 * nx + c12 * ny
        ky = c12 * nx + c22 * ny
        nkn = nx * kx + ny * ky
        return yx - 2.0 * dist * kx / nkn, yy - 2.0 * dist * ky / nkn, dist / nkn, px, py, arc

    @njit(cache=True, nogil=True)
    def reflect_step(dp, fp, fg, x, y, dt, z1, z2, rho, tol):
        """One reflected step: ``(x', y', dL, px, py, arc, status)``.

        ``px, py, arc`` locate the boundary point where local time was
        gained (meaningless when ``dL == 0``).
        """
        yx, yy = propose(dp, fp, fg, x, y, dt, z1, z2)
        if math.isnan(yx) or math.isnan(yy):
            return x, y, 0.0, 0.0, 0.0, 0.0, BAD_FACTOR
        d = sd(dp, yx, yy)
        if d <= tol:
            return yx, yy, 0.0, 0.0, 0.0, 0.0, OK
        nx_, ny_, dl, px, py, arc = push_back(dp, fp, fg, yx, yy, d)
        d2 = sd(dp, nx_, ny_)
        if d2 > tol:
            # second correction (corners); the gain is booked at the first contact
            nx_, ny_, dl2, _, _, _ = push_back(dp, fp, fg, nx_, ny_, d2)
            dl += dl2
            if sd(dp, nx_, ny_) > tol:
                return nx_, ny_, rho * dl, px, py, arc, STUCK
        return nx_, ny_, rho * dl, px, py, arc, OK

    @njit(cache=True, nogil=True)
    def k_exit(i0, i1, seed, dp, fp, fg, dt, tol, starts, max_steps, out, status):
        # out columns: exit x, exit y, arc, proposal x, proposal y, exit time
        for i in range(i0, i1):
            x = starts[i, 0]
            y = starts[i, 1]
            st = HORIZON
            if abs(sd(dp, x, y)) <= tol:
                px, py, _, _, arc = proj(dp, x, y)
                out[i, 0] = px
                out[i, 1] = py
                out[i, 2] = arc
                out[i, 3] = x
                out[i, 4] = y
                out[i, 5] = 0.0
                status[i] = OK
                continue
            for n in range(max_steps):
                z1, z2 = gaussian_pair(seed, STREAM_STEP, i, n)
                yx, yy = propose(dp, fp, fg, x, y, dt, z1, z2)
                if math.isnan(yx):
                    st = BAD_FACTOR
                    break
                if sd(dp, yx, yy) >= 0.0:
                    px, py, _, _, arc = proj(dp, yx, yy)
                    out[i, 0] = px
                    out[i, 1] = py
                    out[i, 2] = arc
                    out[i, 3] = yx
                    out[i, 4] = yy
                    out[i, 5] = (n + 1) * dt
                    st = OK
                    break
                x = yx
                y = yy
            status[i] = st

    @njit(cache=True, nogil=True)
    def k_reflect(
        i0, i1, seed, dp, fp, fg, dt, rho, tol, starts, ckpt, phi_a, phi_b, phi_c,
        L_out, Fa_out, Fb_out, X_out, maxsd, status,
    ):
        # ckpt: nondecreasing step counts at which L, ∫φ_a dL, ∫φ_b φ_c dL and X are recorded
        m = ckpt.shape[0]
        n_steps = ckpt[m - 1]
        for i in range(i0, i1):
            x = starts[i, 0]
            y = starts[i, 1]
            L = 0.0
            Fa = 0.0
            Fb = 0.0
            worst = sd(dp, x, y)
            k = 0
            st = OK
            while k < m and ckpt[k] == 0:
                X_out[i, k, 0] = x
                X_out[i, k, 1] = y
                k += 1
            for n in range(n_steps):
                z1, z2 = gaussian_pair(seed, STREAM_STEP, i, n)
                x, y, dl, px, py, arc, s = reflect_step(dp, fp, fg, x, y, dt, z1, z2, rho, tol)
                if s != OK:
                    st = s
                    break
                if dl > 0.0:
                    L += dl
                    Fa += bf_eval(phi_a, arc, px, py) * dl
                    Fb += bf_eval(phi_b, arc, px, py) * bf_eval(phi_c, arc, px, py) * dl
                    d = sd(dp, x, y)
                    if d > worst:
                        worst = d
                while k < m and ckpt[k] == n + 1:
                    L_out[i, k] = L
                    Fa_out[i, k] = Fa
                    Fb_out[i, k] = Fb
                    X_out[i, k, 0] = x
                    X_out[i, k, 1] = y
                    k += 1
            maxsd[i] = worst
            status[i] = st

    @njit(cache=True, nogil=True)
    def k_discounted(i0, i1, seed, dp, fp, fg, dt, rho, tol, starts, f, g, kill, max_steps, out, status):
        # out columns: ∫ e_g f dL, ∫ e_g dL, stop time, L, final discount
        for i in range(i0, i1):
            x = starts[i, 0]
            y = starts[i, 1]
            val = 0.0
            gauge = 0.0
            disc = 1.0
            L = 0.0
            st = HORIZON
            n = 0
            while n < max_steps:
                z1, z2 = gaussian_pair(seed, STREAM_STEP, i, n)
                x, y, dl, px, py, arc, s = reflect_step(dp, fp, fg, x, y, dt, z1, z2, rho, tol)
                n += 1
                if s != OK:
                    st = s
                    break
                if dl > 0.0:
                    L += dl
                    gv = bf_eval(g, arc, px, py)
                    fv = bf_eval(f, arc, px, py)
                    # exact ∫ e_g over the increment for g constant on the step
                    if gv > 0.0:
                        e = math.exp(-gv * dl)
                        w = disc * (1.0 - e) / gv
                        disc *= e
                    else:
                        w = disc * dl
                    val += fv * w
                    gauge += w
                    if disc < kill:
                        st = OK
                        break
            out[i, 0] = val
            out[i, 1] = gauge
            out[i, 2] = n * dt
            out[i, 3] = L
            out[i, 4] = disc
            status[i] = st

    @njit(cache=True, nogil=True)
    def k_trace(
        i0, i1, seed, dp, fp, fg, dt, rho, tol, starts, ds, n_samples, max_steps, phi,
        arcs, times, pts, direct, status,
    ):
        # sample k is the boundary point where L first exceeds s_k = k ds;
        # direct[i] accumulates ∫ φ dL over local times in [0, n_samples ds)
        S = n_samples * ds
        for i in range(i0, i1):
            x = starts[i, 0]
            y = starts[i, 1]
            L = 0.0
            acc = 0.0
            k = 0
            st = HORIZON
            n = 0
            while n < max_steps:
                z1, z2 = gaussian_pair(seed, STREAM_STEP, i, n)
                x, y, dl, px, py, arc, s = reflect_step(dp, fp, fg, x, y, dt, z1, z2, rho, tol)
                n += 1
                if s != OK:
                    st = s
                    break
                if dl > 0.0:
                    Lnew = L + dl
                    acc += bf_eval(phi, arc, px, py) * (min(Lnew, S) - min(L, S))
                    while k < n_samples and Lnew > k * ds:
                        arcs[i, k] = arc
                        times[i, k] = n * dt
                        pts[i, k, 0] = px
                        pts[i, k, 1] = py
                        k += 1
                    L = Lnew
                    if k == n_samples and L >= S:
                        st = OK
                        break
            direct[i] = acc
            status[i] = st

    return SimpleNamespace(
        propose=propose, reflect_step=reflect_step, k_exit=k_exit, k_reflect=k_reflect,
        k_discounted=k_discounted, k_trace=k_trace,
    )


@lru_cache(maxsize=None)
def engine(dk: int, fk: int, collar: bool) -> SimpleNamespace:
    return _build_engine(dk, fk, collar)


@lru_cache(maxsize=None)
def _coupled_kernel(key_a, key_b):
    step_a = engine(*key_a).reflect_step
    step_b = engine(*key_b).reflect_step

    @njit(cache=True, nogil=True)
    def k_coupled(
        i0, i1, seed, dpA, fpA, fgA, dtA, tolA, startsA, dpB, fpB, fgB, dtB, tolB, startsB,
        rho, ratio, n_steps, out, status,
    ):
        # both paths consume the same Gaussian pair at each step;
        # out columns: max_n |L_B − ratio·L_A|, final L_A, final L_B
        for i in range(i0, i1):
            xa = startsA[i, 0]
            ya = startsA[i, 1]
            xb = startsB[i, 0]
            yb = startsB[i, 1]
            La = 0.0
            Lb = 0.0
            gap = 0.0
            st = OK
            for n in range(n_steps):
                z1, z2 = gaussian_pair(seed, STREAM_STEP, i, n)
                xa, ya, dla, _, _, _, sa = step_a(dpA, fpA, fgA, xa, ya, dtA, z1, z2, rho, tolA)
                xb, yb, dlb, _, _, _, sb = step_b(dpB, fpB, fgB, xb, yb, dtB, z1, z2, rho, tolB)
                if sa != OK or sb != OK:
                    st = max(sa, sb)
                    break
                La += dla
                Lb += dlb
                d = abs(Lb - ratio * La)
                if d > gap:
                    gap = d
            out[i, 0] = gap
            out[i, 1] = La
            out[i, 2] = Lb
            status[i] = st

    return k_coupled


# --------------------------------------------------------------------------
# parameters and dispatch


@dataclass(frozen=True)
class SimulationParams:
    dt: float = 1e-4
    local_time_constant: float = RHO_HALF_SPACE
    seed: int = 0
    max_time: float = 100.0
    kill_threshold: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.local_time_constant > 0:
            raise ValueError("local-time constant must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if not 0 < self.kill_threshold < 1:
            raise ValueError("kill threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @classmethod
    def for_domain(cls, domain: Domain, **kw) -> "SimulationParams":
        """Defaults scaled to the domain: ``dt = 1e-4 · diameter²``."""
        kw.setdefault("dt", 1e-4 * domain.diameter**2)
        return cls(**kw)

    @property
    def rho(self) -> float:
        return self.local_time_constant

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt - 1e-9))

    @property
    def seed_u64(self) -> np.uint64:
        return np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF)

    def with_(self, **kw) -> "SimulationParams":
        return replace(self, **kw)


def run_parallel(kernel: Callable, n: int, workers: int, *args) -> None:
    """Call ``kernel(i0, i1, *args)`` over ``workers`` contiguous ranges of ``[0, n)``.

    Kernels release the GIL, so threads run concurrently.  A zero-length
    call first forces compilation outside the pool.
    """
    kernel(0, 0, *args)
    workers = max(1, min(int(workers), n))
    if workers == 1:
        kernel(0, n, *args)
        return
    cuts = [n * k // workers for k in range(workers + 1)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(kernel, cuts[k], cuts[k + 1], *args) for k in range(workers)]
        for fut in futures:
            fut.result()


def default_workers() -> int:
    return os.cpu_count() or 1


def _check_field(field_: ConductivityField, domain: Domain) -> None:
    if not field_.is_smooth:
        raise ValueError("the path engine needs a smooth conductivity (mollify piecewise fields)")
    if field_.collar_radius > 0 and field_.domain != domain:
        raise ValueError("the conductivity collar was declared for a different domain")


def _engine_key(domain: Domain, field_: ConductivityField):
    return (domain.kind, field_.kind, field_.collar_radius > 0)


def _packs(domain: Domain, field_: ConductivityField):
    """Specialised engine plus the packed domain and field arrays."""
    _check_field(field_, domain)
    _, dp = domain.packed
    _, fp, fg = field_.packed
    return engine(*_engine_key(domain, field_)), dp, fp, fg


def raise_on_status(status: np.ndarray, context: str = "") -> None:
    bad = status[status != OK]
    if bad.size:
        code = int(bad.max())
        idx = int(np.flatnonzero(status == code)[0])
        raise _STATUS_ERRORS[code](f"{context}path {idx}: status {code} ({bad.size} paths affected)")


def as_starts(x, n: int) -> np.ndarray:
    """Broadcast one start point, or pass an ``(n, 2)`` array through."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        return np.ascontiguousarray(np.broadcast_to(a, (n, 2)))
    if a.shape != (n, 2):
        raise ValueError("starts must be a point or an (n, 2) array")
    return np.ascontiguousarray(a)


def uniform_starts(domain: Domain, n: int, seed: int) -> np.ndarray:
    """Uniform interior starts keyed by path index (reproducible for any split)."""
    out = np.empty((n, 2))
    dk, dp = domain.packed
    run_parallel(_k_uniform_starts, n, 1, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dk, dp, out)
    return out


# --------------------------------------------------------------------------
# batch drivers


@dataclass(frozen=True)
class ExitSample:
    exit_points: np.ndarray  # (n, 2) projected exit points
    arcs: np.ndarray
    proposals: np.ndarray  # (n, 2) first proposal outside the domain
    times: np.ndarray


def batch_exit(domain, field_, params: SimulationParams, starts) -> ExitSample:
    starts = np.ascontiguousarray(starts, dtype=float)
    n = starts.shape[0]
    out = np.empty((n, 6))
    status = np.empty(n, dtype=np.int64)
    eng, dp, fp, fg = _packs(domain, field_)
    run_parallel(
        eng.k_exit, n, params.workers, params.seed_u64, dp, fp, fg, params.dt, domain.tolerance,
        starts, params.max_steps, out, status,
    )
    raise_on_status(status, "first exit: ")
    return ExitSample(out[:, 0:2].copy(), out[:, 2].copy(), out[:, 3:5].copy(), out[:, 5].copy())


@dataclass(frozen=True)
class ReflectSample:
    checkpoints: np.ndarray  # step counts
    times: np.ndarray
    local_time: np.ndarray  # (n, m)
    integral_a: np.ndarray  # ∫ φ_a dL, (n, m)
    integral_b: np.ndarray  # ∫ φ_b φ_c dL, (n, m)
    positions: np.ndarray  # (n, m, 2)
    max_signed_distance: np.ndarray  # (n,)


def _one(domain):
    return BoundaryFunction.constant_on(domain, 1.0).packed


def batch_reflect(
    domain, field_, params: SimulationParams, starts, times: Sequence[float],
    phi_a: BoundaryFunction | None = None, phi_b: BoundaryFunction | None = None,
    phi_c: BoundaryFunction | None = None,
) -> ReflectSample:
    starts = np.ascontiguousarray(starts, dtype=float)
    n = starts.shape[0]
    ckpt = np.array([int(round(t / params.dt)) for t in times], dtype=np.int64)
    if np.any(np.diff(ckpt) < 0):
        raise ValueError("checkpoint times must be nondecreasing")
    m = ckpt.size
    one = _one(domain)
    pa = one if phi_a is None else phi_a.packed
    pb = one if phi_b is None else phi_b.packed
    pc = one if phi_c is None else phi_c.packed
    L = np.zeros((n, m))
    Fa = np.zeros((n, m))
    Fb = np.zeros((n, m))
    X = np.zeros((n, m, 2))
    maxsd = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    eng, dp, fp, fg = _packs(domain, field_)
    run_parallel(
        eng.k_reflect, n, params.workers, params.seed_u64, dp, fp, fg, params.dt, params.rho,
        domain.tolerance, starts, ckpt, pa, pb, pc, L, Fa, Fb, X, maxsd, status,
    )
    raise_on_status(status, "reflected path: ")
    return ReflectSample(ckpt, ckpt * params.dt, L, Fa, Fb, X, maxsd)


@dataclass(frozen=True)
class DiscountedSample:
    values: np.ndarray
    gauge: np.ndarray
    stop_times: np.ndarray
    local_time: np.ndarray
    final_discount: np.ndarray


def batch_discounted(domain, field_, params: SimulationParams, starts, f: BoundaryFunction, g: BoundaryFunction):
    starts = np.ascontiguousarray(starts, dtype=float)
    n = starts.shape[0]
    out = np.empty((n, 5))
    status = np.empty(n, dtype=np.int64)
    eng, dp, fp, fg = _packs(domain, field_)
    run_parallel(
        eng.k_discounted, n, params.workers, params.seed_u64, dp, fp, fg, params.dt, params.rho,
        domain.tolerance, starts, f.packed, g.packed, params.kill_threshold, params.max_steps, out, status,
    )
    # paths that reach max_time are kept: their discount is reported instead
    bad = status[(status != OK) & (status != HORIZON)]
    if bad.size:
        raise_on_status(np.where(status == HORIZON, OK, status), "discounted path: ")
    return DiscountedSample(*(out[:, k].copy() for k in range(5)))


@dataclass(frozen=True)
class TraceSample:
    ds: float
    arcs: np.ndarray  # (n, K)
    times: np.ndarray  # (n, K)
    points: np.ndarray  # (n, K, 2)
    direct_integral: np.ndarray  # (n,)
    status: np.ndarray  # (n,)


def batch_trace(domain, field_, params: SimulationParams, starts, ds: float, n_samples: int, phi=None) -> TraceSample:
    starts = np.ascontiguousarray(starts, dtype=float)
    n = starts.shape[0]
    arcs = np.full((n, n_samples), np.nan)
    times = np.full((n, n_samples), np.nan)
    pts = np.full((n, n_samples, 2), np.nan)
    direct = np.zeros(n)
    status = np.empty(n, dtype=np.int64)
    eng, dp, fp, fg = _packs(domain, field_)
    pphi = _one(domain) if phi is None else phi.packed
    run_parallel(
        eng.k_trace, n, params.workers, params.seed_u64, dp, fp, fg, params.dt, params.rho,
        domain.tolerance, starts, float(ds), int(n_samples), params.max_steps, pphi, arcs, times, pts, direct,
        status,
    )
    hard = np.where(status == HORIZON, OK, status)
    raise_on_status(hard, "trace path: ")
    return TraceSample(float(ds), arcs, times, pts, direct, status)


def coupled_local_time_gap(
    domain_a, field_a, dt_a, starts_a, domain_b, field_b, dt_b, starts_b, n_steps: int, ratio: float,
    seed: int = 0, rho: float = RHO_HALF_SPACE, workers: int = 1,
) -> np.ndarray:
    """Run two reflected paths per index on shared Gaussian increments.

    Returns an ``(n, 3)`` array: ``max_n |L_B − ratio·L_A|``, final ``L_A``, final ``L_B``.
    """
    starts_a = np.ascontiguousarray(starts_a, dtype=float)
    starts_b = np.ascontiguousarray(starts_b, dtype=float)
    n = starts_a.shape[0]
    out = np.empty((n, 3))
    status = np.empty(n, dtype=np.int64)
    _, *A = _packs(domain_a, field_a)
    _, *B = _packs(domain_b, field_b)
    kernel = _coupled_kernel(_engine_key(domain_a, field_a), _engine_key(domain_b, field_b))
    run_parallel(
        kernel, n, workers, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), *A, float(dt_a), domain_a.tolerance,
        starts_a, *B, float(dt_b), domain_b.tolerance, starts_b, float(rho), float(ratio), int(n_steps), out,
        status,
    )
    raise_on_status(status, "coupled path: ")
    return out


# --------------------------------------------------------------------------
# single-path interface


@dataclass
class PathState:
    position: tuple[float, float]
    time: float = 0.0
    local_time: float = 0.0
    discount: float = 1.0
    alive: bool = True
    exit_point: BoundaryPoint | None = None
    exit_time: float | None = None
    steps: int = 0


@dataclass(frozen=True)
class StepEvent:
    state: PathState
    local_time_increment: float
    boundary_point: BoundaryPoint | None


def step(
    state: PathState, field_: ConductivityField, domain: Domain, dt: float, z: tuple[float, float],
    rho: float = RHO_HALF_SPACE, g: BoundaryFunction | None = None,
) -> tuple[PathState, float, BoundaryPoint | None]:
    """Advance one reflected step with Gaussian pair ``z``."""
    if not state.alive:
        raise ValueError("cannot step an absorbed path")
    eng, dp, fp, fg = _packs(domain, field_)
    x, y, dl, px, py, arc, st = eng.reflect_step(
        dp, fp, fg, state.position[0], state.position[1], dt, float(z[0]), float(z[1]), rho,
        domain.tolerance,
    )
    if st == STUCK:
        raise StuckAtCorner(f"reflected point ({x}, {y}) still outside after two corrections; reduce dt")
    if st == BAD_FACTOR:
        raise FactorizationFailure(f"conductivity not positive definite near {state.position}")
    bp = None
    disc = state.discount
    if dl > 0:
        b = domain.project_to_boundary((px, py))
        bp = BoundaryPoint((px, py), b.outward_normal, arc)
        if g is not None:
            disc *= math.exp(-g(arc, px, py) * dl)
    new = PathState((x, y), state.time + dt, state.local_time + dl, disc, True, None, None, state.steps + 1)
    return new, dl, bp


@dataclass
class LocalTimeLedger:
    """Step times and accumulated local time of one path (``times[0] = 0``)."""

    times: list[float] = field(default_factory=lambda: [0.0])
    local_times: list[float] = field(default_factory=lambda: [0.0])

    def record(self, state: PathState, dl: float, bp) -> None:
        self.times.append(state.time)
        self.local_times.append(state.local_time)


def simulate_path(
    start, field_: ConductivityField, domain: Domain, params: SimulationParams, observers=(),
    path_index: int = 0, g: BoundaryFunction | None = None, n_steps: int | None = None,
) -> PathState:
    """Reflected path from ``start`` until ``max_time`` (or ``n_steps``) or discount below the kill threshold.

    Each observer is called as ``obs(state, dL, boundary_point)`` after every step.
    """
    state = PathState((float(start[0]), float(start[1])))
    if domain.signed_distance(start) > domain.tolerance:
        raise ValueError("start point lies outside the domain")
    total = params.max_steps if n_steps is None else int(n_steps)
    seed = params.seed_u64
    for n in range(total):
        z = gaussian_pair(seed, STREAM_STEP, path_index, n)
        state, dl, bp = step(state, field_, domain, params.dt, z, params.rho, g)
        for obs in observers:
            obs(state, dl, bp)
        if g is not None and state.discount < params.kill_threshold:
            break
    return state


def first_exit(start, field_: ConductivityField, domain: Domain, params: SimulationParams, path_index: int = 0):
    """Unreflected Euler run until the proposal leaves the domain: ``(exit time, BoundaryPoint)``.

    ``path_index`` selects the random stream, as in the batch drivers.
    """
    starts = np.zeros((path_index + 1, 2))
    starts[path_index] = start
    out = np.empty((path_index + 1, 6))
    status = np.empty(path_index + 1, dtype=np.int64)
    eng, dp, fp, fg = _packs(domain, field_)
    eng.k_exit(
        path_index, path_index + 1, params.seed_u64, dp, fp, fg, params.dt, domain.tolerance, starts,
        params.max_steps, out, status,
    )
    raise_on_status(status[path_index : path_index + 1], "first exit: ")
    row = out[path_index]
    b = domain.project_to_boundary(row[0:2])
    return float(row[5]), BoundaryPoint((row[0], row[1]), b.outward_normal, float(row[2]))


# --------------------------------------------------------------------------
# local-time calibration


@dataclass(frozen=True)
class Calibration:
    rho: float
    rho_analytic: float
    mean_local_time: EstimatorResult
    target: float

    @property
    def relative_change(self) -> float:
        return abs(self.rho / self.rho_analytic - 1.0)


def calibrate_local_time(
    domain: Domain, field_: ConductivityField, params: SimulationParams, n_paths: int, horizon: float = 1.0,
    tolerance: float = 0.2,
) -> Calibration:
    """Fit ``ρ`` so that the uniform-start ``E L_t`` matches ``t σ(∂D)/|D|``.

    The run uses the analytic half-space value ``ρ₀ = 2``; since ``L`` is
    proportional to ``ρ`` path by path, the fitted value is
    ``ρ₀ · target / measured``.
    """
    if not (field_.satisfies_a1 or field_.is_isotropic_constant):
        raise ValueError("calibration needs an identity collar or a constant isotropic field")
    p0 = params.with_(local_time_constant=RHO_HALF_SPACE)
    starts = uniform_starts(domain, n_paths, p0.seed)
    s = batch_reflect(domain, field_, p0, starts, [horizon])
    est = EstimatorResult.from_samples(s.local_time[:, -1], horizon_used=horizon)
    target = horizon * domain.boundary_measure() / domain.area()
    rho = RHO_HALF_SPACE * target / est.mean
    cal = Calibration(rho, RHO_HALF_SPACE, est, target)
    if cal.relative_change > tolerance:
        raise CalibrationDiverged(f"fitted rho {rho:.4f} departs from {RHO_HALF_SPACE} by more than {tolerance:.0%}")
    return cal
