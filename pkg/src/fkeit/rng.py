"""Counter-based random numbers (Philox4x32-10).

Every Gaussian used by the path engine is a pure function of
``(seed, stream, path index, step index)``, so a path's trajectory does not
depend on how paths are split across workers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)

# stream tags
STREAM_STEP = 0
STREAM_START = 1
STREAM_AUX = 2


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 bijection. All arguments are uint64 holding 32-bit words."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _split_seed(seed):
    s = np.uint64(seed)
    return s & _MASK32, s >> np.uint64(32)


@njit(cache=True, nogil=True)
def uniform_pair(seed, stream, path, step):
    """Two 53-bit uniforms in the open interval (0, 1)."""
    k0, k1 = _split_seed(seed)
    p = np.uint64(path)
    r0, r1, r2, r3 = philox4x32(
        np.uint64(step) & _MASK32,
        np.uint64(stream) & _MASK32,
        p & _MASK32,
        p >> np.uint64(32),
        k0,
        k1,
    )
    u1 = (float(r0 >> np.uint64(5)) * 67108864.0 + float(r1 >> np.uint64(6)) + 0.5) / 9007199254740992.0
    u2 = (float(r2 >> np.uint64(5)) * 67108864.0 + float(r3 >> np.uint64(6)) + 0.5) / 9007199254740992.0
    return u1, u2


@njit(cache=True, nogil=True)
def gaussian_pair(seed, stream, path, step):
    """Two independent standard normals (Box-Muller on one Philox block)."""
    u1, u2 = uniform_pair(seed, stream, path, step)
    r = np.sqrt(-2.0 * np.log(u1))
    a = 2.0 * np.pi * u2
    return r * np.cos(a), r * np.sin(a)


@njit(cache=True, nogil=True)
def _fill_gaussians(seed, stream, path, n_steps, out):
    for k in range(n_steps):
        z1, z2 = gaussian_pair(seed, stream, path, k)
        out[k, 0] = z1
        out[k, 1] = z2


def gaussians(seed: int, path: int, n_steps: int, stream: int = STREAM_STEP) -> np.ndarray:
    """The ``(n_steps, 2)`` Gaussian increments the engine uses for one path."""
    out = np.empty((n_steps, 2))
    _fill_gaussians(seed, stream, path, n_steps, out)
    return out


def derive_seed(seed: int, *tags: int) -> int:
    """Deterministic 64-bit child seed, used to give sub-runs independent keys."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *tags])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
