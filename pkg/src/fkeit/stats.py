"""Streaming mean/variance with a reduction order fixed by path index.

Per-path values are folded into Welford accumulators over consecutive
blocks of ``BLOCK`` paths, and the block accumulators are merged pairwise in
a fixed binary tree (Chan et al. update).  The result therefore depends only
on the per-path values, never on how paths were split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

BLOCK = 256


@dataclass(frozen=True)
class Welford:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @staticmethod
    def of(values: np.ndarray) -> "Welford":
        n = 0
        mean = 0.0
        m2 = 0.0
        for v in values.tolist():
            n += 1
            d = v - mean
            mean += d / n
            m2 += d * (v - mean)
        return Welford(n, mean, m2)

    def merge(self, other: "Welford") -> "Welford":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return Welford(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else 0.0


def _block_stats(values: np.ndarray, block: int) -> list[Welford]:
    # vectorized per-block two-pass statistics; identical to sequential
    # Welford up to rounding, and deterministic for a given array
    n = values.size
    nb = -(-n // block)
    out = []
    full = (n // block) * block
    if full:
        v = values[:full].reshape(-1, block)
        mu = v.mean(axis=1)
        mu = mu + (v - mu[:, None]).mean(axis=1)  # one refinement pass; exact for constant blocks
        m2 = ((v - mu[:, None]) ** 2).sum(axis=1)
        out.extend(Welford(block, float(a), float(b)) for a, b in zip(mu, m2))
    if full < n:
        out.append(Welford.of(values[full:]))
    assert len(out) == nb
    return out


def reduce(values, block: int = BLOCK) -> Welford:
    """Deterministic pairwise reduction of per-path values."""
    values = np.ascontiguousarray(np.asarray(values, dtype=float).ravel())
    if values.size == 0:
        return Welford()
    acc = _block_stats(values, block)
    while len(acc) > 1:
        nxt = [acc[i].merge(acc[i + 1]) for i in range(0, len(acc) - 1, 2)]
        if len(acc) % 2:
            nxt.append(acc[-1])
        acc = nxt
    return acc[0]


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    n_paths: int
    horizon_used: float = math.nan
    truncation_tail_bound: float = math.nan

    @classmethod
    def from_samples(cls, values, horizon_used=math.nan, truncation_tail_bound=math.nan):
        w = reduce(values)
        return cls(w.mean, w.stderr, w.n, horizon_used, truncation_tail_bound)

    def contains(self, value: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr + slack

    def to_dict(self) -> dict:
        return asdict(self)
