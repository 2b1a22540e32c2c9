import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fkeit.stats import BLOCK, EstimatorResult, Welford, reduce

finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(2, 3 * BLOCK + 7), elements=finite))
def test_reduce_matches_numpy(v):
    w = reduce(v)
    assert w.n == v.size
    scale = max(1.0, float(np.abs(v).max()))
    assert w.mean == pytest.approx(float(np.mean(v)), abs=1e-9 * scale)
    assert w.variance == pytest.approx(float(np.var(v, ddof=1)), rel=1e-7, abs=1e-9 * scale**2)
    assert w.stderr >= 0


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 200), elements=finite), arrays(float, st.integers(2, 200), elements=finite))
def test_merge_matches_concatenation(a, b):
    m = Welford.of(a).merge(Welford.of(b))
    c = Welford.of(np.concatenate([a, b]))
    scale = max(1.0, float(np.abs(np.concatenate([a, b])).max()))
    assert m.n == c.n
    assert m.mean == pytest.approx(c.mean, abs=1e-9 * scale)
    assert m.m2 == pytest.approx(c.m2, rel=1e-7, abs=1e-9 * scale**2)


def test_constant_values_give_zero_stderr():
    r = EstimatorResult.from_samples(np.full(10_001, 0.3))
    assert r.mean == 0.3 and r.stderr == 0.0 and r.n_paths == 10_001


def test_reduction_is_deterministic():
    v = np.random.default_rng(0).normal(size=100_000)
    a, b = reduce(v), reduce(v.copy())
    assert (a.mean, a.m2) == (b.mean, b.m2)


def test_contains():
    r = EstimatorResult(1.0, 0.1, 100)
    assert r.contains(1.29) and not r.contains(1.31)
    assert r.contains(1.35, slack=0.1)
    assert math.isnan(r.horizon_used)
