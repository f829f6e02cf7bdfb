import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.optimize import brentq

from semcd.boundary_nonparam import (
    RunningVariance,
    WeightParams,
    boundaries_at,
    bridge_sup_sample,
    cache_file,
    critical_value,
    sigma_tilde_series,
    variance_update,
    weight,
)

FAST = dict(grid_size=1000, replications=10_000)


def kolmogorov_quantile(p):
    """Invert ``1 - 2 sum (-1)^(k-1) exp(-2 k^2 x^2)`` by root finding."""
    def cdf(x):
        k = np.arange(1, 101)
        return 1 - 2 * np.sum((-1.0) ** (k - 1) * np.exp(-2 * k**2 * x**2))
    return brentq(lambda x: cdf(x) - p, 0.3, 3.0, xtol=1e-12)


def test_kolmogorov_oracle_agrees_with_scipy():
    for p in (0.95, 0.99):
        assert kolmogorov_quantile(p) == pytest.approx(stats.kstwobign.ppf(p), abs=1e-8)
    assert kolmogorov_quantile(0.95) == pytest.approx(1.3581, abs=1e-4)
    assert kolmogorov_quantile(0.99) == pytest.approx(1.6276, abs=1e-4)


# --- weight -----------------------------------------------------------------


def test_weight_example():
    p = WeightParams(1.0, 0.0, 0.0, 500)
    assert weight(500, p) == pytest.approx(2 * math.sqrt(500))
    assert weight(500, p) == pytest.approx(44.7214, abs=1e-4)


@given(st.floats(0.01, 5), st.floats(0, 0.49), st.floats(0, 0.49), st.integers(1, 2000), st.integers(1, 10**6))
def test_weight_increasing_and_linear(c, g1, g2, m, n):
    p = WeightParams(c, g1, g2, m)
    assert weight(n + 1, p) > weight(n, p)
    assert weight(n, WeightParams(2 * c, g1, g2, m)) == pytest.approx(2 * weight(n, p))


def test_weight_params_validation():
    for kw in (dict(gamma1=0.5), dict(gamma2=-0.1), dict(m=0), dict(l_m=-1)):
        with pytest.raises(ValueError):
            WeightParams(1.0, **kw)
    with pytest.raises(ValueError):
        WeightParams(0.0)


# --- critical values --------------------------------------------------------


def test_critical_value_kolmogorov_fast():
    # coarse grid biases the sup downwards; the full-size check lives in the acceptance suite
    c = critical_value(0.05, 0.0, 0.0, **FAST)
    assert abs(c - kolmogorov_quantile(0.95)) < 0.05


def test_critical_value_reproducible():
    a = critical_value(0.05, 0.1, 0.4, seed=3, **FAST)
    bridge_sup_sample.cache_clear()
    b = critical_value(0.05, 0.1, 0.4, seed=3, **FAST)
    assert a == b


def test_critical_value_independent_of_threads():
    a = bridge_sup_sample(0.1, 0.4, 1000, 10_000, 9, 1)
    b = bridge_sup_sample(0.1, 0.4, 1000, 10_000, 9, 3)
    assert np.array_equal(a, b)


def test_critical_value_monotone():
    alphas = [0.01, 0.025, 0.05, 0.1]
    vals = [critical_value(a, 0.1, 0.3, **FAST) for a in alphas]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    grid = [critical_value(0.05, g1, g2, **FAST) for g1, g2 in [(0, 0), (0.1, 0), (0.1, 0.2), (0.1, 0.4)]]
    assert all(b >= a for a, b in zip(grid, grid[1:]))


def test_critical_value_validation():
    with pytest.raises(ValueError):
        critical_value(0.05, 0.5, 0.0, **FAST)
    with pytest.raises(ValueError):
        critical_value(0.05, 0.0, 0.0, grid_size=999, replications=10_000)
    with pytest.raises(ValueError):
        critical_value(0.05, 0.0, 0.0, grid_size=1000, replications=9_999)
    with pytest.raises(ValueError):
        critical_value(1.0, 0.0, 0.0, **FAST)


def test_critical_value_disk_cache(tmp_path):
    a = critical_value(0.05, 0.0, 0.2, cache_dir=tmp_path, **FAST)
    lines = cache_file(tmp_path).read_text().splitlines()
    assert lines[0] == "alpha,gamma1,gamma2,grid,reps,seed,c_alpha"
    assert len(lines) == 2
    assert critical_value(0.05, 0.0, 0.2, cache_dir=tmp_path, **FAST) == a
    assert len(cache_file(tmp_path).read_text().splitlines()) == 2


# --- running variance -------------------------------------------------------


def test_variance_examples():
    s = RunningVariance()
    variance_update(s, 0.0)
    variance_update(s, 1.0)
    assert s.variance == 0.5
    c = RunningVariance()
    for _ in range(50):
        c.update(0.7)
    assert c.variance == 0 and c.sigma_tilde() == math.inf
    r = RunningVariance()
    for x in np.random.default_rng(0).normal(size=10):
        r.update(x)
    assert r.sigma_tilde(l_m=10) == math.inf
    r.update(0.5)
    assert math.isfinite(r.sigma_tilde(l_m=10))


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
def test_welford_matches_two_pass(xs):
    s = RunningVariance()
    for x in xs:
        s.update(x)
    ref = np.var(xs, ddof=1)
    assert s.variance == pytest.approx(ref, rel=1e-10, abs=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=200), st.integers(1, 199))
def test_chunked_update_matches_scalar(xs, cut):
    a, b = RunningVariance(), RunningVariance()
    for x in xs:
        a.update(x)
    v1 = b.update_many(np.array(xs[:cut]))
    v2 = b.update_many(np.array(xs[cut:]))
    var = np.concatenate([v1, v2])
    assert b.count == a.count
    assert b.mean == pytest.approx(a.mean, rel=1e-9, abs=1e-9)
    if len(xs) >= 2:
        assert var[-1] == pytest.approx(a.variance, rel=1e-8, abs=1e-8)
        k = len(xs) // 2 + 1
        assert var[k - 1] == pytest.approx(np.var(xs[:k], ddof=1), rel=1e-8, abs=1e-8)


def test_chunked_constant_stream_is_exactly_zero():
    s = RunningVariance()
    var = np.concatenate([s.update_many(np.full(40, 0.1)), s.update_many(np.full(40, 0.1))])
    assert np.all(var[1:] == 0)
    sig = sigma_tilde_series(var, np.arange(1, 81), 10)
    assert np.all(np.isinf(sig))


# --- boundaries -------------------------------------------------------------


def test_boundaries_infinite_without_variance():
    p = WeightParams(1.5)
    assert boundaries_at(5, 0.3, RunningVariance(), p) == (-math.inf, math.inf)


@given(st.lists(st.floats(0, 1), min_size=12, max_size=60), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_boundaries_symmetric_and_ordered(xs, h1, h2):
    s = RunningVariance()
    for x in xs:
        s.update(x)
    p = WeightParams(1.4)
    n = len(xs)
    lo1, up1 = boundaries_at(n, h1, s, p)
    if math.isinf(lo1):
        return
    assert (lo1 + up1) / 2 == pytest.approx(n * h1)
    lo2, up2 = boundaries_at(n, h2, s, p)
    if h1 <= h2:
        assert lo1 <= lo2 and up1 <= up2
    with pytest.raises(ValueError):
        boundaries_at(0, h1, s, p)


@pytest.mark.slow
def test_asymptotic_level_bernoulli():
    h, alpha, m = 0.3, 0.05, 500
    c = critical_value(alpha, 0.1, 0.4, grid_size=2000, replications=20_000)
    p = WeightParams(c, 0.1, 0.4, m, 10, alpha)
    n_max, runs = 50 * m, 10_000
    n = np.arange(1, n_max + 1, dtype=float)
    w = weight(n, p)
    rng = np.random.default_rng(2024)
    exits = 0
    for _ in range(runs // 250):
        s = np.cumsum(rng.random((250, n_max)) < h, axis=1, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            var = (s - s * s / n) / (n - 1)
        sig = np.sqrt(np.where(var > 0, var, np.inf))
        sig[:, :10] = np.inf
        half = sig * w
        exits += int(np.any(np.abs(s - n * h) >= half, axis=1).sum())
    assert exits / runs <= alpha + 0.02
