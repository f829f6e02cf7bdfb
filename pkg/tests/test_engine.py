import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semcd.boundary_nonparam import WeightParams
from semcd.engine import (
    BernoulliProvider,
    BucketConfig,
    ConfigurationError,
    NonparamProvider,
    RunResult,
    feasible_interval,
    plain_vanilla,
    preset,
    run_greedy,
    run_semcd,
)
from semcd.kernels import (
    ArrayStream,
    BernoulliStream,
    ConstantStream,
    Dataset,
    KernelSampler,
    KernelSpec,
    exact_depth_bruteforce,
)

TWO = BucketConfig((0.5,), "two_bucket")
OVERLAP3 = BucketConfig((0.1, 0.25, 0.4), "overlapping")
NP_PARAMS = WeightParams(2.0, 0.1, 0.4, 500, 10, 0.025)


def bern(h, seed):
    return BernoulliStream(h, np.random.default_rng(seed))


# --- configs ----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigurationError):
        BucketConfig((), "overlapping")
    with pytest.raises(ConfigurationError):
        BucketConfig((0.2, 0.1), "non_overlapping")
    with pytest.raises(ConfigurationError):
        BucketConfig((0.1, 0.2), "two_bucket")
    with pytest.raises(ConfigurationError):
        BucketConfig((0.1,), "overlapping")
    with pytest.raises(ConfigurationError):
        BucketConfig((0.1, 0.2), "sideways")
    with pytest.raises(ConfigurationError):
        BucketConfig((0.1, 0.2), "overlapping", (0.15, 1.0))


def test_presets():
    w1, w2 = preset("W1"), preset("W2")
    assert w1.k == 25 and w2.k == 12
    assert w2.split_points[0] == 0.05 and w2.split_points[-1] == 0.6
    assert w1.split_points[-1] == 0.625
    assert w2.buckets()[0] == (0.0, 0.1) and w2.buckets()[1] == (0.05, 0.15) and w2.buckets()[-1] == (0.55, 0.65)
    assert w1.buckets()[0] == (0.0, 0.05) and w1.buckets()[1] == (0.025, 0.075)
    assert len(w2.buckets()) == 12
    with pytest.raises(ConfigurationError):
        preset("W3")


def test_provider_must_match_splits():
    with pytest.raises(ConfigurationError):
        run_semcd(ConstantStream(1), OVERLAP3, BernoulliProvider((0.1, 0.4), 0.01), 100)
    with pytest.raises(ConfigurationError):
        BernoulliProvider((0.0, 0.5), 0.01)
    with pytest.raises(ValueError):
        run_semcd(ConstantStream(1), TWO, BernoulliProvider((0.5,), 0.01), 0)


# --- feasible interval ------------------------------------------------------


def test_feasible_interval_examples():
    lower, upper = [0, 1, 2], [10, 11, 12]
    assert feasible_interval(5, lower, upper) == (0, 4)
    assert feasible_interval(50, lower, upper) == (3, 4)
    assert feasible_interval(-5, lower, upper) == (0, 1)
    assert feasible_interval(10, lower, upper) == (1, 4)
    assert feasible_interval(1, lower, upper) == (0, 2)


def brute_feasible(s, lower, upper):
    k = len(lower)
    l = max([0] + [j for j in range(1, k + 1) if s >= upper[j - 1]])
    r = min([k + 1] + [j for j in range(l + 1, k + 1) if s <= lower[j - 1]])
    return l, r


@given(st.floats(-20, 20), st.lists(st.tuples(st.floats(-10, 10), st.floats(0, 10)), min_size=1, max_size=6))
def test_feasible_interval_matches_definition(s, pairs):
    lower = [a for a, _ in pairs]
    upper = [a + w for a, w in pairs]
    assert feasible_interval(s, lower, upper) == brute_feasible(s, lower, upper)


# --- standard algorithm -----------------------------------------------------


def test_constant_streams_two_buckets():
    p = BernoulliProvider((0.5,), 0.01)
    hi = run_semcd(ConstantStream(1.0), TWO, p, 10_000)
    lo = run_semcd(ConstantStream(0.0), TWO, p, 10_000)
    assert hi.decided and (hi.l_index, hi.r_index) == (1, 2) and hi.bucket == (0.5, math.inf)
    assert lo.decided and (lo.l_index, lo.r_index) == (0, 1) and lo.bucket == (-math.inf, 0.5)
    assert TWO.display_interval(0, 1) == (-math.inf, 0.5)
    assert BucketConfig((0.5,), "two_bucket", (0.0, 1.0)).display_interval(0, 1) == (0.0, 0.5)


def test_single_split_decides_upper_bucket():
    cfg = BucketConfig((0.25,), "two_bucket")
    res = run_semcd(bern(0.3, 11), cfg, BernoulliProvider((0.25,), 0.01), 100_000)
    assert res.decided and res.bucket == (0.25, math.inf)
    assert 100 <= res.tau <= 20_000


def test_cap_reports_current_interval():
    cfg = BucketConfig((0.25,), "non_overlapping")
    res = run_semcd(bern(0.25, 3), cfg, BernoulliProvider((0.25,), 0.01), 500)
    assert not res.decided and res.tau is None and res.samples_used == 500
    assert (res.l_index, res.r_index) == (0, 2)


@given(st.integers(0, 10**6), st.sampled_from([0.05, 0.17, 0.3, 0.52]))
def test_output_widths(seed, h):
    cfg = preset("W2")
    res = run_semcd(bern(h, seed), cfg, _w2_provider(), 200_000)
    assert res.decided and res.r_index - res.l_index in (1, 2)
    lo, hi = res.bucket
    assert lo < hi
    nov = BucketConfig((0.2, 0.4), "non_overlapping")
    res = run_semcd(bern(h, seed), nov, _nov_provider(), 200_000)
    assert not res.decided or res.r_index - res.l_index == 1


_CACHE = {}


def _w2_provider():
    if "w2" not in _CACHE:
        _CACHE["w2"] = BernoulliProvider(preset("W2").split_points, 0.025)
    return _CACHE["w2"]


def _nov_provider():
    if "nov" not in _CACHE:
        _CACHE["nov"] = BernoulliProvider((0.2, 0.4), 0.025)
    return _CACHE["nov"]


def test_closed_comparison_at_boundary():
    # S_N == U_N counts as a crossing
    p = BernoulliProvider((0.5,), 0.01)
    lower, upper = p.tables(100)
    n = next(i for i in range(1, 101) if upper[0, i] == i)
    res = run_semcd(ArrayStream(np.ones(200)), TWO, p, 200)
    assert res.tau == n


def test_trace_ring_buffer():
    p = BernoulliProvider((0.5,), 0.01)
    res = run_semcd(ConstantStream(1.0), TWO, p, 10_000, trace=True, trace_limit=3)
    assert len(res.trace) == 3
    n, s, lo, up = res.trace[-1]
    assert n == res.tau and s == res.tau and s >= up[0]
    assert run_semcd(ConstantStream(1.0), TWO, p, 10_000).trace is None


def test_result_json_roundtrip():
    res = run_semcd(ConstantStream(0.0), TWO, BernoulliProvider((0.5,), 0.01), 1000, seed=4)
    back = RunResult.from_json_dict(__import__("json").loads(res.to_json()))
    assert back == res
    assert res.to_json_dict()["bucket"] == [None, 0.5]


# --- greedy -----------------------------------------------------------------


@given(st.integers(0, 10**6), st.sampled_from([0.1, 0.27, 0.33, 0.6]))
def test_greedy_never_slower(seed, h):
    cfg = preset("W2")
    a = run_semcd(bern(h, seed), cfg, _w2_provider(), 200_000)
    b = run_greedy(bern(h, seed), cfg, _w2_provider(), 200_000)
    assert b.tau <= a.tau


@given(st.integers(0, 10**6))
def test_greedy_single_split_identical(seed):
    cfg = BucketConfig((0.3,), "two_bucket")
    p = BernoulliProvider((0.3,), 0.01)
    a = run_semcd(bern(0.34, seed), cfg, p, 50_000, trace=True)
    b = run_greedy(bern(0.34, seed), cfg, p, 50_000, trace=True)
    assert (a.tau, a.l_index, a.r_index) == (b.tau, b.l_index, b.r_index)
    assert a.trace == b.trace


def test_greedy_constant_one_topmost():
    p = BernoulliProvider(OVERLAP3.split_points, 0.01)
    res = run_greedy(ConstantStream(1.0), OVERLAP3, p, 10_000)
    assert (res.l_index, res.r_index) == (2, 4) and res.bucket == (0.25, math.inf)


def test_greedy_interval_narrows():
    cfg = preset("W2")
    prev = (0, cfg.k + 1)
    for cap in (50, 200, 400, 800, 1600, 3200):
        res = run_greedy(bern(0.33, 77), cfg, _w2_provider(), cap)
        assert res.l_index >= prev[0] and res.r_index <= prev[1]
        prev = (res.l_index, res.r_index)
        if res.decided:
            break


# --- non-parametric provider ------------------------------------------------


def test_nonparam_constant_stream_never_stops():
    p = NonparamProvider(OVERLAP3.split_points, NP_PARAMS)
    res = run_semcd(ConstantStream(0.3), OVERLAP3, p, 5000)
    assert not res.decided and (res.l_index, res.r_index) == (0, 4)


@given(st.integers(0, 10**6), st.sampled_from([0.12, 0.3, 0.47]))
def test_nonparam_point_estimate_in_bucket(seed, h):
    cfg = preset("W2")
    p = NonparamProvider(cfg.split_points, NP_PARAMS)
    res = run_semcd(bern(h, seed), cfg, p, 100_000)
    assert res.decided
    lo, hi = res.bucket
    assert lo <= res.point_estimate <= hi


def test_nonparam_monotone_tracker():
    p = NonparamProvider((0.1, 0.2, 0.5), NP_PARAMS)
    t = p.tracker()
    lower, upper = t.advance(np.random.default_rng(0).random(100))
    fin = np.isfinite(lower[0])
    assert fin[20:].all()
    assert np.all(np.diff(lower[:, fin], axis=0) >= 0) and np.all(np.diff(upper[:, fin], axis=0) >= 0)


# --- plain vanilla ----------------------------------------------------------


def test_plain_vanilla_constant():
    for n in (1, 7, 100_000):
        assert plain_vanilla(ConstantStream(0.42), n) == pytest.approx(0.42)
    with pytest.raises(ValueError):
        plain_vanilla(ConstantStream(0.0), 0)


def test_plain_vanilla_bernoulli():
    h, n = 0.37, 100_000
    est = plain_vanilla(bern(h, 5), n)
    assert abs(est - h) <= 4 * math.sqrt(h * (1 - h) / n)


def test_plain_vanilla_spherical_vs_oracle(rng):
    data = Dataset(rng.normal(size=(25, 2)))
    z = np.array([0.3, -0.2])
    spec = KernelSpec("spherical")
    exact = exact_depth_bruteforce(z, data, spec)
    est, se = plain_vanilla(KernelSampler(spec, z, data, rng), 100_000, return_se=True)
    assert abs(est - exact) <= 4 * se


def test_coverage_small_scale():
    cfg = preset("W2")
    false = sum(not run_semcd(bern(0.3, s), cfg, _w2_provider(), 200_000).contains(0.3, cfg) for s in range(300))
    assert false / 300 <= 0.025 + 3 * math.sqrt(0.025 * 0.975 / 300)
