"""The sequential stopping engine and the fixed-N baseline.

Split points are indexed ``1..k``; index ``0`` and ``k + 1`` are the sentinels
``h_0 = -inf`` and ``h_{k+1} = +inf``; ``value_range`` only affects display.
A run tracks ``l`` (largest split whose upper boundary the partial sum has
reached) and ``r`` (smallest split above ``l`` whose lower boundary it has
reached) and stops once ``(h_l, h_r)`` is a single configured bucket.
"""
from __future__ import annotations

import hashlib
import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .boundary_bernoulli import SpendingSequence, cached_boundary, enforce_monotonicity, MonotonicityReport
from .boundary_nonparam import (
    DEFAULT_GRID,
    DEFAULT_REPS,
    RunningVariance,
    WeightParams,
    critical_value,
    sigma_tilde_series,
    weight,
)
from .kernels import Sampler

MODES = ("two_bucket", "non_overlapping", "overlapping")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BucketConfig:
    split_points: tuple[float, ...]
    mode: str = "overlapping"
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        splits = tuple(float(h) for h in self.split_points)
        object.__setattr__(self, "split_points", splits)
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not splits:
            raise ConfigurationError("need at least one split point")
        if any(b <= a for a, b in zip(splits, splits[1:])):
            raise ConfigurationError("split points must be strictly increasing")
        if self.mode == "two_bucket" and len(splits) != 1:
            raise ConfigurationError("two_bucket mode takes exactly one split point")
        if self.mode == "overlapping" and len(splits) < 2:
            raise ConfigurationError("overlapping mode needs at least two split points")
        if self.value_range is not None:
            lo, hi = (float(v) for v in self.value_range)
            if not lo < splits[0] or not splits[-1] < hi:
                raise ConfigurationError("value_range must enclose all split points")
            object.__setattr__(self, "value_range", (lo, hi))

    @property
    def k(self) -> int:
        return len(self.split_points)

    @property
    def max_width(self) -> int:
        """Largest ``r - l`` at which a run stops."""
        return 2 if self.mode == "overlapping" else 1

    def edge(self, j: int) -> float:
        """Split point ``h_j`` with sentinels ``h_0 = -inf`` and ``h_{k+1} = +inf``."""
        if j <= 0:
            return -math.inf
        if j > self.k:
            return math.inf
        return self.split_points[j - 1]

    def interval(self, l: int, r: int) -> tuple[float, float]:
        return self.edge(l), self.edge(r)

    def display_interval(self, l: int, r: int) -> tuple[float, float]:
        """Like :meth:`interval` but with the sentinels clipped to ``value_range``."""
        lo, hi = self.interval(l, r)
        if self.value_range is not None:
            lo, hi = max(lo, self.value_range[0]), min(hi, self.value_range[1])
        return lo, hi

    def buckets(self) -> list[tuple[float, float]]:
        w = self.max_width
        return [self.display_interval(j, j + w) for j in range(0, self.k + 2 - w)]

    def to_dict(self) -> dict:
        return {"split_points": list(self.split_points), "mode": self.mode,
                "value_range": list(self.value_range) if self.value_range else None}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def preset(name: str) -> BucketConfig:
    """Equal-width overlapping layouts on ``[0, 0.65]``: W1 (width 0.05) and W2 (width 0.1)."""
    layout = {"W1": (0.025, 25), "W2": (0.05, 12)}.get(name.upper())
    if layout is None:
        raise ConfigurationError(f"unknown bucket preset {name!r}; use W1 or W2")
    step, n = layout
    splits = tuple(round(step * j, 10) for j in range(1, n + 1))
    return BucketConfig(splits, "overlapping", (0.0, 0.65))


# --------------------------------------------------------------------------
# boundary providers


_TABLE_LOCK = threading.Lock()


class BernoulliProvider:
    """Exact integer boundaries for 0/1 summands, made monotone across split points."""

    kind = "bernoulli"

    def __init__(self, split_points, alpha: float, kappa: int = 1000, spending: SpendingSequence | None = None,
                 monotone: bool = True, initial_horizon: int = 2048, cache_dir=None):
        self.split_points = tuple(float(h) for h in split_points)
        if any(not 0 < h < 1 for h in self.split_points):
            raise ConfigurationError("Bernoulli boundaries need split points inside (0, 1)")
        self.spending = spending or SpendingSequence(alpha, kappa)
        self.alpha = self.spending.alpha
        self.monotone = monotone
        self.cache_dir = cache_dir
        self.report = MonotonicityReport(0, 0)
        self._n = 0
        self._lower = self._upper = None
        self._ensure(initial_horizon)

    def _ensure(self, n: int):
        if n <= self._n:
            return
        with _TABLE_LOCK:
            if n > self._n:
                self._grow(n)

    def _grow(self, n: int):
        n = max(n, 2 * self._n)
        originals = [cached_boundary(h, self.spending, n, self.cache_dir) for h in self.split_points]
        if self.monotone:
            adjusted, self.report = enforce_monotonicity(originals, n)
        else:
            adjusted = originals
        lower = np.array([b.lower[: n + 1] for b in adjusted], dtype=float)
        upper = np.array([b.upper[: n + 1] for b in adjusted], dtype=float)
        self._lower, self._upper, self._n = lower, upper, n

    def tables(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper boundaries, shape ``(k, n + 1)``, steps ``0..n``."""
        self._ensure(n)
        lower, upper = self._lower, self._upper
        return lower[:, : n + 1], upper[:, : n + 1]

    def tracker(self):
        return _BernoulliTracker(self)

    def describe(self) -> dict:
        return {"provider": "bernoulli", "alpha": self.alpha, "kappa": self.spending.kappa,
                "monotone": self.monotone}


class _BernoulliTracker:
    def __init__(self, provider: BernoulliProvider):
        self.provider = provider
        self.n = 0

    def advance(self, x: np.ndarray):
        m = len(x)
        lower, upper = self.provider.tables(self.n + m)
        out = lower[:, self.n + 1 : self.n + m + 1], upper[:, self.n + 1 : self.n + m + 1]
        self.n += m
        return out


class NonparamProvider:
    """Variance-scaled boundaries ``N h -/+ sigma_N w(N, m)`` shared by all split points."""

    kind = "nonparam"

    def __init__(self, split_points, params: WeightParams):
        self.split_points = tuple(float(h) for h in split_points)
        self.params = params
        self._h = np.asarray(self.split_points)[:, None]

    @classmethod
    def calibrated(cls, split_points, alpha: float, gamma1: float = 0.1, gamma2: float = 0.4, m: int = 500,
                   l_m: int = 10, grid_size: int = DEFAULT_GRID, replications: int = DEFAULT_REPS, seed: int = 0,
                   cache_dir=None, threads: int = 1) -> "NonparamProvider":
        c = critical_value(alpha, gamma1, gamma2, grid_size, replications, seed, threads=threads, cache_dir=cache_dir)
        return cls(split_points, WeightParams(c, gamma1, gamma2, m, l_m, alpha))

    @property
    def alpha(self):
        return self.params.alpha

    def tracker(self):
        return _NonparamTracker(self)

    def describe(self) -> dict:
        p = self.params
        return {"provider": "nonparam", "alpha": p.alpha, "c_alpha": p.c_alpha, "gamma1": p.gamma1,
                "gamma2": p.gamma2, "m": p.m, "l_m": p.l_m}


class _NonparamTracker:
    def __init__(self, provider: NonparamProvider):
        self.provider = provider
        self.state = RunningVariance()

    def advance(self, x: np.ndarray):
        n0 = self.state.count
        var = self.state.update_many(x)
        counts = n0 + np.arange(1, len(x) + 1)
        sig = sigma_tilde_series(var, counts, self.provider.params.l_m)
        half = sig * weight(counts, self.provider.params)
        centre = self.provider._h * counts
        return centre - half, centre + half


# --------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    tau: int | None
    l_index: int
    r_index: int
    bucket: tuple[float, float]
    decided: bool
    point_estimate: float
    samples_used: int
    trace: list | None = field(default=None, repr=False, compare=False)
    seed: int | None = None
    config_hash: str | None = None

    def to_json_dict(self) -> dict:
        lo, hi = self.bucket
        return {
            "tau": self.tau,
            "bucket": [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi],
            "bucket_index": [self.l_index, self.r_index],
            "decided": self.decided,
            "point_estimate": self.point_estimate,
            "samples_used": self.samples_used,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunResult":
        lo, hi = d["bucket"]
        return cls(
            tau=d["tau"],
            l_index=d["bucket_index"][0],
            r_index=d["bucket_index"][1],
            bucket=(-math.inf if lo is None else lo, math.inf if hi is None else hi),
            decided=d["decided"],
            point_estimate=d["point_estimate"],
            samples_used=d["samples_used"],
            seed=d.get("seed"),
            config_hash=d.get("config_hash"),
        )

    def contains(self, value: float, config: BucketConfig) -> bool:
        """Whether the open output interval holds ``value`` (sentinels at +-inf)."""
        lo, hi = config.interval(self.l_index, self.r_index)
        return lo < value < hi


# --------------------------------------------------------------------------
# the algorithms


def _feasible_indices(up: np.ndarray, lo: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise ``l`` and ``r`` from crossing masks of shape ``(k, m)``."""
    k = up.shape[0]
    any_up = up.any(axis=0)
    l = np.where(any_up, k - np.argmax(up[::-1], axis=0), 0)
    j = np.arange(1, k + 1)[:, None]
    below = lo & (j > l[None, :])
    r = np.where(below.any(axis=0), np.argmax(below, axis=0) + 1, k + 1)
    return l, r


def feasible_interval(s: float, lower, upper) -> tuple[int, int]:
    """``(l, r)`` for partial sum ``s`` against one step's boundaries (one entry per split)."""
    lower = np.asarray(lower, dtype=float)[:, None]
    upper = np.asarray(upper, dtype=float)[:, None]
    l, r = _feasible_indices(s >= upper, s <= lower)
    return int(l[0]), int(r[0])


def _greedy_scan(up, lo, l, r, width):
    """Advance the greedy index pair through one chunk; returns ``(stop_pos | None, l, r)``."""
    m = up.shape[1]
    pos = 0
    while pos < m:
        if r - l <= width:
            return pos - 1, l, r
        rows = slice(l, r - 1)  # splits l+1 .. r-1
        events = (up[rows, pos:] | lo[rows, pos:]).any(axis=0)
        if not events.any():
            break
        t = pos + int(np.argmax(events))
        hits = np.flatnonzero(up[rows, t])
        if hits.size:
            l = l + 1 + int(hits[-1])
            if r - l <= width:
                return t, l, r
        rows = slice(l, r - 1)
        hits = np.flatnonzero(lo[rows, t])
        if hits.size:
            r = l + 1 + int(hits[0])
            if r - l <= width:
                return t, l, r
        pos = t + 1
    return None, l, r


def _check_provider(config: BucketConfig, provider):
    if tuple(provider.split_points) != tuple(config.split_points):
        missing = set(config.split_points) - set(provider.split_points)
        raise ConfigurationError(f"boundary provider does not match the split points (missing {sorted(missing)})")


def run_semcd(sampler: Sampler, config: BucketConfig, provider, cap: int, *, greedy: bool = False,
              trace: bool = False, trace_limit: int = 10_000, first_chunk: int = 32, max_chunk: int = 4096,
              seed: int | None = None) -> RunResult:
    """Sample until the partial sum singles out one bucket, or until ``cap`` draws.

    Summands are drawn in geometrically growing chunks; only the first ``tau``
    of them count. Crossings use closed comparisons (``S >= U``, ``S <= L``).
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    _check_provider(config, provider)
    tracker = provider.tracker()
    k, width = config.k, config.max_width
    l, r = 0, k + 1
    s, n = 0.0, 0
    rows = deque(maxlen=trace_limit) if trace else None
    size = first_chunk
    while n < cap:
        m = min(size, cap - n)
        size = min(2 * size, max_chunk)
        x = np.asarray(sampler.draw(m), dtype=float)
        sums = s + np.cumsum(x)
        lower, upper = tracker.advance(x)
        up = sums[None, :] >= upper
        lo = sums[None, :] <= lower
        if greedy:
            stop, l, r = _greedy_scan(up, lo, l, r, width)
        else:
            ls, rs = _feasible_indices(up, lo)
            hit = rs - ls <= width
            stop = int(np.argmax(hit)) if hit.any() else None
            idx = stop if stop is not None else m - 1
            l, r = int(ls[idx]), int(rs[idx])
        if rows is not None:
            last = m if stop is None else stop + 1
            for t in range(last):
                rows.append((n + t + 1, float(sums[t]), lower[:, t].tolist(), upper[:, t].tolist()))
        if stop is not None:
            tau = n + stop + 1
            return RunResult(tau, l, r, config.interval(l, r), True, float(sums[stop]) / tau, tau,
                             list(rows) if rows is not None else None, seed, config.hash())
        s, n = float(sums[-1]), n + m
    return RunResult(None, l, r, config.interval(l, r), False, s / n, n,
                     list(rows) if rows is not None else None, seed, config.hash())


def run_greedy(sampler: Sampler, config: BucketConfig, provider, cap: int, **kw) -> RunResult:
    return run_semcd(sampler, config, provider, cap, greedy=True, **kw)


def plain_vanilla(sampler: Sampler, n: int, chunk: int = 65_536, return_se: bool = False):
    """Fixed-``n`` Monte Carlo mean (optionally with its standard error)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    state = RunningVariance()
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = np.asarray(sampler.draw(m), dtype=float)
        total += float(x.sum())
        if return_se:
            state.update_many(x)
        done += m
    mean = total / n
    if not return_se:
        return mean
    se = math.sqrt(state.variance / n) if n > 1 else math.inf
    return mean, se


__all__ = [
    "BucketConfig", "BernoulliProvider", "NonparamProvider", "RunResult", "ConfigurationError",
    "run_semcd", "run_greedy", "plain_vanilla", "feasible_interval", "preset",
]
