"""Asymptotic boundary sequences for summands of unknown distribution.

Boundaries are ``N*h -/+ sigma_N * w(N, m)`` where ``sigma_N`` is the running
standard deviation of the summands (infinite until it can be trusted) and
``w`` scales a critical value of the weighted Brownian-bridge supremum.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

DEFAULT_GRID = 10_000
DEFAULT_REPS = 100_000
_CHUNK = 500


@dataclass(frozen=True)
class WeightParams:
    c_alpha: float
    gamma1: float = 0.1
    gamma2: float = 0.4
    m: int = 500
    l_m: int = 10
    alpha: float | None = None

    def __post_init__(self):
        _check_gammas(self.gamma1, self.gamma2)
        if self.m < 1:
            raise ValueError("burn-in m must be >= 1")
        if self.l_m < 0:
            raise ValueError("l_m must be >= 0")
        if not self.c_alpha > 0:
            raise ValueError("c_alpha must be positive")


def _check_gammas(gamma1, gamma2):
    for g in (gamma1, gamma2):
        if not 0 <= g < 0.5:
            raise ValueError(f"gamma must lie in [0, 1/2), got {g}")


def weight(n, params: WeightParams):
    """``c_alpha * m**(g2 - 1/2) * N**g1 * (m + N)**(1 - g1 - g2)``; vectorises over ``n``."""
    n = np.asarray(n, dtype=float)
    g1, g2, m = params.gamma1, params.gamma2, float(params.m)
    w = params.c_alpha * m ** (g2 - 0.5) * n**g1 * (m + n) ** (1.0 - g1 - g2)
    return float(w) if w.ndim == 0 else w


# --------------------------------------------------------------------------
# critical values


def _bridge_sup_chunk(seed_seq, size, grid_size, gamma1, gamma2):
    rng = np.random.default_rng(seed_seq)
    t = np.arange(1, grid_size) / grid_size
    inv_w = 1.0 / (t**gamma1 * (1.0 - t) ** gamma2)
    w = np.cumsum(rng.standard_normal((size, grid_size)), axis=1)
    w *= math.sqrt(1.0 / grid_size)
    bridge = w[:, :-1] - t * w[:, -1:]
    np.abs(bridge, out=bridge)
    bridge *= inv_w
    return bridge.max(axis=1)


@lru_cache(maxsize=16)
def bridge_sup_sample(gamma1, gamma2, grid_size, replications, seed, threads=1):
    """Weighted sup of simulated Brownian bridges over the interior grid, one per path.

    Paths come in chunks with their own child streams of ``seed``, so the sample
    does not depend on ``threads``.
    """
    _check_gammas(gamma1, gamma2)
    sizes = [_CHUNK] * (replications // _CHUNK)
    if replications % _CHUNK:
        sizes.append(replications % _CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(c, s, grid_size, gamma1, gamma2) for c, s in zip(children, sizes)]
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda a: _bridge_sup_chunk(*a), args))
    else:
        parts = [_bridge_sup_chunk(*a) for a in args]
    out = np.concatenate(parts)
    out.setflags(write=False)
    return out


def critical_value(
    alpha: float,
    gamma1: float = 0.1,
    gamma2: float = 0.4,
    grid_size: int = DEFAULT_GRID,
    replications: int = DEFAULT_REPS,
    seed: int = 0,
    threads: int = 1,
    cache_dir=None,
) -> float:
    """Monte Carlo ``(1 - alpha)``-quantile of ``sup |B(t)| / (t**g1 (1-t)**g2)``."""
    _check_gammas(gamma1, gamma2)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if grid_size < 1000:
        raise ValueError("grid_size must be >= 1000")
    if replications < 10_000:
        raise ValueError("replications must be >= 10000")
    key = (float(alpha), float(gamma1), float(gamma2), int(grid_size), int(replications), int(seed))
    if cache_dir is not None:
        hit = _cache_lookup(cache_dir, key)
        if hit is not None:
            return hit
    sups = bridge_sup_sample(float(gamma1), float(gamma2), int(grid_size), int(replications), int(seed), threads)
    value = float(np.quantile(sups, 1.0 - alpha))
    if cache_dir is not None:
        _cache_store(cache_dir, key, value)
    return value


CACHE_FIELDS = ["alpha", "gamma1", "gamma2", "grid", "reps", "seed", "c_alpha"]


def cache_file(cache_dir) -> Path:
    return Path(cache_dir) / "critical_values.csv"


def _cache_lookup(cache_dir, key):
    path = cache_file(cache_dir)
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = (float(row["alpha"]), float(row["gamma1"]), float(row["gamma2"]),
                 int(row["grid"]), int(row["reps"]), int(row["seed"]))
            if k == key:
                return float(row["c_alpha"])
    return None


def _cache_store(cache_dir, key, value):
    path = cache_file(cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CACHE_FIELDS)
        w.writerow([repr(key[0]), repr(key[1]), repr(key[2]), key[3], key[4], key[5], repr(value)])


def default_cache_dir() -> Path:
    return Path(os.environ.get("SEMCD_CACHE_DIR", Path.home() / ".cache" / "semcd"))


# --------------------------------------------------------------------------
# running variance


@dataclass
class RunningVariance:
    """Single-pass sample variance (Welford), with the burn-in and zero-variance conventions."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float) -> "RunningVariance":
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        return self

    @property
    def variance(self) -> float:
        if self.count < 2:
            return math.nan
        return max(self.m2, 0.0) / (self.count - 1)

    def sigma_tilde(self, l_m: int = 0) -> float:
        if self.count <= max(l_m, 1):
            return math.inf
        v = self.variance
        return math.inf if v == 0 else math.sqrt(v)

    def update_many(self, xs: np.ndarray) -> np.ndarray:
        """Absorb ``xs`` and return the sample variance after each of them (nan before 2 values).

        Deviations are taken about the mean held before the chunk, which keeps
        a constant stream at exactly zero variance.
        """
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return np.empty(0)
        n0 = self.count
        ref = self.mean if n0 > 0 else xs[0]
        d = xs - ref
        dsum = np.cumsum(d)
        qsum = np.cumsum(d * d)
        counts = n0 + np.arange(1, xs.size + 1)
        # old values have zero total deviation about ref, so they only carry M2
        m2 = np.maximum(self.m2 + qsum - dsum * dsum / counts, 0.0)
        var = np.where(counts >= 2, m2 / np.maximum(counts - 1, 1), np.nan)
        self.count = int(counts[-1])
        self.mean = float(ref + dsum[-1] / counts[-1])
        self.m2 = float(m2[-1])
        return var


def variance_update(state: RunningVariance, x: float) -> RunningVariance:
    return state.update(x)


def sigma_tilde_series(var: np.ndarray, counts: np.ndarray, l_m: int) -> np.ndarray:
    """Vector version of :meth:`RunningVariance.sigma_tilde`."""
    sig = np.sqrt(np.where(np.isnan(var), 0.0, var))
    bad = (counts <= max(l_m, 1)) | ~(var > 0)
    sig[bad] = np.inf
    return sig


def boundaries_at(n: int, h: float, state: RunningVariance, params: WeightParams) -> tuple[float, float]:
    if n < 1:
        raise ValueError("N must be >= 1")
    s = state.sigma_tilde(params.l_m)
    if math.isinf(s):
        return -math.inf, math.inf
    half = s * weight(n, params)
    return n * h - half, n * h + half
