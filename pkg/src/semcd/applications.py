"""Use cases on top of the engine: anomaly flags, two-class assignment, level-region scans."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .boundary_nonparam import DEFAULT_GRID, DEFAULT_REPS, WeightParams, critical_value
from .engine import BernoulliProvider, BucketConfig, ConfigurationError, NonparamProvider, RunResult, run_semcd
from .kernels import Dataset, DifferenceSampler, KernelSampler, KernelSpec

PROVIDERS = ("bernoulli", "nonparam")


def as_spec(kernel) -> KernelSpec:
    return kernel if isinstance(kernel, KernelSpec) else KernelSpec(str(kernel))


def make_provider(kind: str, split_points, alpha: float, *, kernel: KernelSpec | None = None,
                  weight_params: WeightParams | None = None, kappa: int = 1000, gamma1: float = 0.1,
                  gamma2: float = 0.4, m: int = 500, l_m: int = 10, grid_size: int = DEFAULT_GRID,
                  replications: int = DEFAULT_REPS, calibration_seed: int = 0, cache_dir=None, threads: int = 1):
    """Build a boundary provider, checking it suits the kernel.

    ``weight_params`` bypasses calibration of the non-parametric critical value.
    """
    if kind == "bernoulli":
        if kernel is not None and not kernel.is_indicator:
            raise ConfigurationError("provider requires indicator kernel")
        return BernoulliProvider(split_points, alpha, kappa, cache_dir=cache_dir)
    if kind == "nonparam":
        if weight_params is None:
            c = critical_value(alpha, gamma1, gamma2, grid_size, replications, calibration_seed, threads, cache_dir)
            weight_params = WeightParams(c, gamma1, gamma2, m, l_m, alpha)
        return NonparamProvider(split_points, weight_params)
    raise ConfigurationError(f"unknown provider {kind!r}; choose from {PROVIDERS}")


def _three_way(result: RunResult, labels: tuple[str, str, str]) -> str:
    """Label an output of the overlapping layout with splits ``{c - e, c, c + e}``."""
    if not result.decided:
        return "not_stopped"
    if result.r_index <= 2:
        return labels[0]
    if result.l_index >= 2:
        return labels[2]
    return labels[1]


# --------------------------------------------------------------------------
# anomaly detection


@dataclass
class AnomalyVerdict:
    point_id: object
    bucket: str  # low | uncertain | high | not_stopped
    tau: int | None
    samples_used: int
    result: RunResult = field(repr=False, compare=False, default=None)


def default_anomaly_epsilon(c_o: float) -> float:
    return min(c_o / 2.0, 0.05)


def anomaly_config(c_o: float, epsilon: float) -> BucketConfig:
    if not 0 < epsilon < c_o:
        raise ValueError(f"need 0 < epsilon < c_o, got epsilon={epsilon}, c_o={c_o}")
    return BucketConfig((c_o - epsilon, c_o, c_o + epsilon), "overlapping", (0.0, 1.0))


def detect_anomaly(z, data: Dataset, kernel, c_o: float, epsilon: float | None = None, alpha: float = 0.01,
                   provider="bernoulli", *, rng: np.random.Generator | None = None, cap: int = 50_000,
                   point_id=None, **provider_kw) -> AnomalyVerdict:
    """Place the depth of ``z`` below ``c_o`` (low), above it (high) or near it (uncertain).

    ``provider`` is a kind name or a provider already built for the three
    split points, which lets many queries share one boundary table.
    """
    spec = as_spec(kernel)
    if spec.kind == "irw":
        raise ConfigurationError("anomaly detection needs an expectation-type kernel, not IRW")
    eps = default_anomaly_epsilon(c_o) if epsilon is None else float(epsilon)
    config = anomaly_config(c_o, eps)
    if isinstance(provider, str):
        provider = make_provider(provider, config.split_points, alpha, kernel=spec, **provider_kw)
    rng = rng if rng is not None else np.random.default_rng()
    res = run_semcd(KernelSampler(spec, z, data, rng), config, provider, cap)
    return AnomalyVerdict(point_id, _three_way(res, ("low", "uncertain", "high")), res.tau, res.samples_used, res)


# --------------------------------------------------------------------------
# classification

CLASS_LABELS = ("class_x", "class_y", "undecided_near_zero", "not_stopped")


def default_class_epsilon(spec: KernelSpec) -> float:
    return 0.02 if spec.kind in ("modified_band2", "band2", "h_depth") else 0.001


def classification_config(epsilon: float) -> BucketConfig:
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0:
        return BucketConfig((0.0,), "two_bucket")
    return BucketConfig((-epsilon, 0.0, epsilon), "overlapping")


@dataclass
class ClassVerdict:
    label: str
    tau: int | None
    samples_used: int
    result: RunResult = field(repr=False, compare=False, default=None)


def classify_binary(z, data_x: Dataset, data_y: Dataset, base, epsilon: float | None = None, alpha: float = 0.01,
                    cap: int = 50_000, *, rng: np.random.Generator | None = None, provider=None,
                    coupled: bool = False, **provider_kw) -> ClassVerdict:
    """Assign ``z`` to the sample in which it is deeper, from the sign of ``D_x(z) - D_y(z)``."""
    spec = as_spec(base)
    if not spec.is_type_a:
        raise ConfigurationError(f"classification needs a Type A base kernel, got {spec.kind!r}")
    eps = default_class_epsilon(spec) if epsilon is None else float(epsilon)
    config = classification_config(eps)
    if provider is None or isinstance(provider, str):
        provider = make_provider(provider or "nonparam", config.split_points, alpha, **provider_kw)
    rng = rng if rng is not None else np.random.default_rng()
    try:
        sampler = DifferenceSampler(spec, z, data_x, data_y, rng, coupled)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    res = run_semcd(sampler, config, provider, cap)
    if config.k == 1:
        label = "not_stopped" if not res.decided else ("class_x" if res.l_index == 1 else "class_y")
    else:
        label = _three_way(res, ("class_y", "undecided_near_zero", "class_x"))
    return ClassVerdict(label, res.tau, res.samples_used, res)


# --------------------------------------------------------------------------
# monotone transforms


@dataclass(frozen=True)
class MonotoneTransform:
    """Strictly increasing ``F`` on ``domain``, optionally Lipschitz with constant ``lipschitz``."""

    evaluator: Callable[[float], float]
    domain: tuple[float, float] = (0.0, 1.0)
    lipschitz: float | None = None
    inverse_fn: Callable[[float], float] | None = None
    check_points: int = 1001

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError("domain must be a nondegenerate interval")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ValueError("Lipschitz constant must be positive")
        self.check_increasing(np.linspace(lo, hi, self.check_points))

    def __call__(self, x):
        return self.evaluator(x)

    def check_increasing(self, xs) -> None:
        vals = np.array([self.evaluator(float(x)) for x in xs])
        if not np.all(np.diff(vals) > 0):
            raise ValueError("transform is not strictly increasing on the checked grid")

    def inverse(self, g: float) -> float:
        if self.inverse_fn is not None:
            return float(self.inverse_fn(g))
        lo, hi = self.domain
        return float(brentq(lambda x: self.evaluator(x) - g, lo, hi, xtol=1e-14))

    def then(self, other: "MonotoneTransform") -> "MonotoneTransform":
        """``other(self(x))`` on this transform's domain."""
        lip = None if self.lipschitz is None or other.lipschitz is None else self.lipschitz * other.lipschitz
        return MonotoneTransform(lambda x: other.evaluator(self.evaluator(x)), self.domain, lip)


def transform_buckets(split_points, transform: MonotoneTransform) -> tuple[float, ...]:
    """Split points on the transformed scale; order is preserved."""
    hs = [float(h) for h in split_points]
    if len(hs) > 1:
        transform.check_increasing(np.linspace(hs[0], hs[-1], transform.check_points))
    out = tuple(float(transform(h)) for h in hs)
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("transform does not preserve the order of the split points")
    return out


def lipschitz_epsilon(epsilon_f: float, transform: MonotoneTransform) -> float:
    """Inner half-width on the raw scale that guarantees ``epsilon_f`` after the transform."""
    if transform.lipschitz is None:
        raise ValueError("transform has no Lipschitz constant")
    return epsilon_f / transform.lipschitz


# --------------------------------------------------------------------------
# level-region scans


def depth_region_scan(queries, data: Dataset, kernel, config: BucketConfig, alpha: float = 0.025,
                      provider="bernoulli", *, seed=None, cap: int = 50_000, threads: int = 1,
                      **provider_kw) -> list[RunResult]:
    """One engine run per query, each on its own child stream of ``seed``."""
    spec = as_spec(kernel)
    queries = list(queries)
    if isinstance(provider, str):
        provider = make_provider(provider, config.split_points, alpha, kernel=spec, **provider_kw)
    streams = np.random.SeedSequence(seed).spawn(len(queries))

    def one(i):
        sampler = KernelSampler(spec, queries[i], data, np.random.default_rng(streams[i]))
        return run_semcd(sampler, config, provider, cap)

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, range(len(queries))))
    return [one(i) for i in range(len(queries))]


SCAN_FIELDS = ["query_id", "bucket_lo", "bucket_hi", "decided", "tau", "point_estimate"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if x == math.inf else "-inf" if x == -math.inf else repr(x)
    return str(x)


def write_scan_csv(results, path, ids=None) -> None:
    ids = list(range(len(results))) if ids is None else list(ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_FIELDS)
        for qid, r in zip(ids, results):
            w.writerow([qid, _fmt(r.bucket[0]), _fmt(r.bucket[1]), r.decided, _fmt(r.tau), _fmt(r.point_estimate)])


def write_jsonl(results, path, ids=None) -> None:
    ids = list(range(len(results))) if ids is None else list(ids)
    with open(path, "w") as fh:
        for qid, r in zip(ids, results):
            d = r.to_json_dict()
            d["query_id"] = qid
            fh.write(json.dumps(d, sort_keys=True) + "\n")
