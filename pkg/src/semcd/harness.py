"""Replication studies: many seeded engine runs against one fixed reference sample."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .applications import make_provider
from .boundary_nonparam import WeightParams
from .engine import BucketConfig, RunResult, preset, run_semcd
from .kernels import BernoulliStream, Dataset, KernelSampler, KernelSpec, ResourceLimitError, exact_depth_bruteforce

SCENARIOS = ("bernoulli", "brownian_mbd", "shifted_brownian", "gaussian_irw")
QUANTILE_LEVELS = (0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0)
QUANTILE_FIELDS = ["min", "q25", "q50", "q75", "q90", "q95", "q99", "max"]


@dataclass(frozen=True)
class StudySpec:
    """One replication study.

    ``query`` picks the query item: ``"ref:<i>"`` reuses reference item ``i``,
    ``"fresh"`` draws a new item from the scenario, and ``"origin"`` is the
    zero vector/curve. ``buckets`` is ``"W1"``, ``"W2"`` or a dict with
    ``split_points`` and ``mode``.
    """

    scenario: str
    alpha: float = 0.025
    buckets: object = "W2"
    replications: int = 200
    seed: int = 0
    cap: int = 50_000
    kernel: str | None = None
    provider: str | None = None
    query: str = "fresh"
    h: float = 0.3  # bernoulli scenario truth
    n_ref: int = 20
    dim: int = 2
    grid_points: int = 50
    shift: float = 1.0
    greedy: bool = False
    kappa: int = 1000
    gamma1: float = 0.1
    gamma2: float = 0.4
    m: int = 500
    l_m: int = 10
    c_alpha: float | None = None
    calibration_grid: int = 10_000
    calibration_reps: int = 100_000

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if isinstance(self.buckets, list):
            object.__setattr__(self, "buckets", tuple(self.buckets))
        self.bucket_config()
        self.kernel_spec()

    @classmethod
    def from_dict(cls, d: dict) -> "StudySpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown study fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "StudySpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["buckets"], tuple):
            d["buckets"] = list(d["buckets"])
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def bucket_config(self) -> BucketConfig:
        b = self.buckets
        if isinstance(b, str):
            return preset(b)
        if isinstance(b, dict):
            return BucketConfig(tuple(b["split_points"]), b.get("mode", "overlapping"),
                                tuple(b["value_range"]) if b.get("value_range") else None)
        return BucketConfig(tuple(b), "overlapping")

    def kernel_spec(self) -> KernelSpec | None:
        if self.scenario == "bernoulli":
            return None
        default = "irw" if self.scenario == "gaussian_irw" else "modified_band2"
        return KernelSpec(self.kernel or default)

    def provider_kind(self) -> str:
        if self.provider:
            return self.provider
        spec = self.kernel_spec()
        return "bernoulli" if spec is None or spec.is_indicator else "nonparam"


@dataclass
class StudyReport:
    spec: StudySpec
    results: list[RunResult]
    truth: float | None
    aggregates: dict
    timings: list[float] = field(default_factory=list, compare=False)


# --------------------------------------------------------------------------
# scenarios


def brownian_curves(n: int, grid_points: int, rng, shift: float = 0.0) -> Dataset:
    """Standard Brownian paths on ``t = 1/G, ..., 1`` plus an optional linear drift ``shift * t``."""
    t = np.arange(1, grid_points + 1) / grid_points
    paths = np.cumsum(rng.standard_normal((n, grid_points)) * math.sqrt(1.0 / grid_points), axis=1)
    return Dataset(paths + shift * t, t)


def reference_and_query(spec: StudySpec, rng):
    """Reference sample and query item for a study, drawn from ``rng`` in a fixed order."""
    if spec.scenario == "gaussian_irw":
        data = Dataset(rng.standard_normal((spec.n_ref, spec.dim)))
        fresh = rng.standard_normal(spec.dim)
        zero = np.zeros(spec.dim)
    else:
        shift = spec.shift if spec.scenario == "shifted_brownian" else 0.0
        data = brownian_curves(spec.n_ref, spec.grid_points, rng, shift)
        fresh = brownian_curves(1, spec.grid_points, rng, shift).values[0]
        zero = np.zeros(spec.grid_points)
    q = spec.query
    if q == "fresh":
        z = fresh
    elif q == "origin":
        z = zero
    elif q.startswith("ref:"):
        z = data.values[int(q[4:])].copy()
    else:
        raise ValueError(f"unknown query spec {q!r}")
    return data, z


def _provider(spec: StudySpec, config: BucketConfig):
    kind = spec.provider_kind()
    wp = None
    if kind == "nonparam" and spec.c_alpha is not None:
        wp = WeightParams(spec.c_alpha, spec.gamma1, spec.gamma2, spec.m, spec.l_m, spec.alpha)
    return make_provider(kind, config.split_points, spec.alpha, kernel=spec.kernel_spec(), weight_params=wp,
                         kappa=spec.kappa, gamma1=spec.gamma1, gamma2=spec.gamma2, m=spec.m, l_m=spec.l_m,
                         grid_size=spec.calibration_grid, replications=spec.calibration_reps)


def adjacent_to_truth(result: RunResult, config: BucketConfig, truth: float) -> bool:
    """Whether a (false) output is within one split index of a configured bucket that holds ``truth``."""
    w = config.max_width
    for j in range(0, config.k + 2 - w):
        lo, hi = config.interval(j, j + w)
        if lo < truth < hi and abs(result.l_index - j) <= 1 and abs(result.r_index - j - w) <= 1:
            return True
    return False


def summarize(results: list[RunResult], config: BucketConfig, truth: float | None) -> dict:
    n = len(results)
    decided = [r for r in results if r.decided]
    taus = np.array([r.tau for r in decided], dtype=float)
    agg = {
        "replications": n,
        "decided": len(decided),
        "undecided_fraction": (n - len(decided)) / n if n else math.nan,
        "tau_mean": float(taus.mean()) if taus.size else math.nan,
        "tau_median": float(np.median(taus)) if taus.size else math.nan,
        "truth": truth if truth is not None else "unavailable",
    }
    if truth is not None and n:
        false = [r for r in decided if not r.contains(truth, config)]
        agg["fbr"] = len(false) / n
        agg["false_adjacent"] = all(adjacent_to_truth(r, config, truth) for r in false)
        est = np.array([r.point_estimate for r in decided])
        agg["bias"] = float(est.mean() - truth) if est.size else math.nan
    else:
        agg["fbr"] = "truth unavailable"
        agg["false_adjacent"] = ""
        agg["bias"] = ""
    return agg


def tau_quantiles(results: list[RunResult]) -> list[float] | None:
    taus = np.array([r.tau for r in results if r.decided], dtype=float)
    if taus.size == 0:
        return None
    return [float(v) for v in np.quantile(taus, QUANTILE_LEVELS)]


def run_study(spec: StudySpec, threads: int = 1) -> StudyReport:
    """Fix the reference sample once, then replicate engine runs on independent child streams."""
    config = spec.bucket_config()
    root = np.random.SeedSequence(spec.seed)
    setup_seq, reps_seq = root.spawn(2)
    kernel = spec.kernel_spec()
    if spec.scenario == "bernoulli":
        data = z = None
        truth = float(spec.h)
    else:
        data, z = reference_and_query(spec, np.random.default_rng(setup_seq))
        try:
            truth = exact_depth_bruteforce(z, data, kernel)
        except (NotImplementedError, ResourceLimitError):
            truth = None
    provider = _provider(spec, config)
    children = reps_seq.spawn(spec.replications)

    def one(i):
        rng = np.random.default_rng(children[i])
        sampler = BernoulliStream(spec.h, rng) if data is None else KernelSampler(kernel, z, data, rng)
        t0 = time.perf_counter()
        res = run_semcd(sampler, config, provider, spec.cap, greedy=spec.greedy, seed=i)
        return res, time.perf_counter() - t0

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, range(spec.replications)))
    else:
        out = [one(i) for i in range(spec.replications)]
    results = [r for r, _ in out]
    return StudyReport(spec, results, truth, summarize(results, config, truth), [t for _, t in out])


# --------------------------------------------------------------------------
# output


SUMMARY_FIELDS = ["replications", "decided", "undecided_fraction", "tau_mean", "tau_median", "truth", "fbr",
                  "false_adjacent", "bias"]


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(report: StudyReport, out_root, fmt: str = "csv") -> Path:
    """Write ``summary.csv``, ``runs.jsonl``, ``tau_quantiles.csv`` and ``timing.csv``.

    Everything except ``timing.csv`` is a deterministic function of the spec.
    """
    if fmt != "csv":
        raise ValueError("only the csv/jsonl layout is supported")
    run_dir = Path(out_root) / f"study_{report.spec.hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "spec.json", "w") as fh:
        json.dump(report.spec.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(run_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        if report.results:
            w.writerow([_cell(report.aggregates.get(k, "")) for k in SUMMARY_FIELDS])
    with open(run_dir / "runs.jsonl", "w") as fh:
        for r in report.results:
            fh.write(r.to_json() + "\n")
    with open(run_dir / "tau_quantiles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUANTILE_FIELDS)
        q = tau_quantiles(report.results)
        if q is not None:
            w.writerow([_cell(v) for v in q])
    with open(run_dir / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "seconds"])
        for i, t in enumerate(report.timings):
            w.writerow([i, f"{t:.6f}"])
    return run_dir
