"""Command-line entry point: ``semcd {depth,anomaly,classify,calibrate,study}``.

Exit codes: 0 on success or decision, 2 on usage/validation errors, 3 when a
single depth query is still undecided at the cap.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .applications import (
    classify_binary,
    default_anomaly_epsilon,
    detect_anomaly,
    anomaly_config,
    classification_config,
    default_class_epsilon,
    make_provider,
)
from .boundary_nonparam import WeightParams, critical_value, default_cache_dir
from .engine import BucketConfig, ConfigurationError, preset, run_semcd
from .harness import StudySpec, emit_report, run_study
from .kernels import KernelSampler, KernelSpec, load_dataset

EXIT_OK, EXIT_USAGE, EXIT_UNDECIDED = 0, 2, 3
CLASS_NAMES = {"class_x": "x", "class_y": "y", "undecided_near_zero": "undecided", "not_stopped": "not_stopped"}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse numbers from {text!r}") from exc


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="master seed (drawn from entropy if omitted)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="semcd_out", help="output directory")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--cap", type=int, default=50_000)


def _add_kernel(p: argparse.ArgumentParser):
    p.add_argument("--kernel", default="spherical")
    p.add_argument("--beta", type=float, default=None, help="beta-skeleton parameter")
    p.add_argument("--bandwidth", type=float, default=None, help="h-depth bandwidth")
    p.add_argument("--functional", action="store_true", help="CSV files carry a grid row first")
    p.add_argument("--header", action="store_true", help="CSV files start with a header line")


def _add_provider(p: argparse.ArgumentParser, default=None):
    p.add_argument("--provider", choices=["bernoulli", "nonparam"], default=default)
    p.add_argument("--kappa", type=int, default=1000)
    p.add_argument("--gamma1", type=float, default=0.1)
    p.add_argument("--gamma2", type=float, default=0.4)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--l-m", dest="l_m", type=int, default=10)
    p.add_argument("--c-alpha", dest="c_alpha", type=float, default=None, help="skip calibration")
    p.add_argument("--calibration-grid", type=int, default=10_000)
    p.add_argument("--calibration-reps", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcd", description="Sequential Monte Carlo depth bucketing")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("depth", help="bucket the depth of one query")
    _add_common(p)
    _add_kernel(p)
    _add_provider(p)
    p.add_argument("--data", required=True)
    p.add_argument("--query", required=True, help="comma-separated values or a CSV file with one row")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--splits", help="comma-separated split points")
    g.add_argument("--buckets", choices=["W1", "W2"])
    p.add_argument("--mode", choices=["two_bucket", "non_overlapping", "overlapping"], default=None)
    p.add_argument("--greedy", action="store_true")

    p = sub.add_parser("anomaly", help="flag low-depth points")
    _add_common(p)
    _add_kernel(p)
    _add_provider(p)
    p.add_argument("--data", required=True)
    p.add_argument("--queries", default=None, help="CSV of query items (default: the dataset itself)")
    p.add_argument("--c-o", dest="c_o", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=None)

    p = sub.add_parser("classify", help="maximum-depth two-class assignment")
    _add_common(p)
    _add_kernel(p)
    _add_provider(p, default="nonparam")
    p.add_argument("--train-x", required=True)
    p.add_argument("--train-y", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--coupled", action="store_true")

    p = sub.add_parser("calibrate", help="compute and cache a critical value")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma1", type=float, default=0.1)
    p.add_argument("--gamma2", type=float, default=0.4)
    p.add_argument("--grid", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("study", help="run a replication study from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default="semcd_out")
    p.add_argument("--threads", type=int, default=1)
    return parser


# --------------------------------------------------------------------------
# helpers


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**63))
    return args.seed


def _kernel(args) -> KernelSpec:
    return KernelSpec(args.kernel, beta=args.beta, bandwidth=args.bandwidth)


def _dataset(path, args):
    if not Path(path).is_file():
        raise UsageError(f"dataset file not found: {path}")
    return load_dataset(path, functional=args.functional, header=args.header)


def _query(text: str, args) -> np.ndarray:
    if Path(text).is_file():
        rows = np.loadtxt(text, delimiter=",", skiprows=1 if args.header else 0, ndmin=2)
        return rows[-1] if args.functional else rows[0]
    return np.array(_floats(text))


def _provider(args, splits, kernel: KernelSpec | None):
    kind = args.provider or ("bernoulli" if kernel is not None and kernel.is_indicator else "nonparam")
    wp = None
    if kind == "nonparam" and args.c_alpha is not None:
        wp = WeightParams(args.c_alpha, args.gamma1, args.gamma2, args.m, args.l_m, args.alpha)
    return make_provider(kind, splits, args.alpha, kernel=kernel, weight_params=wp, kappa=args.kappa,
                         gamma1=args.gamma1, gamma2=args.gamma2, m=args.m, l_m=args.l_m,
                         grid_size=args.calibration_grid, replications=args.calibration_reps,
                         cache_dir=default_cache_dir(), threads=args.threads)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_depth(args) -> int:
    seed = _seed(args)
    kernel = _kernel(args)
    data = _dataset(args.data, args)
    z = _query(args.query, args)
    if args.buckets:
        config = preset(args.buckets)
        if args.mode and args.mode != "overlapping":
            raise UsageError("W1/W2 presets are overlapping layouts")
    else:
        splits = _floats(args.splits)
        mode = args.mode or ("two_bucket" if len(splits) == 1 else "overlapping")
        config = BucketConfig(tuple(splits), mode)
    provider = _provider(args, config.split_points, kernel)
    sampler = KernelSampler(kernel, z, data, np.random.default_rng(seed))
    res = run_semcd(sampler, config, provider, args.cap, greedy=args.greedy, seed=seed)
    record = res.to_json_dict()
    record["provider"] = provider.describe()
    record["kernel"] = kernel.kind
    _write_json(_out_dir(args) / "result.json", record)
    lo, hi = res.bucket
    status = "decided" if res.decided else "not stopped"
    print(f"bucket=({lo}, {hi}) {status} tau={res.tau} samples={res.samples_used} "
          f"estimate={res.point_estimate:.6g} seed={seed}")
    return EXIT_OK if res.decided else EXIT_UNDECIDED


def cmd_anomaly(args) -> int:
    seed = _seed(args)
    kernel = _kernel(args)
    data = _dataset(args.data, args)
    queries = _dataset(args.queries, args).values if args.queries else data.values
    eps = default_anomaly_epsilon(args.c_o) if args.epsilon is None else args.epsilon
    config = anomaly_config(args.c_o, eps)
    provider = _provider(args, config.split_points, kernel)
    streams = np.random.SeedSequence(seed).spawn(len(queries))
    verdicts = [
        detect_anomaly(q, data, kernel, args.c_o, eps, args.alpha, provider,
                       rng=np.random.default_rng(streams[i]), cap=args.cap, point_id=i)
        for i, q in enumerate(queries)
    ]
    out = _out_dir(args)
    with open(out / "verdicts.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "bucket", "tau", "samples_used"])
        for v in verdicts:
            w.writerow([v.point_id, v.bucket, "" if v.tau is None else v.tau, v.samples_used])
    counts = Counter(v.bucket for v in verdicts)
    _write_json(out / "anomaly_meta.json", {"seed": seed, "c_o": args.c_o, "epsilon": eps, "alpha": args.alpha,
                                            "counts": dict(sorted(counts.items()))})
    for name in ("low", "uncertain", "high", "not_stopped"):
        print(f"{name}: {counts.get(name, 0)}")
    return EXIT_OK


def cmd_classify(args) -> int:
    seed = _seed(args)
    kernel = _kernel(args)
    dx, dy = _dataset(args.train_x, args), _dataset(args.train_y, args)
    if dx.dim != dy.dim:
        raise UsageError("training samples differ in dimension")
    if (dx.grid is None) != (dy.grid is None) or (dx.grid is not None and not np.allclose(dx.grid, dy.grid)):
        raise UsageError("training samples use different grids")
    test = _dataset(args.test, args)
    if test.dim != dx.dim:
        raise UsageError("test items do not match the training dimension")
    if not kernel.is_type_a:
        raise UsageError(f"classification needs a Type A base kernel, got {kernel.kind!r}")
    eps = default_class_epsilon(kernel) if args.epsilon is None else args.epsilon
    config = classification_config(eps)
    if args.provider == "bernoulli":
        raise UsageError("bernoulli provider does not apply to depth differences; use nonparam")
    provider = _provider(args, config.split_points, None)
    streams = np.random.SeedSequence(seed).spawn(test.n)
    out = _out_dir(args)
    labels = []
    with open(out / "assignments.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item", "assignment", "tau", "samples_used"])
        for i, z in enumerate(test.values):
            v = classify_binary(z, dx, dy, kernel, eps, args.alpha, args.cap, rng=np.random.default_rng(streams[i]),
                                provider=provider, coupled=args.coupled)
            labels.append(CLASS_NAMES[v.label])
            w.writerow([i, labels[-1], "" if v.tau is None else v.tau, v.samples_used])
    counts = Counter(labels)
    summary = {k: counts.get(k, 0) / len(labels) for k in ("x", "y", "undecided", "not_stopped")}
    _write_json(out / "classify_meta.json", {"seed": seed, "epsilon": eps, "alpha": args.alpha, "fractions": summary})
    for k, v in summary.items():
        print(f"{k}: {100 * v:.1f}%")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cache = default_cache_dir()
    c = critical_value(args.alpha, args.gamma1, args.gamma2, args.grid, args.reps, args.seed, args.threads, cache)
    print(f"{c:.6f}")
    return EXIT_OK


def cmd_study(args) -> int:
    if not Path(args.spec).is_file():
        raise UsageError(f"study spec not found: {args.spec}")
    try:
        spec = StudySpec.from_json(args.spec)
    except (TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid study spec: {exc}") from exc
    report = run_study(spec, threads=args.threads)
    run_dir = emit_report(report, args.out)
    agg = report.aggregates
    print(f"{run_dir}: tau_median={agg['tau_median']} fbr={agg['fbr']} undecided={agg['undecided_fraction']}")
    return EXIT_OK


COMMANDS = {"depth": cmd_depth, "anomaly": cmd_anomaly, "classify": cmd_classify, "calibrate": cmd_calibrate,
            "study": cmd_study}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError, ValueError, OSError) as exc:
        print(f"semcd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
