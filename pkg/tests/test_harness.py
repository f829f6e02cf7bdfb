import json

import numpy as np
import pytest

from semcd.engine import RunResult, preset
from semcd.harness import (
    QUANTILE_FIELDS,
    StudyReport,
    StudySpec,
    adjacent_to_truth,
    brownian_curves,
    emit_report,
    run_study,
)

FAST_CAL = dict(calibration_grid=2000, calibration_reps=20_000)


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        StudySpec("volcano")
    with pytest.raises(ValueError):
        StudySpec("bernoulli", replications=0)
    with pytest.raises(ValueError):
        StudySpec.from_dict({"scenario": "bernoulli", "colour": "red"})
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"scenario": "bernoulli", "buckets": [0.2, 0.4], "replications": 3}))
    spec = StudySpec.from_json(path)
    assert spec.bucket_config().split_points == (0.2, 0.4)
    assert spec.hash() == StudySpec.from_dict(spec.to_dict()).hash()


def test_bernoulli_study_fbr():
    rep = run_study(StudySpec("bernoulli", alpha=0.025, buckets="W2", replications=1000, seed=7, h=0.3))
    agg = rep.aggregates
    assert agg["fbr"] <= 0.025
    assert agg["false_adjacent"] is True
    assert agg["truth"] == 0.3


def test_tau_ordering_bernoulli():
    means = {}
    for b in ("W1", "W2"):
        for a in (0.01, 0.025):
            rep = run_study(StudySpec("bernoulli", alpha=a, buckets=b, replications=300, seed=1, h=0.31))
            means[b, a] = rep.aggregates["tau_mean"]
    assert means["W1", 0.01] >= means["W1", 0.025] >= means["W2", 0.025]
    assert means["W1", 0.01] >= means["W2", 0.01]


def test_mbd_study_uses_oracle_truth():
    spec = StudySpec("brownian_mbd", alpha=0.025, buckets="W2", replications=60, seed=4, n_ref=20, **FAST_CAL)
    rep = run_study(spec)
    assert isinstance(rep.truth, float) and 0 <= rep.truth <= 1
    assert rep.aggregates["fbr"] <= 0.1
    assert spec.provider_kind() == "nonparam"


def test_irw_truth_unavailable():
    spec = StudySpec("gaussian_irw", replications=5, n_ref=30, dim=3, seed=2, **FAST_CAL)
    rep = run_study(spec)
    assert rep.truth is None and rep.aggregates["fbr"] == "truth unavailable"


def test_shifted_brownian_generator():
    d = brownian_curves(500, 10, np.random.default_rng(0), shift=2.0)
    assert d.grid[-1] == 1.0
    assert abs(d.values[:, -1].mean() - 2.0) < 0.2


def test_deterministic_and_thread_independent():
    spec = StudySpec("bernoulli", replications=40, seed=11, h=0.2)
    a, b = run_study(spec), run_study(spec, threads=4)
    assert [r.to_json() for r in a.results] == [r.to_json() for r in b.results]
    assert a.aggregates == b.aggregates


def test_adjacent_rule():
    cfg = preset("W2")
    mk = lambda l, r: RunResult(5, l, r, cfg.interval(l, r), True, 0.0, 5)  # noqa: E731
    assert adjacent_to_truth(mk(4, 6), cfg, 0.3)
    assert adjacent_to_truth(mk(6, 8), cfg, 0.3)
    assert not adjacent_to_truth(mk(8, 10), cfg, 0.3)


def test_emit_report_files_and_determinism(tmp_path):
    spec = StudySpec("bernoulli", replications=25, seed=3, h=0.45)
    d1 = emit_report(run_study(spec), tmp_path / "a")
    d2 = emit_report(run_study(spec), tmp_path / "b")
    assert d1.name == f"study_{spec.hash()}"
    for name in ("summary.csv", "runs.jsonl", "tau_quantiles.csv", "spec.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    header = (d1 / "tau_quantiles.csv").read_text().splitlines()[0]
    assert header.split(",") == QUANTILE_FIELDS == ["min", "q25", "q50", "q75", "q90", "q95", "q99", "max"]
    runs = [RunResult.from_json_dict(json.loads(line)) for line in (d1 / "runs.jsonl").read_text().splitlines()]
    assert len(runs) == 25
    assert (d1 / "timing.csv").exists()


def test_emit_empty_report_header_only(tmp_path):
    spec = StudySpec("bernoulli", replications=1)
    d = emit_report(StudyReport(spec, [], 0.3, {}), tmp_path)
    assert len((d / "summary.csv").read_text().splitlines()) == 1
    assert len((d / "tau_quantiles.csv").read_text().splitlines()) == 1
    assert (d / "runs.jsonl").read_text() == ""


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(run_study(StudySpec("bernoulli", replications=2)), blocker)
