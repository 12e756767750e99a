import math

import pytest

from cylsde.harness import Experiment, ExperimentError, refine, run, selftest_experiments
from cylsde.stats import TooFewPathsError

SMALL = dict(dt=0.01, t_final=1.0)


@pytest.mark.parametrize("kind,params,n", [
    ("isometry", {"integrand": "brownian"}, 4000),
    ("isometry", {"integrand": "cylindrical"}, 4000),
    ("duality", {}, 100),
    ("pushthrough", {}, 100),
    ("qv", {"integrand": "constant", "a": [1.0, 2.0], "strides": [4, 2, 1]}, 1000),
    ("cross", {}, 4000),
    ("collapse", {}, 4000),
    ("solve", {"psi0": 0.5}, 4000),
    ("truncation", {"js": [1, 2, 3]}, 1000),
    ("ito_formula", {}, 50),
])
def test_kinds_pass_at_small_scale(kind, params, n):
    rep = run(Experiment(kind, params, n_paths=n, seed=3, **SMALL))
    assert rep.error is None
    assert rep.passed, rep.csv_text()


def test_unknown_kind_and_bad_records():
    with pytest.raises(ExperimentError):
        Experiment("nope")
    with pytest.raises(TooFewPathsError):
        Experiment("isometry", n_paths=50)
    with pytest.raises(ExperimentError):
        Experiment("isometry", tolerance=0.0)
    with pytest.raises(ExperimentError):
        Experiment("isometry", workers=0)
    Experiment("duality", n_paths=5)


def test_runner_errors_become_failed_reports():
    rep = run(Experiment("isometry", {"integrand": "bogus"}, n_paths=200, **SMALL))
    assert not rep.passed and "bogus" in rep.error
    assert rep.summary_line().startswith("FAIL isometry")
    assert "# error=" in rep.csv_text()


def test_report_csv_format():
    rep = run(Experiment("isometry", {"integrand": "constant", "a": [1.0]}, n_paths=200, seed=9, **SMALL))
    lines = rep.csv_text().splitlines()
    assert lines[0] == "metric,value,reference,std_err,ci_low,ci_high,tolerance,passed"
    assert lines[-1] == "# seed=9, dt=0.01, n=200"
    assert rep.metric("rhs").value == pytest.approx(1.0)


@pytest.mark.parametrize("kind,params", [
    ("isometry", {"integrand": "brownian"}),
    ("solve", {}),
    ("bdg", {"cases": 2}),
])
def test_worker_count_does_not_change_report(kind, params):
    texts = {run(Experiment(kind, params, n_paths=9000, seed=11, workers=w, **SMALL)).csv_text() for w in (1, 4, 16)}
    assert len(texts) == 1


def test_selftest_suite_passes():
    reports = [run(e) for e in selftest_experiments()]
    assert len(reports) == 5 and all(r.passed for r in reports)


def test_refine_rules():
    exp = Experiment("isometry", {"integrand": "brownian"}, n_paths=2000, seed=1, **SMALL)
    with pytest.raises(ExperimentError):
        refine(exp, [0.04, 0.02])
    with pytest.raises(ExperimentError):
        refine(exp, [0.01, 0.02, 0.04])
    rep = refine(exp, [0.04, 0.02, 0.01])
    assert rep.slope == pytest.approx(0.5, abs=0.15)
    assert not rep.floor


def test_refine_smooth_qv_slope_one():
    exp = Experiment("qv", {"integrand": "smooth", "v": [1.0, 2.0]}, n_paths=100, seed=0, dt=0.001, t_final=1.0)
    rep = refine(exp, [0.008, 0.004, 0.002, 0.001])
    assert rep.slope == pytest.approx(1.0, abs=1e-9)
    assert rep.errors[-1] == pytest.approx(5 * 0.001)


def test_refine_floor_flagged():
    # a constant integrand satisfies the isometry exactly in law at every dt: only noise is left
    exp = Experiment("isometry", {"integrand": "constant", "a": [1.0]}, n_paths=2000, seed=2, **SMALL)
    rep = refine(exp, [0.04, 0.02, 0.01])
    assert rep.floor
    assert all(math.isfinite(e) for e in rep.errors)
