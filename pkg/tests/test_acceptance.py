"""The seven acceptance criteria, one test each. Every test prints a
single pass/fail line with the measured values against their thresholds
(run pytest with -s or check captured output)."""

import pytest

from byzpgd import acceptance


def _run(name):
    result = acceptance.run_suite(name)
    print(acceptance.format_result(result))
    assert result["runtime_s"] < result["runtime_limit_s"]
    assert result["passed"], acceptance.format_result(result)
    return result


def test_criterion_1_descent_lemma():
    result = _run("descent-lemma")
    assert result["failures"] == 0
    assert result["worst_violation"] <= 1e-9


def test_criterion_2_stuck_probability():
    result = _run("stuck-probability")
    assert abs(result["measured_freq_x_half"] - 0.6090) <= 0.05
    assert result["measured_freq_x_one"] == 1.0


def test_criterion_3_escape_exact():
    result = _run("escape-exact")
    assert result["escape_rate"] >= 0.9
    assert result["worst_grad_norm"] <= 0.01
    assert result["worst_min_eig"] >= 0.0


def test_criterion_4_escape_byzantine():
    result = _run("escape-byzantine")
    assert result["all_within_iter_bound"]
    assert result["grad_norm_ok_fraction"] >= 0.9
    assert result["ablation_stuck_fraction"] >= 0.5


def test_criterion_5_scaling_laws():
    result = _run("scaling-laws")
    assert result["monotone_wins"] >= result["sign_test_critical"]
    assert 1.3 <= result["alpha_ratio"] <= 2.7
    assert result["filter_delta_hat"] <= result["median_delta_hat"]


def test_criterion_6_filter_recovery():
    result = _run("filter-recovery")
    assert result["hits"] >= 95


def test_criterion_7_determinism():
    result = _run("determinism")
    assert result["report_json_identical"]
    assert result["trace_csv_identical"]
