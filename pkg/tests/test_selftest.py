import pytest

from selftest import (
    CheckResult,
    check_dm,
    check_leakage,
    check_lime_linear,
    check_permutation_shap,
    check_tree_shap,
    hand_dm,
    nonlinear_model,
    run_selftest,
)


def test_hand_dm():
    statistic, p_value = hand_dm([1.0, 2.0, 3.0, 4.0])
    # mean 2.5, gamma0 1.25, corrected by sqrt(3/4)
    assert statistic == pytest.approx(2.5 / (1.25 / 4) ** 0.5 * (3 / 4) ** 0.5)
    assert 0.0 < p_value < 0.05
    assert hand_dm([-1.0, -2.0, -3.0, -4.0])[0] == pytest.approx(-statistic)


def test_dm_check():
    result = check_dm()
    assert result.passed
    assert result.cases == 1


def test_lime_check():
    assert check_lime_linear(seed=3).passed


def test_leakage_check():
    result = check_leakage(perturbations=50, seed=2)
    assert result.passed
    assert result.worst == 0.0


def test_tree_shap_check():
    result = check_tree_shap(cases=10, seed=1)
    assert result.passed, result.as_dict()
    assert result.cases == 10


def test_nonlinear_model_at_zero():
    assert nonlinear_model([[0.0] * 6]).tolist() == [0.0]


def test_result_dict():
    result = CheckResult("x", True, 0.5, 1.0, 3)
    assert result.as_dict() == {"name": "x", "passed": True, "worst": 0.5, "tolerance": 1.0, "cases": 3}


@pytest.mark.slow
def test_permutation_shap_check():
    result = check_permutation_shap(cases=2, seed=0)
    assert result.passed, result.as_dict()


@pytest.mark.slow
def test_full_selftest(caplog):
    results = run_selftest(seed=0)
    assert [r.name for r in results] == [
        "tree_shap_vs_enumeration",
        "permutation_shap_vs_enumeration",
        "diebold_mariano_by_hand",
        "lime_linear_recovery",
        "feature_leakage",
    ]
    assert all(r.passed for r in results)
    assert "FAILED" not in caplog.text
