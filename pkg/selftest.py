"""Brute-force oracle checks runnable from the command line (`python . selftest`).

Each check compares a fast routine against a slow reference on seeded random
instances and reports the worst deviation it saw.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from eval_stats import dm_test
from explain import Background, exact_shapley, lime_explain, permutation_shap, tree_shap
from gbt import GbtHyperParams, fit_gbt
from series_core import TimeSeries
from supervise import FeatureMatrix, FeatureSpec, Standardizer, build_feature_matrix

logger = logging.getLogger(__name__)

TREE_SHAP_TOLERANCE = 1e-9
PERMUTATION_TOLERANCE = 0.02
DM_TOLERANCE = 1e-9
LIME_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    cases: int

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "cases": self.cases,
        }


def _random_ensemble(rng: np.random.Generator, p: int):
    rows = rng.normal(size=(40, p))
    target = np.sin(rows[:, 0]) + rows[:, -1] * rows[:, 0] + 0.1 * rng.normal(size=40)
    fm = FeatureMatrix(
        times=tuple((2000 + i // 12, i % 12 + 1) for i in range(40)),
        columns=tuple(f"x{i}" for i in range(p)),
        rows=rows,
        target=target,
    )
    hp = GbtHyperParams(
        n_trees=int(rng.integers(1, 6)),
        max_depth=int(rng.integers(1, 4)),
        learning_rate=0.3,
        seed=int(rng.integers(0, 2**31)),
    )
    return fit_gbt(fm, hp)


def check_tree_shap(cases: int = 100, seed: int = 0) -> CheckResult:
    """TreeSHAP against 2^p subset enumeration with one background row."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        p = int(rng.integers(2, 9))
        model = _random_ensemble(rng, p)
        x, z = rng.normal(size=p), rng.normal(size=p)
        bg = Background.explicit(z[None, :])
        fast = tree_shap(model, x, bg)
        slow = exact_shapley(model.predict_batch, x, bg)
        worst = max(worst, float(np.max(np.abs(fast.phi - slow.phi))))
    return CheckResult(
        "tree_shap_vs_enumeration", worst < TREE_SHAP_TOLERANCE, worst, TREE_SHAP_TOLERANCE, cases
    )


def nonlinear_model(rows: np.ndarray) -> np.ndarray:
    """Fixed six-feature test function with interactions."""
    rows = np.atleast_2d(rows)
    return (
        rows[:, 0] * rows[:, 1]
        + np.sin(rows[:, 2])
        + rows[:, 3] ** 2
        + 0.5 * rows[:, 4] * rows[:, 5]
    )


def check_permutation_shap(cases: int = 10, seed: int = 0, m: int = 2000) -> CheckResult:
    """Permutation SHAP with many orderings against exact Shapley values."""
    rng = np.random.default_rng(seed)
    bg = Background.explicit(np.zeros((1, 6)))
    worst = 0.0
    for case in range(cases):
        x = rng.uniform(-0.5, 0.5, size=6)
        estimate = permutation_shap(nonlinear_model, x, bg, m_permutations=m, seed=[seed, case])
        exact = exact_shapley(nonlinear_model, x, bg)
        worst = max(worst, float(np.max(np.abs(estimate.phi - exact.phi))))
    return CheckResult(
        "permutation_shap_vs_enumeration",
        worst < PERMUTATION_TOLERANCE,
        worst,
        PERMUTATION_TOLERANCE,
        cases,
    )


def hand_dm(d: list[float]) -> tuple[float, float]:
    """Diebold-Mariano at horizon 1 with the small-sample factor, in plain arithmetic."""
    n = len(d)
    mean = sum(d) / n
    gamma0 = sum((v - mean) ** 2 for v in d) / n
    statistic = mean / math.sqrt(gamma0 / n) * math.sqrt((n - 1) / n)
    return statistic, 2.0 * stats.t.sf(abs(statistic), df=n - 1)


def check_dm() -> CheckResult:
    """Library DM test against a plain re-derivation on a fixed 8-element vector."""
    e_a = np.array([1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 3.0])
    e_b = np.zeros(8)
    result = dm_test(e_a, e_b)
    statistic, p_value = hand_dm((e_a**2 - e_b**2).tolist())
    worst = max(abs(result.statistic - statistic), abs(result.p_value - p_value))
    return CheckResult("diebold_mariano_by_hand", worst < DM_TOLERANCE, worst, DM_TOLERANCE, 1)


def check_lime_linear(seed: int = 0) -> CheckResult:
    """LIME on an exactly linear model recovers the weights."""
    rng = np.random.default_rng(seed)
    p = 5
    weights = rng.normal(size=p)
    train = FeatureMatrix(
        times=tuple((2000 + i // 12, i % 12 + 1) for i in range(60)),
        columns=tuple(f"x{i}" for i in range(p)),
        rows=rng.normal(loc=3.0, scale=2.0, size=(60, p)),
        target=np.zeros(60),
    )
    explanation = lime_explain(
        lambda rows: rows @ weights + 1.5,
        train.rows[0],
        train,
        Standardizer.fit(train),
        n_samples=2000,
        seed=seed,
    )
    worst = float(np.max(np.abs(explanation.coefficients - weights)))
    return CheckResult("lime_linear_recovery", worst < LIME_TOLERANCE, worst, LIME_TOLERANCE, 1)


def check_leakage(perturbations: int = 1000, seed: int = 0) -> CheckResult:
    """Changing values after a row's month never changes that row."""
    rng = np.random.default_rng(seed)
    base = np.cumsum(rng.uniform(1, 10, size=80)) + 100
    spec = FeatureSpec()
    reference = build_feature_matrix(TimeSeries((2000, 1), base), spec)

    worst = 0.0
    for _ in range(perturbations):
        cut = int(rng.integers(spec.warm_up + 1, len(base)))
        changed = base.copy()
        changed[cut:] = rng.uniform(1, 1000, size=len(base) - cut)
        rows = build_feature_matrix(TimeSeries((2000, 1), changed), spec).rows
        # Rows dated before the cut only see values before it
        stable = cut - spec.warm_up + 1
        if not np.array_equal(rows[:stable], reference.rows[:stable]):
            worst = max(worst, float(np.max(np.abs(rows[:stable] - reference.rows[:stable]))))
    return CheckResult("feature_leakage", worst == 0.0, worst, 0.0, perturbations)


def run_selftest(seed: int = 0) -> list[CheckResult]:
    results = [
        check_tree_shap(seed=seed),
        check_permutation_shap(seed=seed),
        check_dm(),
        check_lime_linear(seed=seed),
        check_leakage(seed=seed),
    ]
    for result in results:
        log = logger.info if result.passed else logger.error
        log(
            "%s: %s (worst %.3g, tolerance %.3g, %d cases)",
            result.name,
            "ok" if result.passed else "FAILED",
            result.worst,
            result.tolerance,
            result.cases,
        )
    return results
