"""Feature attributions for fitted forecasters.

Black-box explainers take a batch prediction function mapping an (n, p) array
of feature rows to n outputs, so a whole set of perturbed rows is scored in
one call. TreeSHAP reads the fitted ensemble directly.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from itertools import combinations
from math import factorial
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from errors import DataError, NumericalError, ValidationError
from eval_stats import metric_by_name, spearman
from gbt import GbtModel
from math_utils import moving_block_indices, weighted_least_squares
from supervise import FeatureMatrix, Standardizer

logger = logging.getLogger(__name__)

Predict = Callable[[NDArray], NDArray]

BACKGROUND_MODES = ("global_mean", "seasonal_month_mean", "seasonal_rows", "explicit")
MAX_EXACT_FEATURES = 16


def _iso(time: tuple[int, int]) -> str:
    return f"{time[0]:04d}-{time[1]:02d}"


#
# Types
#


@dataclass(frozen=True, eq=False)
class Attribution:
    """Additive explanation of one prediction: baseline_value + sum(phi) = prediction."""

    features: tuple[str, ...]
    phi: NDArray
    baseline_value: float
    prediction: float
    time: tuple[int, int] | None = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64).ravel()
        if len(phi) != len(self.features):
            raise ValidationError(
                f"(E) {len(phi)} contributions for {len(self.features)} features"
            )
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def local_accuracy_gap(self) -> float:
        return abs(self.baseline_value + float(self.phi.sum()) - self.prediction)

    def as_dict(self) -> dict:
        return {
            "phi": dict(zip(self.features, self.phi.tolist())),
            "baseline_value": self.baseline_value,
            "prediction": self.prediction,
        }


@dataclass(frozen=True, eq=False)
class Background:
    """Reference rows that stand in for "absent" features."""

    mode: str
    data: NDArray

    def __post_init__(self):
        if self.mode not in BACKGROUND_MODES:
            raise ValidationError(
                f"(E) unknown background mode '{self.mode}', expected one of {BACKGROUND_MODES}"
            )
        data = np.atleast_2d(np.array(self.data, dtype=np.float64))
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValidationError("(E) a background needs at least one row")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    def vector(self) -> NDArray:
        """The background collapsed to a single baseline vector."""
        return self.data.mean(axis=0)

    @classmethod
    def global_mean(cls, train: FeatureMatrix) -> "Background":
        if len(train) == 0:
            raise ValidationError("(E) cannot take the mean of an empty matrix")
        return cls("global_mean", train.rows.mean(axis=0)[None, :])

    @classmethod
    def explicit(cls, rows: ArrayLike) -> "Background":
        return cls("explicit", rows)


@dataclass(frozen=True, eq=False)
class LimeExplanation:
    """Weighted linear surrogate around one instance.

    `coefficients` are slopes in raw feature units; `scaled_coefficients` are the
    same slopes per training standard deviation, comparable across features.
    """

    features: tuple[str, ...]
    intercept: float
    coefficients: NDArray
    scaled_coefficients: NDArray
    kernel_width: float
    surrogate_r2: float
    n_samples: int
    prediction: float
    time: tuple[int, int] | None = None

    @property
    def top_feature(self) -> str:
        """Feature with the largest absolute scaled coefficient."""
        return self.features[int(np.argmax(np.abs(self.scaled_coefficients)))]

    def as_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coefficients": dict(zip(self.features, self.coefficients.tolist())),
            "scaled_coefficients": dict(zip(self.features, self.scaled_coefficients.tolist())),
            "kernel_width": self.kernel_width,
            "surrogate_r2": self.surrogate_r2,
            "n_samples": self.n_samples,
            "prediction": self.prediction,
        }


def _instance(instance: ArrayLike, n_features: int) -> NDArray:
    x = np.asarray(instance, dtype=np.float64)
    if x.ndim != 1 or len(x) != n_features:
        raise ValidationError(
            f"(E) instance has shape {x.shape}, expected ({n_features},)"
        )
    return x


def _feature_names(features: Sequence[str] | None, p: int) -> tuple[str, ...]:
    if features is None:
        return tuple(f"x{i}" for i in range(p))
    if len(features) != p:
        raise ValidationError(f"(E) {len(features)} feature names for {p} features")
    return tuple(features)


#
# Backgrounds
#


def seasonal_background(train: FeatureMatrix, month: int) -> Background:
    """Every training row whose target falls in the given calendar month.

    Raises:
        ValidationError: If month is not in 1..12.
        DataError: If no training row has that month.
    """
    if not 1 <= month <= 12:
        raise ValidationError(f"(E) month must be in 1..12, got {month}")
    rows = train.rows[train.months() == month]
    if rows.shape[0] == 0:
        raise DataError(f"(E) no training rows for month {month}")
    return Background("seasonal_rows", rows)


def background_for(mode: str, train: FeatureMatrix, month: int) -> Background:
    """Resolve a configured background mode for an instance of the given month.

    "global_mean" is the training mean, "seasonal_month_mean" the mean of the
    training rows of that month and "seasonal_rows" those rows themselves.
    """
    if mode == "global_mean":
        return Background.global_mean(train)
    if mode == "seasonal_month_mean":
        return Background("seasonal_month_mean", seasonal_background(train, month).vector())
    if mode == "seasonal_rows":
        return seasonal_background(train, month)
    raise ValidationError(f"(E) background mode '{mode}' cannot be resolved from training rows")


#
# Shapley estimators
#


def permutation_shap(
    predict: Predict,
    instance: ArrayLike,
    bg: Background,
    m_permutations: int = 50,
    seed: int | Sequence[int] = 0,
    features: Sequence[str] | None = None,
    time: tuple[int, int] | None = None,
) -> Attribution:
    """Monte-Carlo Shapley values from random feature orderings.

    For each ordering the features are switched one by one from the baseline
    vector to the instance value and the marginal change is credited to the
    switched feature. Multi-row backgrounds are averaged to one vector first.
    All m (p + 1) coalition rows are scored in a single `predict` call.

    Args:
        predict (Predict): Batch prediction function
        instance (ArrayLike): Feature vector to explain
        bg (Background): Baseline
        m_permutations (int, optional): Number of orderings. Defaults to 50.
        seed (int | Sequence[int], optional): Seed of the ordering stream. Defaults to 0.
        features (Sequence[str], optional): Feature names. Defaults to x0..x(p-1).
        time (tuple[int, int], optional): Calendar month of the instance.

    Raises:
        ValidationError: If m < 1 or the dimensions disagree.

    Returns:
        Attribution: Estimated contributions; local accuracy holds exactly
    """
    if m_permutations < 1:
        raise ValidationError(f"(E) m_permutations must be >= 1, got {m_permutations}")
    p = bg.n_features
    x = _instance(instance, p)
    baseline = bg.vector()

    rng = np.random.default_rng(seed)
    orders = np.array([rng.permutation(p) for _ in range(m_permutations)])
    position = np.argsort(orders, axis=1)

    # coalitions[k, j] switches the first j features of ordering k to the instance
    switched = position[:, None, :] < np.arange(p + 1)[None, :, None]
    coalitions = np.where(switched, x, baseline)
    values = np.asarray(predict(coalitions.reshape(-1, p)), dtype=np.float64)
    values = values.reshape(m_permutations, p + 1)

    phi = np.zeros(p)
    np.add.at(phi, orders, np.diff(values, axis=1))
    phi /= m_permutations

    return Attribution(
        features=_feature_names(features, p),
        phi=phi,
        baseline_value=float(values[0, 0]),
        prediction=float(values[0, -1]),
        time=time,
    )


def tree_shap(
    model: GbtModel,
    instance: ArrayLike,
    bg: Background,
    time: tuple[int, int] | None = None,
) -> Attribution:
    """Exact interventional Shapley values of a tree ensemble.

    For one leaf, background row z and instance x, the leaf's indicator as a
    function of which features come from x is a product over the features on
    its path: U holds those only x satisfies, V those only z satisfies. That
    game gives each feature in U the weight B(|U|, |V| + 1) and each feature in
    V the weight -B(|U| + 1, |V|), times the leaf value; every other feature is
    a dummy. Summing over leaves and averaging over background rows is exact.

    Raises:
        ValidationError: If the dimensions disagree.
    """
    p = model.n_features
    x = _instance(instance, p)
    if bg.n_features != p:
        raise ValidationError(f"(E) background has {bg.n_features} features, model has {p}")
    Z = bg.data

    prediction = model.predict(x)
    baseline_value = float(np.mean(model.predict_batch(Z)))
    if not model.trees:
        return Attribution(model.columns, np.zeros(p), baseline_value, prediction, time)

    values, lower, upper, _ = model.leaf_boxes()
    in_x = (lower <= x) & (x < upper)
    in_z = (lower[None] <= Z[:, None]) & (Z[:, None] < upper[None])

    only_x = in_x[None] & ~in_z
    only_z = ~in_x[None] & in_z
    reachable = np.all(in_x[None] | in_z, axis=2)
    a = only_x.sum(axis=2)
    b = only_z.sum(axis=2)
    active = reachable & (a + b > 0)

    weight_x = np.where(a > 0, special.beta(np.maximum(a, 1), b + 1), 0.0)
    weight_z = np.where(b > 0, special.beta(a + 1, np.maximum(b, 1)), 0.0)
    scale = np.where(active, values[None, :], 0.0)

    phi = np.einsum("bl,blf->f", scale * weight_x, only_x) - np.einsum(
        "bl,blf->f", scale * weight_z, only_z
    )
    phi *= model.learning_rate / Z.shape[0]

    return Attribution(model.columns, phi, baseline_value, prediction, time)


def exact_shapley(
    predict: Predict,
    instance: ArrayLike,
    bg: Background,
    features: Sequence[str] | None = None,
) -> Attribution:
    """Interventional Shapley values by enumerating all 2^p coalitions.

    v(S) is the prediction with the features in S taken from the instance and
    the rest from a background row, averaged over the background rows.

    Raises:
        ValidationError: If p exceeds MAX_EXACT_FEATURES or the dimensions disagree.
    """
    p = bg.n_features
    x = _instance(instance, p)
    if p > MAX_EXACT_FEATURES:
        raise ValidationError(f"(E) exact enumeration limited to {MAX_EXACT_FEATURES} features")

    codes = np.arange(2**p)
    masks = ((codes[:, None] >> np.arange(p)[None, :]) & 1).astype(bool)
    rows = np.where(masks[:, None, :], x, bg.data[None, :, :])
    value = np.asarray(predict(rows.reshape(-1, p)), dtype=np.float64)
    value = value.reshape(2**p, bg.data.shape[0]).mean(axis=1)

    sizes = masks.sum(axis=1)
    weights = np.array([factorial(s) * factorial(p - s - 1) / factorial(p) for s in range(p)])

    phi = np.zeros(p)
    for i in range(p):
        without = codes[~masks[:, i]]
        phi[i] = np.dot(weights[sizes[without]], value[without | (1 << i)] - value[without])

    return Attribution(
        features=_feature_names(features, p),
        phi=phi,
        baseline_value=float(value[0]),
        prediction=float(value[-1]),
    )


#
# Aggregation
#


def shap_global_summary(attributions: Sequence[Attribution]) -> list[tuple[str, float]]:
    """Mean |phi| per feature, largest first, ties by feature name.

    Raises:
        ValidationError: If there are no attributions or their features differ.
    """
    if not attributions:
        raise ValidationError("(E) a global summary needs at least one attribution")
    features = attributions[0].features
    if any(a.features != features for a in attributions):
        raise ValidationError("(E) attributions do not share the same features")
    mean_abs = np.mean([np.abs(a.phi) for a in attributions], axis=0)
    return sorted(zip(features, mean_abs.tolist()), key=lambda item: (-item[1], item[0]))


def dependence_data(
    attributions: Sequence[Attribution],
    rows: FeatureMatrix,
    feature: str,
    color_feature: str,
) -> list[tuple[float, float, float]]:
    """(feature value, its phi, colour feature value) per explained row, in time order.

    Raises:
        ValidationError: For unknown features or if attributions and rows do not pair up.
    """
    column = rows.column_index(feature)
    color_column = rows.column_index(color_feature)
    if not attributions:
        return []
    if len(attributions) != len(rows):
        raise ValidationError(
            f"(E) {len(attributions)} attributions for {len(rows)} feature rows"
        )
    phi_column = attributions[0].features.index(feature)
    order = sorted(range(len(rows)), key=lambda i: rows.times[i])
    return [
        (
            float(rows.rows[i, column]),
            float(attributions[i].phi[phi_column]),
            float(rows.rows[i, color_column]),
        )
        for i in order
    ]


#
# LIME
#


def lime_explain(
    predict: Predict,
    instance: ArrayLike,
    train: FeatureMatrix,
    standardizer: Standardizer,
    n_samples: int = 5000,
    kernel_width_factor: float = 0.75,
    seed: int | Sequence[int] = 0,
    time: tuple[int, int] | None = None,
) -> LimeExplanation:
    """Fit a locally weighted linear surrogate around one instance.

    Perturbations draw every feature independently, with replacement, from its
    training column. Weights are exp(-d^2 / sigma^2) with d the Euclidean
    distance to the instance in standardized space and sigma = factor * sqrt(p).
    The surrogate is solved on standardized inputs and reported in raw units.

    Args:
        predict (Predict): Batch prediction function
        instance (ArrayLike): Feature vector to explain
        train (FeatureMatrix): Training rows the perturbations are drawn from
        standardizer (Standardizer): Fitted on the same training rows
        n_samples (int, optional): Perturbations. Defaults to 5000.
        kernel_width_factor (float, optional): Kernel width per sqrt(p). Defaults to 0.75.
        seed (int | Sequence[int], optional): Seed of the perturbation stream. Defaults to 0.
        time (tuple[int, int], optional): Calendar month of the instance.

    Raises:
        ValidationError: For an empty training set, a non-positive width or n_samples < 2.
        NumericalError: If every kernel weight underflows or the system is singular.

    Returns:
        LimeExplanation: The surrogate with its weighted R^2 on the perturbations
    """
    if len(train) == 0:
        raise ValidationError("(E) LIME needs a non-empty training matrix")
    if not kernel_width_factor > 0:
        raise ValidationError(f"(E) kernel width factor must be > 0, got {kernel_width_factor}")
    if n_samples < 2:
        raise ValidationError(f"(E) n_samples must be >= 2, got {n_samples}")

    x = _instance(instance, train.n_features)
    samples, responses = _perturb(predict, train, n_samples, np.random.default_rng(seed))
    prediction = float(np.asarray(predict(x[None, :]))[0])
    return _surrogate(
        samples, responses, x, prediction, train.columns, standardizer, kernel_width_factor, time
    )


def _perturb(
    predict: Predict, train: FeatureMatrix, n_samples: int, rng: np.random.Generator
) -> tuple[NDArray, NDArray]:
    """Draw each column independently from its training values and score the rows."""
    p = train.n_features
    picks = rng.integers(0, len(train), size=(n_samples, p))
    samples = train.rows[picks, np.arange(p)[None, :]]
    return samples, np.asarray(predict(samples), dtype=np.float64)


def _surrogate(
    samples: NDArray,
    responses: NDArray,
    x: NDArray,
    prediction: float,
    features: tuple[str, ...],
    standardizer: Standardizer,
    kernel_width_factor: float,
    time: tuple[int, int] | None,
) -> LimeExplanation:
    n_samples, p = samples.shape
    z = standardizer.transform(samples)
    z_x = standardizer.transform(x)
    width = kernel_width_factor * np.sqrt(p)
    weights = np.exp(-np.sum((z - z_x) ** 2, axis=1) / width**2)
    if not weights.sum() > 0:
        raise NumericalError(f"(E) every LIME kernel weight underflowed at width {width:.4g}")

    design = np.column_stack([np.ones(n_samples), z])
    beta = weighted_least_squares(design, responses, weights)

    fitted = design @ beta
    mean = np.average(responses, weights=weights)
    sse = float(np.sum(weights * (responses - fitted) ** 2))
    sst = float(np.sum(weights * (responses - mean) ** 2))
    surrogate_r2 = 1.0 if sst == 0 else float(np.clip(1.0 - sse / sst, 0.0, 1.0))

    scaled = beta[1:]
    coefficients = scaled / standardizer.scale
    intercept = float(beta[0] - np.dot(coefficients, standardizer.mean))

    return LimeExplanation(
        features=features,
        intercept=intercept,
        coefficients=coefficients,
        scaled_coefficients=scaled,
        kernel_width=float(width),
        surrogate_r2=surrogate_r2,
        n_samples=n_samples,
        prediction=prediction,
        time=time,
    )


@dataclass(frozen=True)
class KernelSweep:
    factors: tuple[float, ...]
    median_r2: dict[float, float]
    top_feature_agreement: float
    explanations: dict[float, tuple[LimeExplanation, ...]]

    def as_dict(self) -> dict:
        return {
            "factors": list(self.factors),
            "median_r2": {str(f): r for f, r in self.median_r2.items()},
            "top_feature_agreement": self.top_feature_agreement,
        }


def kernel_width_sweep(
    predict: Predict,
    instances: FeatureMatrix,
    train: FeatureMatrix,
    standardizer: Standardizer,
    factors: Iterable[float],
    n_samples: int = 5000,
    seed: int = 0,
) -> KernelSweep:
    """LIME at several kernel widths for every instance.

    Instance i uses the stream (seed, i) at every width, so widths are compared
    on the same perturbations.

    Raises:
        ValidationError: If no factor is given.
    """
    factors = tuple(sorted(set(float(f) for f in factors)))
    if not factors:
        raise ValidationError("(E) kernel width sweep needs at least one factor")
    if factors[0] <= 0:
        raise ValidationError(f"(E) kernel width factors must be > 0, got {factors}")
    if len(train) == 0 or n_samples < 2:
        raise ValidationError("(E) LIME needs training rows and n_samples >= 2")

    found = {factor: [] for factor in factors}
    predictions = np.asarray(predict(instances.rows), dtype=np.float64)
    for i, row in enumerate(instances.rows):
        samples, responses = _perturb(
            predict, train, n_samples, np.random.default_rng([seed, i])
        )
        for factor in factors:
            found[factor].append(
                _surrogate(
                    samples,
                    responses,
                    row,
                    float(predictions[i]),
                    train.columns,
                    standardizer,
                    factor,
                    instances.times[i],
                )
            )
    explanations = {factor: tuple(items) for factor, items in found.items()}
    median_r2 = {
        factor: float(np.median([e.surrogate_r2 for e in items]))
        for factor, items in explanations.items()
    }

    n = len(instances)
    agreeing = sum(
        len({explanations[factor][i].top_feature for factor in factors}) == 1 for i in range(n)
    )
    return KernelSweep(
        factors=factors,
        median_r2=median_r2,
        top_feature_agreement=agreeing / n if n else 1.0,
        explanations=explanations,
    )


#
# Permutation importance
#


@dataclass(frozen=True)
class ImportanceEntry:
    feature: str
    mean_increase: float
    std: float

    def as_dict(self) -> dict:
        return asdict(self)


def permutation_importance(
    predict: Predict,
    test: FeatureMatrix,
    metric: str = "rmse",
    n_repeats: int = 10,
    seed: int = 0,
) -> list[ImportanceEntry]:
    """Increase of the metric when one column is shuffled, largest first.

    Column f at repeat r is shuffled with the stream (seed, f, r).

    Raises:
        ValidationError: If the test matrix has fewer than 2 rows or n_repeats < 1.
    """
    n, p = len(test), test.n_features
    if n < 2:
        raise ValidationError(f"(E) permutation importance needs >= 2 rows, got {n}")
    if n_repeats < 1:
        raise ValidationError(f"(E) n_repeats must be >= 1, got {n_repeats}")
    metric_fn = metric_by_name(metric)

    reference = metric_fn(test.target, predict(test.rows))

    shuffled = np.broadcast_to(test.rows, (p, n_repeats, n, p)).copy()
    for f in range(p):
        for r in range(n_repeats):
            rng = np.random.default_rng([seed, f, r])
            shuffled[f, r, :, f] = test.rows[rng.permutation(n), f]
    predictions = np.asarray(predict(shuffled.reshape(-1, p))).reshape(p, n_repeats, n)

    increases = np.array(
        [
            [metric_fn(test.target, predictions[f, r]) - reference for r in range(n_repeats)]
            for f in range(p)
        ]
    )
    entries = [
        ImportanceEntry(name, float(increases[f].mean()), float(increases[f].std()))
        for f, name in enumerate(test.columns)
    ]
    return sorted(entries, key=lambda e: (-e.mean_increase, e.feature))


#
# Stability
#


@dataclass(frozen=True)
class StabilityResult:
    mode: str
    mean_spearman: float
    pairwise: tuple[float, ...]
    n_bootstrap: int
    block_length: int

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mean_spearman": self.mean_spearman,
            "pairwise": list(self.pairwise),
            "n_bootstrap": self.n_bootstrap,
            "block_length": self.block_length,
        }


def explanation_stability(
    fit: Callable[[FeatureMatrix], GbtModel],
    train: FeatureMatrix,
    test: FeatureMatrix,
    modes: Sequence[str] = ("global_mean", "seasonal_month_mean"),
    n_bootstrap: int = 20,
    block_length: int = 12,
    seed: int = 0,
) -> dict[str, StabilityResult]:
    """Agreement of global SHAP rankings across block-bootstrap refits.

    Each bootstrap resamples the training rows in blocks of `block_length`
    consecutive rows (stream (seed, b)), refits once, and computes TreeSHAP on
    the fixed test rows under every background mode, with backgrounds drawn from
    the resampled rows. Rankings are compared by Spearman correlation of the
    per-feature mean |phi| over all bootstrap pairs.

    Raises:
        ValidationError: If n_bootstrap < 2 or the block is longer than the training set.
    """
    if n_bootstrap < 2:
        raise ValidationError(f"(E) stability needs >= 2 bootstraps, got {n_bootstrap}")
    if not 1 <= block_length <= len(train):
        raise ValidationError(
            f"(E) block length {block_length} does not fit {len(train)} training rows"
        )

    test_months = test.months()
    importance = {mode: [] for mode in modes}

    for b in range(n_bootstrap):
        rng = np.random.default_rng([seed, b])
        resampled = train.take(moving_block_indices(len(train), block_length, rng))
        model = fit(resampled)
        for mode in modes:
            attributions = [
                tree_shap(model, row, background_for(mode, resampled, int(month)))
                for row, month in zip(test.rows, test_months)
            ]
            importance[mode].append(np.mean([np.abs(a.phi) for a in attributions], axis=0))
        logger.debug("Stability bootstrap %d/%d done", b + 1, n_bootstrap)

    results = {}
    for mode, vectors in importance.items():
        pairwise = []
        for i, j in combinations(range(n_bootstrap), 2):
            if np.array_equal(vectors[i], vectors[j]):
                pairwise.append(1.0)
            else:
                pairwise.append(spearman(vectors[i], vectors[j]))
        results[mode] = StabilityResult(
            mode=mode,
            mean_spearman=float(np.mean(pairwise)),
            pairwise=tuple(pairwise),
            n_bootstrap=n_bootstrap,
            block_length=block_length,
        )
    return results


#
# Export
#


def attributions_to_csv(attributions: Sequence[Attribution], path: str):
    """One row per instance: ISO month, phi per feature, baseline and prediction.

    Raises:
        ValidationError: If the attributions do not share features.
    """
    if not attributions:
        raise ValidationError("(E) nothing to export")
    features = attributions[0].features
    if any(a.features != features for a in attributions):
        raise ValidationError("(E) attributions do not share the same features")
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(["date", *features, "baseline_value", "prediction"])
        for a in attributions:
            writer.writerow(
                [
                    _iso(a.time) if a.time else "",
                    *map(repr, a.phi.tolist()),
                    repr(a.baseline_value),
                    repr(a.prediction),
                ]
            )


def attributions_to_json(attributions: Sequence[Attribution]) -> dict[str, dict]:
    """Attributions keyed by ISO month.

    Raises:
        ValidationError: If an attribution has no month or two share one.
    """
    document = {}
    for a in attributions:
        if a.time is None:
            raise ValidationError("(E) attributions need a month to be keyed by date")
        key = _iso(a.time)
        if key in document:
            raise ValidationError(f"(E) two attributions for {key}")
        document[key] = a.as_dict()
    return document
