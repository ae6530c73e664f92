"""Forecast accuracy metrics, the Diebold-Mariano comparison, moving-block
bootstrap confidence intervals and correlation helpers.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from errors import DataError, NumericalError, ValidationError
from math_utils import moving_block_indices

logger = logging.getLogger(__name__)

MetricFn = Callable[[NDArray, NDArray], float]


def _pair(y: ArrayLike, yhat: ArrayLike) -> tuple[NDArray, NDArray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if len(y) != len(yhat):
        raise ValidationError(
            f"(E) length mismatch: {len(y)} observations vs {len(yhat)} forecasts"
        )
    if len(y) == 0:
        raise ValidationError("(E) metrics need at least one observation")
    return y, yhat


#
# Point metrics
#


def rmse(y: ArrayLike, yhat: ArrayLike) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mape(y: ArrayLike, yhat: ArrayLike) -> float:
    """Mean absolute percentage error, in percent.

    Raises:
        DataError: Listing every position where the observation is zero.
    """
    y, yhat = _pair(y, yhat)
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise DataError(f"(E) MAPE undefined, zero observations at {zeros.tolist()}")
    return float(100.0 * np.mean(np.abs((y - yhat) / y)))


def smape(y: ArrayLike, yhat: ArrayLike) -> float:
    """Symmetric MAPE in percent, bounded in [0, 200].

    Raises:
        DataError: Listing every position where |y| + |yhat| is zero.
    """
    y, yhat = _pair(y, yhat)
    denominator = np.abs(y) + np.abs(yhat)
    zeros = np.flatnonzero(denominator == 0)
    if zeros.size:
        raise DataError(f"(E) sMAPE undefined, |y| + |yhat| = 0 at {zeros.tolist()}")
    return float(100.0 * np.mean(2.0 * np.abs(y - yhat) / denominator))


def r2(y: ArrayLike, yhat: ArrayLike) -> float:
    """Coefficient of determination against the mean of `y` itself.

    A constant `y` gives 1 for a perfect forecast and -inf otherwise.
    """
    y, yhat = _pair(y, yhat)
    sse = float(np.sum((y - yhat) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        return 1.0 if sse == 0 else float("-inf")
    return 1.0 - sse / sst


METRICS: dict[str, MetricFn] = {"rmse": rmse, "mape": mape, "smape": smape, "r2": r2}


def metric_by_name(metric: str | MetricFn) -> MetricFn:
    """Look up a metric function by name, or pass a callable straight through."""
    if callable(metric):
        return metric
    if metric not in METRICS:
        raise ValidationError(
            f"(E) unknown metric '{metric}', expected one of {sorted(METRICS)}"
        )
    return METRICS[metric]


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mape: float
    smape: float
    r2: float | None

    def as_dict(self) -> dict[str, float | None]:
        return asdict(self)


def metrics(y: ArrayLike, yhat: ArrayLike) -> MetricReport:
    """RMSE, MAPE (%), sMAPE (%) and R^2 for one forecast.

    R^2 is None (undefined) when y is constant and the forecast misses it.
    """
    score = r2(y, yhat)
    if not np.isfinite(score):
        logger.warning("R^2 is undefined for a constant target, reporting it as null")
        score = None
    return MetricReport(
        rmse=rmse(y, yhat), mape=mape(y, yhat), smape=smape(y, yhat), r2=score
    )


#
# Diebold-Mariano
#


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    n: int
    loss: str = "squared"
    small_sample_corrected: bool = True
    two_sided: bool = True
    indeterminate: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def dm_test(
    e_a: ArrayLike,
    e_b: ArrayLike,
    horizon: int = 1,
    two_sided: bool = True,
    small_sample_correction: bool = True,
) -> DmResult:
    """Diebold-Mariano test on squared-error loss differentials d_t = e_a^2 - e_b^2.

    A positive statistic means model A has the larger loss. The long-run variance
    uses autocovariances up to lag horizon - 1, the Harvey-Leybourne-Newbold
    factor is applied by default and p-values come from Student-t with n - 1
    degrees of freedom. The one-sided p-value tests "B is more accurate than A".

    Args:
        e_a (ArrayLike): Forecast errors of model A
        e_b (ArrayLike): Forecast errors of model B
        horizon (int, optional): Forecast horizon h. Defaults to 1.
        two_sided (bool, optional): Two-sided alternative. Defaults to True.
        small_sample_correction (bool, optional): Apply the HLN factor. Defaults to True.

    Raises:
        ValidationError: For mismatched lengths, n < 4 or horizon < 1.

    Returns:
        DmResult: Statistic and p-value. Identical loss differentials give an
            indeterminate result with statistic 0 and p-value 1.
    """
    e_a, e_b = _pair(e_a, e_b)
    n = len(e_a)
    if n < 4:
        raise ValidationError(f"(E) Diebold-Mariano needs at least 4 errors, got {n}")
    if horizon < 1:
        raise ValidationError(f"(E) horizon must be positive, got {horizon}")

    d = e_a**2 - e_b**2
    if np.all(d == d[0]):
        logger.warning("Diebold-Mariano: loss differentials are identical")
        return DmResult(
            statistic=0.0,
            p_value=1.0,
            n=n,
            small_sample_corrected=small_sample_correction,
            two_sided=two_sided,
            indeterminate=True,
        )

    mean_d = float(np.mean(d))
    centred = d - mean_d
    gammas = [np.dot(centred[k:], centred[: n - k]) / n for k in range(horizon)]
    long_run = gammas[0] + 2.0 * sum(gammas[1:])
    if long_run <= 0:
        # Negative autocovariances can swamp gamma_0 for h > 1
        logger.warning("Diebold-Mariano: non-positive long-run variance, using lag 0")
        long_run = gammas[0]

    statistic = mean_d / np.sqrt(long_run / n)
    if small_sample_correction:
        statistic *= np.sqrt((n + 1 - 2 * horizon + horizon * (horizon - 1) / n) / n)

    if two_sided:
        p_value = 2.0 * stats.t.sf(abs(statistic), df=n - 1)
    else:
        p_value = stats.t.sf(statistic, df=n - 1)

    return DmResult(
        statistic=float(statistic),
        p_value=float(min(p_value, 1.0)),
        n=n,
        small_sample_corrected=small_sample_correction,
        two_sided=two_sided,
    )


#
# Moving-block bootstrap
#


@dataclass(frozen=True)
class BootstrapCi:
    point: float
    lower: float
    upper: float
    block_length: int
    n_resamples: int
    alpha: float

    def as_dict(self) -> dict:
        return asdict(self)


def block_bootstrap_ci(
    y: ArrayLike,
    yhat: ArrayLike,
    metric: str | MetricFn = "rmse",
    block_length: int = 12,
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> BootstrapCi:
    """Percentile confidence interval for a metric by moving-block bootstrap.

    Blocks of `block_length` consecutive (y, yhat) pairs start at uniformly
    random positions; ceil(n / L) blocks are joined and truncated to n. Each
    resample draws from its own stream seeded by (seed, resample index).

    Raises:
        ValidationError: If the series is shorter than one block or alpha is not in (0, 1).
    """
    y, yhat = _pair(y, yhat)
    n = len(y)
    if block_length < 1 or n < block_length:
        raise ValidationError(
            f"(E) series of length {n} is shorter than block length {block_length}"
        )
    if not 0 < alpha < 1:
        raise ValidationError(f"(E) alpha must be in (0, 1), got {alpha}")
    if n_resamples < 1:
        raise ValidationError(f"(E) n_resamples must be positive, got {n_resamples}")

    metric_fn = metric_by_name(metric)
    point = metric_fn(y, yhat)

    replicates = np.empty(n_resamples)
    for r in range(n_resamples):
        rng = np.random.default_rng([seed, r])
        idx = moving_block_indices(n, block_length, rng)
        replicates[r] = metric_fn(y[idx], yhat[idx])

    lower, upper = np.percentile(replicates, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return BootstrapCi(
        point=float(point),
        lower=float(lower),
        upper=float(upper),
        block_length=block_length,
        n_resamples=n_resamples,
        alpha=alpha,
    )


#
# Correlation
#


def pearson(x: ArrayLike, y: ArrayLike) -> float:
    """Pearson product-moment correlation.

    Raises:
        ValidationError: For mismatched lengths or fewer than 2 points.
        NumericalError: If either input has zero variance.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y) or len(x) < 2:
        raise ValidationError(
            f"(E) correlation needs equal lengths >= 2, got {len(x)} and {len(y)}"
        )
    xc = x - x.mean()
    yc = y - y.mean()
    denominator = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if denominator == 0:
        raise NumericalError("(E) correlation of a zero-variance input")
    return float(np.clip(np.dot(xc, yc) / denominator, -1.0, 1.0))


def spearman(x: ArrayLike, y: ArrayLike) -> float:
    """Spearman rank correlation: Pearson on average-tied ranks."""
    return pearson(stats.rankdata(x), stats.rankdata(y))
