"""Seasonal ARIMA estimated by conditional sum of squares.

The model on the differenced (and optionally logged) series w is

    Phi_p(B) Phi_P(B^s) w_t = c + Theta_q(B) Theta_P(B^s) e_t

with every polynomial written as 1 - c_1 B - c_2 B^2 - ... Pre-sample w and e
are zero. Estimation minimises the summed squared one-step innovations with a
Nelder-Mead simplex started from zero and from seeded random points.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, signal
from statsmodels.stats import diagnostic

from errors import DataError, NumericalError, ValidationError
from math_utils import backshift_polynomial
from series_core import TimeSeries, difference, integrate, log_transform

logger = logging.getLogger(__name__)

MAX_ORDER = 5
N_RESTARTS = 5
MODEL_FORMAT = "sarima-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ArimaSpec:
    p: int = 2
    d: int = 1
    q: int = 2
    P: int = 0
    D: int = 1
    Q: int = 0
    s: int = 12
    use_log: bool = True
    include_intercept: bool = True

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q"):
            value = getattr(self, name)
            if not 0 <= value <= MAX_ORDER:
                raise ValidationError(f"(E) order {name}={value} outside 0..{MAX_ORDER}")
        if self.s < 1:
            raise ValidationError(f"(E) seasonal period must be >= 1, got {self.s}")

    @property
    def n_params(self) -> int:
        """Number of estimated coefficients, including the intercept."""
        return self.p + self.q + self.P + self.Q + int(self.include_intercept)

    @property
    def lost(self) -> int:
        """Observations consumed by differencing."""
        return self.d + self.D * self.s

    def label(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})[{self.s}]"


@dataclass(frozen=True)
class ArmaParams:
    intercept: float
    phi: NDArray
    theta: NDArray
    seasonal_phi: NDArray
    seasonal_theta: NDArray


def unpack_params(params: ArrayLike, spec: ArimaSpec) -> ArmaParams:
    """Split a flat parameter vector [c, phi, theta, Phi, Theta] (c only with an intercept)."""
    params = np.asarray(params, dtype=np.float64)
    if len(params) != spec.n_params:
        raise ValidationError(
            f"(E) expected {spec.n_params} parameters for {spec.label()}, got {len(params)}"
        )
    offset = int(spec.include_intercept)
    intercept = float(params[0]) if spec.include_intercept else 0.0
    sizes = (spec.p, spec.q, spec.P, spec.Q)
    parts = np.split(params[offset:], np.cumsum(sizes)[:-1])
    return ArmaParams(intercept, *parts)


def lag_polynomials(arma: ArmaParams, s: int) -> tuple[NDArray, NDArray]:
    """Full AR and MA polynomials, seasonal and ordinary factors multiplied out."""
    ar = np.convolve(
        backshift_polynomial(arma.phi), backshift_polynomial(arma.seasonal_phi, step=s)
    )
    ma = np.convolve(
        backshift_polynomial(arma.theta), backshift_polynomial(arma.seasonal_theta, step=s)
    )
    return ar, ma


def innovations(params: ArrayLike, w: ArrayLike, spec: ArimaSpec) -> NDArray:
    """One-step innovations e_t with zero pre-sample values."""
    arma = unpack_params(params, spec)
    ar, ma = lag_polynomials(arma, spec.s)
    w = np.asarray(w, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        driven = signal.lfilter(ar, [1.0], w) - arma.intercept
        return signal.lfilter([1.0], ma, driven)


def css_loss(params: ArrayLike, w: ArrayLike, spec: ArimaSpec) -> float:
    """Conditional sum of squared innovations. Divergent recursions give +inf."""
    eps = innovations(params, w, spec)
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.dot(eps, eps))
    return loss if np.isfinite(loss) else np.inf


@dataclass(eq=False)
class ArimaModel:
    spec: ArimaSpec
    intercept: float
    phi: NDArray
    theta: NDArray
    seasonal_phi: NDArray
    seasonal_theta: NDArray
    sigma2: float
    aic: float
    css: float
    converged: bool
    # Transformed (log or raw) undifferenced training series, differenced series and innovations
    levels: NDArray = field(repr=False)
    differenced: NDArray = field(repr=False)
    residuals: NDArray = field(repr=False)
    end: tuple[int, int] = (0, 0)

    @property
    def n_eff(self) -> int:
        return len(self.differenced)

    @property
    def params(self) -> NDArray:
        head = [self.intercept] if self.spec.include_intercept else []
        return np.concatenate(
            [head, self.phi, self.theta, self.seasonal_phi, self.seasonal_theta]
        )

    def coefficients(self) -> dict:
        return {
            "intercept": self.intercept,
            "phi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "seasonal_phi": self.seasonal_phi.tolist(),
            "seasonal_theta": self.seasonal_theta.tolist(),
        }

    def to_json(self) -> str:
        document = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "spec": asdict(self.spec),
            **self.coefficients(),
            "sigma2": self.sigma2,
            "aic": self.aic,
            "css": self.css,
            "converged": self.converged,
            "levels": self.levels.tolist(),
            "differenced": self.differenced.tolist(),
            "residuals": self.residuals.tolist(),
            "end": list(self.end),
        }
        return json.dumps(document, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Self:
        document = json.loads(text)
        if document.get("format") != MODEL_FORMAT or document.get("version") != MODEL_VERSION:
            raise DataError("(E) not a supported SARIMA model document")
        return cls(
            spec=ArimaSpec(**document["spec"]),
            intercept=document["intercept"],
            phi=np.array(document["phi"]),
            theta=np.array(document["theta"]),
            seasonal_phi=np.array(document["seasonal_phi"]),
            seasonal_theta=np.array(document["seasonal_theta"]),
            sigma2=document["sigma2"],
            aic=document["aic"],
            css=document["css"],
            converged=document["converged"],
            levels=np.array(document["levels"]),
            differenced=np.array(document["differenced"]),
            residuals=np.array(document["residuals"]),
            end=tuple(document["end"]),
        )


def _transform(ts: TimeSeries, spec: ArimaSpec) -> tuple[TimeSeries, NDArray]:
    series = log_transform(ts) if spec.use_log else ts
    if len(series) <= spec.lost:
        raise DataError(
            f"(E) series of length {len(series)} is too short for {spec.label()}"
        )
    differenced = difference(series, spec.d, spec.D, spec.s)
    return series, differenced.values


def fit_sarima(
    ts: TimeSeries,
    spec: ArimaSpec = None,
    seed: int = 0,
    initial_params: ArrayLike | None = None,
    max_iter: int = 4000,
) -> ArimaModel:
    """Fit a seasonal ARIMA by conditional sum of squares.

    The simplex is started from the zero vector, from `initial_params` when
    given, and from five seeded random points in (-0.5, 0.5); the lowest loss
    wins. sigma2 = CSS / n_eff and AIC = n_eff ln(sigma2) + 2 k.

    Args:
        ts (TimeSeries): Undifferenced series on its original scale
        spec (ArimaSpec, optional): Orders and transforms. Defaults to ArimaSpec().
        seed (int, optional): Seed for the random restarts. Defaults to 0.
        initial_params (ArrayLike, optional): Extra starting point, e.g. a nested model's optimum.
        max_iter (int, optional): Simplex iterations per parameter. Defaults to 4000.

    Raises:
        DataError: If the series is too short or the differenced series is degenerate.

    Returns:
        ArimaModel: Best fit found; `converged` is False if the winning run hit the iteration cap
    """
    if spec is None:
        spec = ArimaSpec()

    series, w = _transform(ts, spec)
    n_eff = len(w)
    k = spec.n_params

    if n_eff <= k + 1:
        raise DataError(
            f"(E) {n_eff} differenced observations cannot support {k} parameters"
        )
    if n_eff < 10 * (spec.p + spec.q + spec.P + spec.Q + 1):
        logger.warning(
            "Only %d differenced observations for %s, estimates may be unreliable",
            n_eff,
            spec.label(),
        )

    if k == 0:
        best_x, best_loss, converged = np.zeros(0), css_loss([], w, spec), True
    else:
        scale = css_loss(np.zeros(k), w, spec)
        if not np.isfinite(scale) or scale <= 0:
            scale = 1.0

        def objective(x):
            return css_loss(x, w, spec) / scale

        rng = np.random.default_rng(seed)
        starts = [np.zeros(k)]
        if initial_params is not None:
            starts.append(np.asarray(initial_params, dtype=np.float64))
        starts += [rng.uniform(-0.5, 0.5, size=k) for _ in range(N_RESTARTS)]

        best_x, best_loss, converged = None, np.inf, False
        for x0 in starts:
            result = optimize.minimize(
                objective,
                x0,
                method="Nelder-Mead",
                options={
                    "maxiter": max_iter * k,
                    "maxfev": max_iter * k * 2,
                    "xatol": 1e-9,
                    "fatol": 1e-12,
                    "adaptive": True,
                },
            )
            if result.fun < best_loss:
                best_x, best_loss, converged = result.x, result.fun, bool(result.success)
        if best_x is None:
            raise NumericalError(f"(E) no finite CSS found for {spec.label()}")
        best_loss = css_loss(best_x, w, spec)

    if not converged:
        logger.warning("Simplex did not converge for %s, keeping best found", spec.label())

    sigma2 = best_loss / n_eff
    if not sigma2 > 0:
        raise DataError(f"(E) degenerate series, zero innovation variance for {spec.label()}")

    arma = unpack_params(best_x, spec)
    return ArimaModel(
        spec=spec,
        intercept=arma.intercept,
        phi=arma.phi,
        theta=arma.theta,
        seasonal_phi=arma.seasonal_phi,
        seasonal_theta=arma.seasonal_theta,
        sigma2=float(sigma2),
        aic=float(n_eff * np.log(sigma2) + 2 * k),
        css=float(best_loss),
        converged=converged,
        levels=series.values.copy(),
        differenced=w.copy(),
        residuals=innovations(best_x, w, spec),
        end=ts.end,
    )


def forecast(model: ArimaModel, horizon: int) -> NDArray:
    """Multi-step forecast on the original scale.

    Future innovations are zero; differencing and the log are inverted afterwards.

    Raises:
        ValidationError: If horizon < 1.
    """
    if horizon < 1:
        raise ValidationError(f"(E) horizon must be >= 1, got {horizon}")

    spec = model.spec
    ar, ma = lag_polynomials(
        ArmaParams(
            model.intercept, model.phi, model.theta, model.seasonal_phi, model.seasonal_theta
        ),
        spec.s,
    )
    w_hist = list(model.differenced)
    e_hist = list(model.residuals)

    future = np.empty(horizon)
    for h in range(horizon):
        value = model.intercept
        for lag in range(1, len(ar)):
            if lag <= len(w_hist):
                value -= ar[lag] * w_hist[-lag]
        for lag in range(1, len(ma)):
            if lag <= len(e_hist):
                value += ma[lag] * e_hist[-lag]
        w_hist.append(value)
        e_hist.append(0.0)
        future[h] = value

    levels = integrate(future, model.levels, spec.d, spec.D, spec.s)
    return np.exp(levels) if spec.use_log else levels


def fitted_values(model: ArimaModel, original_scale: bool = False) -> NDArray:
    """In-sample one-step predictions for the observations after the differencing prefix.

    On the transformed scale, fitted + residuals reproduces the series exactly.
    """
    spec = model.spec
    one_step = model.differenced - model.residuals
    lost = spec.lost
    # Each fitted level reuses the observed levels before it, not earlier fits
    fitted = np.array(
        [
            integrate([one_step[i]], model.levels[: lost + i], spec.d, spec.D, spec.s)[0]
            for i in range(len(one_step))
        ]
    )
    if original_scale and spec.use_log:
        return np.exp(fitted)
    return fitted


@dataclass(frozen=True)
class LjungBox:
    statistic: float
    p_value: float
    lags: int

    def as_dict(self) -> dict:
        return asdict(self)


def ljung_box(model: ArimaModel, lags: int | None = None) -> LjungBox:
    """Ljung-Box portmanteau test that the innovations are white noise.

    Degrees of freedom are reduced by the number of ARMA coefficients. The
    default checks two seasonal cycles, capped at a quarter of the residuals.

    Raises:
        ValidationError: If lags does not exceed the ARMA coefficient count or
            is not below the number of residuals.
        NumericalError: If the residuals have no variance.
    """
    spec = model.spec
    model_df = spec.p + spec.q + spec.P + spec.Q
    residuals = model.residuals
    if lags is None:
        lags = max(min(2 * spec.s, len(residuals) // 4), model_df + 1)
    if not model_df < lags < len(residuals):
        raise ValidationError(
            f"(E) Ljung-Box lags must be in {model_df + 1}..{len(residuals) - 1}, got {lags}"
        )
    if np.all(residuals == residuals[0]):
        raise NumericalError("(E) Ljung-Box test on constant residuals")

    table = diagnostic.acorr_ljungbox(residuals, lags=[lags], model_df=model_df)
    statistic = float(table["lb_stat"].iloc[0])
    p_value = float(table["lb_pvalue"].iloc[0])
    if not (np.isfinite(statistic) and np.isfinite(p_value)):
        raise NumericalError("(E) Ljung-Box statistic is not finite")
    return LjungBox(statistic=statistic, p_value=p_value, lags=lags)


@dataclass
class CandidateFit:
    spec: ArimaSpec
    model: ArimaModel | None = None
    error: str | None = None
    residual_check: LjungBox | None = None

    @property
    def aic(self) -> float:
        return self.model.aic if self.model is not None else np.inf

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.label(),
            "aic": self.model.aic if self.model is not None else None,
            "n_params": self.spec.n_params,
            "converged": self.model.converged if self.model is not None else None,
            "error": self.error,
            "ljung_box_statistic": self.residual_check.statistic if self.residual_check else None,
            "ljung_box_p_value": self.residual_check.p_value if self.residual_check else None,
        }


def select_order(
    ts: TimeSeries, candidates: Sequence[ArimaSpec], seed: int = 0
) -> list[CandidateFit]:
    """Fit every candidate and rank by AIC, ties going to fewer parameters.

    Each fitted candidate also gets a Ljung-Box check of its residuals. Failed
    candidates are kept at the end of the list with their reason.

    Raises:
        ValidationError: If there are no candidates.
        NumericalError: If every candidate fails.
    """
    if not candidates:
        raise ValidationError("(E) order selection needs at least one candidate")

    fits = []
    for spec in candidates:
        try:
            model = fit_sarima(ts, spec, seed=seed)
        except (DataError, NumericalError) as e:
            logger.warning("Skipping %s: %s", spec.label(), e)
            fits.append(CandidateFit(spec, error=str(e)))
            continue

        try:
            check = ljung_box(model)
        except (ValidationError, NumericalError) as e:
            logger.warning("No residual check for %s: %s", spec.label(), e)
            check = None
        else:
            if check.p_value < 0.05:
                logger.info(
                    "Residuals of %s are autocorrelated (Ljung-Box p = %.3g)",
                    spec.label(),
                    check.p_value,
                )
        fits.append(CandidateFit(spec, model=model, residual_check=check))

    ranked = sorted(
        (fit for fit in fits if fit.model is not None),
        key=lambda fit: (fit.aic, fit.spec.n_params),
    )
    failed = [fit for fit in fits if fit.model is None]
    if not ranked:
        reasons = "; ".join(f"{fit.spec.label()}: {fit.error}" for fit in failed)
        raise NumericalError(f"(E) every candidate failed: {reasons}")

    return ranked + failed
