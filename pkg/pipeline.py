"""End-to-end run: every stage is computed lazily, once, from one config.

Stages are cached properties, so a CLI subcommand only pays for the stages it
touches. Any error raised inside a stage is re-raised as a StageError carrying
the stage name and the original exit code.
"""

import functools
import json
import logging
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import jsonschema
import numpy as np

from config import VERSION, PipelineConfig
from errors import NumericalError, StageError, ValidationError
from eval_stats import block_bootstrap_ci, dm_test, metrics, pearson
from explain import (
    Attribution,
    attributions_to_json,
    background_for,
    dependence_data,
    explanation_stability,
    kernel_width_sweep,
    permutation_importance,
    permutation_shap,
    shap_global_summary,
    tree_shap,
)
from gbt import cross_validate, fit_gbt
from math_utils import add_months
from sarima import forecast, select_order
from series_core import (
    acf,
    descriptive_stats,
    difference,
    find_file,
    lag_correlations,
    load_csv,
    log_transform,
    pacf,
)
from supervise import (
    build_feature_matrix,
    chronological_split,
    expanding_cv_folds,
    fit_standardizer,
)

logger = logging.getLogger(__name__)

SCHEMA_FILE = "report_schema.json"
BUNDLE_FILE = "bundle.json"
MANIFEST_FILE = "manifest.json"
MAX_LAG = 12
ACF_LAGS = 24


def _iso(time: tuple[int, int]) -> str:
    return f"{time[0]:04d}-{time[1]:02d}"


def stage(name: str):
    """Cache a pipeline stage and label any error it raises."""

    def decorator(method):
        @functools.wraps(method)
        def wrapper(self):
            logger.debug("Stage %s", name)
            try:
                return method(self)
            except StageError:
                raise
            except Exception as e:
                raise StageError(name, e) from e

        return functools.cached_property(wrapper)

    return decorator


@dataclass(frozen=True, eq=False)
class ReportBundle:
    """Every reported number, as a JSON-ready document."""

    data: dict

    def to_json(self) -> str:
        """Canonical text: sorted keys, fixed indentation, no NaN or infinity.

        Raises:
            NumericalError: If a value is not finite.
        """
        try:
            return json.dumps(self.data, sort_keys=True, indent=2, allow_nan=False) + "\n"
        except ValueError as e:
            raise NumericalError(f"(E) bundle holds a non-finite number: {e}") from e

    def validate(self):
        """Check the bundle against the shipped JSON schema.

        Raises:
            ValidationError: Naming the first violation.
        """
        with open(find_file(SCHEMA_FILE), encoding="utf-8") as schema_file:
            schema = json.load(schema_file)
        try:
            jsonschema.validate(json.loads(self.to_json()), schema)
        except jsonschema.ValidationError as e:
            location = "/".join(str(part) for part in e.absolute_path)
            raise ValidationError(f"(E) bundle violates schema at '{location}': {e.message}") from e

    def write(self, outdir: str) -> str:
        """Validate and write bundle.json. Returns the file path."""
        self.validate()
        os.makedirs(outdir, exist_ok=True)
        path = os.path.join(outdir, BUNDLE_FILE)
        with open(path, "w", encoding="utf-8", newline="\n") as bundle_file:
            bundle_file.write(self.to_json())
        logger.info("Wrote %s", path)
        return path


def write_manifest(outdir: str, files: list[str], omitted: dict[str, str]) -> str:
    """List emitted files and omitted figures. The timestamp lives only here."""
    manifest = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": VERSION,
        "files": sorted(os.path.basename(f) for f in files),
        "omitted": dict(sorted(omitted.items())),
    }
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, MANIFEST_FILE)
    with open(path, "w", encoding="utf-8", newline="\n") as manifest_file:
        json.dump(manifest, manifest_file, sort_keys=True, indent=2)
        manifest_file.write("\n")
    return path


class Pipeline:
    """Load, featurize, fit, forecast, evaluate and explain, as configured."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    #
    # Data
    #

    @stage("load")
    def series(self):
        return load_csv(self.config.input)

    @stage("featurize")
    def features(self):
        return build_feature_matrix(self.series, self.config.features)

    @stage("split")
    def split(self):
        return chronological_split(self.features, self.config.test_months)

    @property
    def train(self):
        return self.split[0]

    @property
    def test(self):
        return self.split[1]

    @stage("standardize")
    def standardizer(self):
        return fit_standardizer(self.train)

    @stage("split")
    def training_series(self):
        """The raw series up to the month before the first test row."""
        last = add_months(*self.test.times[0], -1)
        return self.series.window(self.series.start, last)

    #
    # Models
    #

    @property
    def gbt_params(self):
        return replace(self.config.gbt, seed=self.config.stage_seed("gbt"))

    @stage("fit_gbt")
    def gbt_model(self):
        return fit_gbt(self.train, self.gbt_params)

    @stage("cross_validate")
    def cv_scores(self):
        folds = expanding_cv_folds(len(self.train), self.config.bootstrap.cv_folds)
        return cross_validate(self.train, self.gbt_params, folds)

    @stage("order_selection")
    def order_selection(self):
        return select_order(
            self.training_series, self.config.candidate_specs(), self.config.stage_seed("sarima")
        )

    @stage("fit_sarima")
    def arima_model(self):
        for candidate in self.order_selection:
            if candidate.spec == self.config.arima:
                if candidate.model is None:
                    raise NumericalError(
                        f"(E) configured order {candidate.spec.label()} failed: {candidate.error}"
                    )
                return candidate.model
        raise ValidationError("(E) configured ARIMA order missing from the candidate grid")

    #
    # Forecasts and evaluation
    #

    @stage("forecast")
    def forecasts(self) -> dict[str, np.ndarray]:
        return {
            "gbt": self.gbt_model.predict_batch(self.test),
            "sarima": forecast(self.arima_model, len(self.test)),
        }

    @stage("evaluate")
    def evaluation(self) -> dict:
        y = self.test.target
        settings = self.config.bootstrap
        seed = self.config.stage_seed("bootstrap")
        per_model = {}
        for name, yhat in self.forecasts.items():
            per_model[name] = {
                "point": metrics(y, yhat).as_dict(),
                **{
                    f"{metric}_ci": block_bootstrap_ci(
                        y,
                        yhat,
                        metric=metric,
                        block_length=min(settings.block_length, len(y)),
                        n_resamples=settings.n_resamples,
                        alpha=settings.alpha,
                        seed=seed,
                    ).as_dict()
                    for metric in ("rmse", "mape")
                },
            }
        dm = dm_test(y - self.forecasts["sarima"], y - self.forecasts["gbt"])
        return {"metrics": per_model, "diebold_mariano": dm.as_dict()}

    #
    # Explanations
    #

    def background(self, month: int):
        return background_for(self.config.explain.background, self.train, month)

    @stage("tree_shap")
    def tree_attributions(self) -> list[Attribution]:
        return [
            tree_shap(self.gbt_model, row, self.background(month), time=time)
            for row, month, time in zip(self.test.rows, self.test.months(), self.test.times)
        ]

    @stage("permutation_shap")
    def permutation_attributions(self) -> list[Attribution]:
        seed = self.config.stage_seed("permutation_shap")
        return [
            permutation_shap(
                self.gbt_model.predict_batch,
                row,
                self.background(month),
                m_permutations=self.config.explain.m_permutations,
                seed=[seed, i],
                features=self.test.columns,
                time=time,
            )
            for i, (row, month, time) in enumerate(
                zip(self.test.rows, self.test.months(), self.test.times)
            )
        ]

    @stage("lime")
    def lime_sweep(self):
        return kernel_width_sweep(
            self.gbt_model.predict_batch,
            self.test,
            self.train,
            self.standardizer,
            self.config.explain.kernel_factors,
            n_samples=self.config.explain.lime_samples,
            seed=self.config.stage_seed("lime"),
        )

    @stage("permutation_importance")
    def importance(self):
        return permutation_importance(
            self.gbt_model.predict_batch,
            self.test,
            n_repeats=self.config.explain.importance_repeats,
            seed=self.config.stage_seed("importance"),
        )

    @stage("stability")
    def stability(self):
        settings = self.config.bootstrap
        params = self.gbt_params
        return explanation_stability(
            lambda resampled: fit_gbt(resampled, params),
            self.train,
            self.test,
            modes=settings.stability_modes,
            n_bootstrap=settings.n_stability,
            block_length=min(settings.block_length, len(self.train)),
            seed=self.config.stage_seed("stability"),
        )

    @property
    def explain_index(self) -> int:
        """Test row of the configured month, or the middle test row if absent."""
        month = self.config.explain.explain_month
        if month in self.test.times:
            return self.test.index_of(month)
        middle = len(self.test) // 2
        logger.warning(
            "Explain month %s is not in the test window, using %s",
            _iso(month),
            _iso(self.test.times[middle]),
        )
        return middle

    #
    # Report sections
    #

    @stage("autocorrelation")
    def autocorrelation(self) -> dict:
        """ACF and PACF of the training series as the SARIMA model sees it."""
        spec = self.config.arima
        series = log_transform(self.training_series) if spec.use_log else self.training_series
        w = difference(series, spec.d, spec.D, spec.s)
        lags = min(ACF_LAGS, len(w) // 2 - 1)
        return {
            "lags": list(range(lags + 1)),
            "acf": acf(w, lags).tolist(),
            "pacf": pacf(w, lags).tolist(),
        }

    def stats_section(self) -> dict:
        levels = lag_correlations(self.series, MAX_LAG)
        differenced = lag_correlations(self.series, MAX_LAG, detrend=True)
        return {
            "autocorrelation": self.autocorrelation,
            "descriptive_stats": {
                "full": descriptive_stats(self.series).as_dict(),
                "training": descriptive_stats(self.training_series).as_dict(),
            },
            "lag_correlations": {
                "levels": [{"lag": k, "correlation": r} for k, r in levels],
                "differenced": [{"lag": k, "correlation": r} for k, r in differenced],
            },
        }

    def model_section(self) -> dict:
        arima = self.arima_model
        return {
            "gbt": {
                "n_trees": len(self.gbt_model.trees),
                "final_training_rmse": self.gbt_model.training_rmse[-1]
                if self.gbt_model.training_rmse
                else 0.0,
                "cv_rmse": [float(s) for s in self.cv_scores],
                "cv_mean_rmse": float(np.mean(self.cv_scores)),
            },
            "arima": {
                "spec": arima.spec.label(),
                **arima.coefficients(),
                "sigma2": arima.sigma2,
                "aic": arima.aic,
                "converged": arima.converged,
            },
            "order_selection": [candidate.as_dict() for candidate in self.order_selection],
        }

    def forecast_section(self) -> dict:
        return {
            "forecasts": {
                "dates": [_iso(t) for t in self.test.times],
                "actual": self.test.target.tolist(),
                **{name: yhat.tolist() for name, yhat in self.forecasts.items()},
            }
        }

    def explain_section(self) -> dict:
        tree = self.tree_attributions
        permutation = self.permutation_attributions
        columns = self.test.columns
        feature = shap_global_summary(tree)[0][0]
        color = "lag_1" if "lag_1" in columns else feature

        index = self.explain_index
        sweep = self.lime_sweep
        return {
            "shap": {
                "background": self.config.explain.background,
                "tree_ranking": _ranking(shap_global_summary(tree)),
                "permutation_ranking": _ranking(shap_global_summary(permutation)),
                "tree_vs_permutation_pearson": pearson(
                    np.concatenate([a.phi for a in tree]),
                    np.concatenate([a.phi for a in permutation]),
                ),
                "max_local_accuracy_gap": max(
                    a.local_accuracy_gap for a in [*tree, *permutation]
                ),
                "attributions": {
                    "tree": attributions_to_json(tree),
                    "permutation": attributions_to_json(permutation),
                },
            },
            "dependence": {
                "feature": feature,
                "color_feature": color,
                "points": [
                    {"value": v, "phi": phi, "color": c}
                    for v, phi, c in dependence_data(tree, self.test, feature, color)
                ],
            },
            "lime": {
                "month": _iso(self.test.times[index]),
                "explanations": {
                    str(factor): found[index].as_dict()
                    for factor, found in sweep.explanations.items()
                },
                "sweep": sweep.as_dict(),
            },
            "permutation_importance": [entry.as_dict() for entry in self.importance],
        }

    def stability_section(self) -> dict:
        return {"stability": {mode: r.as_dict() for mode, r in self.stability.items()}}

    def provenance(self) -> dict:
        return {
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "version": VERSION,
            "config": self.config.to_dict(),
        }

    def bundle(self) -> ReportBundle:
        data = {
            "provenance": self.provenance(),
            "series": {
                "dates": [_iso(t) for t in self.series.months()],
                "values": self.series.values.tolist(),
            },
            **self.stats_section(),
            **self.model_section(),
            **self.forecast_section(),
            **self.evaluation,
            **self.explain_section(),
            **self.stability_section(),
        }
        return ReportBundle(data)


def _ranking(summary: list[tuple[str, float]]) -> list[dict]:
    return [{"feature": f, "mean_abs_phi": v} for f, v in summary]


def run_pipeline(config: PipelineConfig, outdir: str | None = None) -> ReportBundle:
    """Run every stage and write the validated bundle to the output directory.

    Raises:
        StageError: Wrapping the first failure, labelled with its stage.
    """
    bundle = Pipeline(config).bundle()
    bundle.write(outdir or config.output_dir)
    return bundle
