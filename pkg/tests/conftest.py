"""Shared fixtures: the bundled airline series and models fitted on it."""

import numpy as np
import pytest

from config import BootstrapSettings, ExplainSettings, PipelineConfig
from explain import Background
from gbt import GbtHyperParams, fit_gbt
from pipeline import Pipeline
from sarima import ArimaSpec, fit_sarima
from series_core import load_csv
from supervise import build_feature_matrix, chronological_split, fit_standardizer


@pytest.fixture(scope="session")
def airline():
    return load_csv("builtin:airpassengers")


@pytest.fixture(scope="session")
def airline_features(airline):
    return build_feature_matrix(airline)


@pytest.fixture(scope="session")
def airline_split(airline_features):
    return chronological_split(airline_features, 24)


@pytest.fixture(scope="session")
def airline_train(airline_split):
    return airline_split[0]


@pytest.fixture(scope="session")
def airline_test(airline_split):
    return airline_split[1]


@pytest.fixture(scope="session")
def airline_standardizer(airline_train):
    return fit_standardizer(airline_train)


@pytest.fixture(scope="session")
def airline_gbt(airline_train):
    return fit_gbt(airline_train, GbtHyperParams())


@pytest.fixture(scope="session")
def airline_background(airline_train):
    return Background.global_mean(airline_train)


@pytest.fixture(scope="session")
def airline_sarima(airline):
    return fit_sarima(airline.window((1949, 1), (1958, 12)), ArimaSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def quick_config(tmp_path_factory):
    """A small but complete pipeline config for end-to-end runs."""
    return PipelineConfig(
        gbt=GbtHyperParams(n_trees=80, learning_rate=0.2),
        arima_candidates=((0, 1), (2, 2)),
        explain=ExplainSettings(m_permutations=10, lime_samples=400, importance_repeats=3),
        bootstrap=BootstrapSettings(n_resamples=50, n_stability=3, cv_folds=2),
        output_dir=str(tmp_path_factory.mktemp("report")),
    )


@pytest.fixture(scope="session")
def quick_pipeline(quick_config):
    return Pipeline(quick_config)


@pytest.fixture(scope="session")
def quick_bundle(quick_pipeline):
    return quick_pipeline.bundle()
