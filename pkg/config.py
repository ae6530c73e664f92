"""Pipeline configuration loaded from a YAML document."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import yaml

from errors import ValidationError
from explain import BACKGROUND_MODES
from gbt import GbtHyperParams
from sarima import ArimaSpec
from series_core import find_file
from supervise import FeatureSpec

logger = logging.getLogger(__name__)

VERSION = "1.0.0"
DEFAULT_CONFIG = "config.yaml"
STAGES = ("gbt", "sarima", "permutation_shap", "lime", "importance", "bootstrap", "stability")


@dataclass(frozen=True)
class ExplainSettings:
    m_permutations: int = 50
    lime_samples: int = 5000
    kernel_factors: tuple[float, ...] = (0.5, 0.75, 1.0)
    background: str = "global_mean"
    importance_repeats: int = 10
    explain_month: tuple[int, int] = (1959, 7)

    def __post_init__(self):
        object.__setattr__(self, "kernel_factors", tuple(float(f) for f in self.kernel_factors))
        object.__setattr__(self, "explain_month", tuple(self.explain_month))
        if self.m_permutations < 1:
            raise ValidationError(f"(E) m_permutations must be >= 1, got {self.m_permutations}")
        if self.lime_samples < 2:
            raise ValidationError(f"(E) lime_samples must be >= 2, got {self.lime_samples}")
        if not self.kernel_factors or min(self.kernel_factors) <= 0:
            raise ValidationError("(E) kernel_factors must be a non-empty list of positive numbers")
        if self.background not in BACKGROUND_MODES[:3]:
            raise ValidationError(
                f"(E) background must be one of {BACKGROUND_MODES[:3]}, got '{self.background}'"
            )
        if self.importance_repeats < 1:
            raise ValidationError("(E) importance_repeats must be >= 1")


@dataclass(frozen=True)
class BootstrapSettings:
    block_length: int = 12
    n_resamples: int = 1000
    alpha: float = 0.05
    n_stability: int = 20
    stability_modes: tuple[str, ...] = ("global_mean", "seasonal_month_mean")
    cv_folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "stability_modes", tuple(self.stability_modes))
        if self.block_length < 1 or self.n_resamples < 1:
            raise ValidationError("(E) block_length and n_resamples must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"(E) alpha must be in (0, 1), got {self.alpha}")
        if self.n_stability < 2:
            raise ValidationError(f"(E) n_stability must be >= 2, got {self.n_stability}")
        unknown = set(self.stability_modes) - set(BACKGROUND_MODES[:3])
        if not self.stability_modes or unknown:
            raise ValidationError(f"(E) invalid stability_modes {list(self.stability_modes)}")
        if self.cv_folds < 1:
            raise ValidationError(f"(E) cv_folds must be >= 1, got {self.cv_folds}")


@dataclass(frozen=True)
class PipelineConfig:
    input: str = "builtin:airpassengers"
    features: FeatureSpec = field(default_factory=FeatureSpec)
    test_months: int = 24
    gbt: GbtHyperParams = field(default_factory=GbtHyperParams)
    arima: ArimaSpec = field(default_factory=ArimaSpec)
    arima_candidates: tuple[tuple[int, int], ...] = (
        (0, 1), (1, 0), (1, 1), (2, 1), (1, 2), (2, 2),
    )
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    bootstrap: BootstrapSettings = field(default_factory=BootstrapSettings)
    output_dir: str = "report"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "arima_candidates", tuple(tuple(c) for c in self.arima_candidates)
        )
        if self.test_months < 1:
            raise ValidationError(f"(E) test_months must be >= 1, got {self.test_months}")
        if self.seed < 0:
            raise ValidationError(f"(E) seed must be non-negative, got {self.seed}")
        for candidate in self.arima_candidates:
            if len(candidate) != 2:
                raise ValidationError(f"(E) ARIMA candidates are (p, q) pairs, got {candidate}")

    def to_dict(self) -> dict:
        document = asdict(self)
        # JSON keys must be strings
        document["features"]["rolling_windows"] = {
            str(w): list(s) for w, s in self.features.rolling_windows.items()
        }
        return document

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the resolved config."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def candidate_specs(self) -> list[ArimaSpec]:
        """Order-selection grid: the configured spec with (p, q) swapped in."""
        specs = [replace(self.arima, p=p, q=q) for p, q in self.arima_candidates]
        if self.arima not in specs:
            specs.insert(0, self.arima)
        return specs

    def stage_seed(self, stage: str) -> int:
        """Seed for one pipeline stage, derived from the master seed."""
        if stage not in STAGES:
            raise ValidationError(f"(E) unknown stage '{stage}'")
        sequence = np.random.SeedSequence([self.seed, STAGES.index(stage)])
        return int(sequence.generate_state(1)[0])


def _build(cls, document: Any, section: str):
    """Instantiate a settings dataclass, rejecting unknown keys."""
    if document is None:
        return cls()
    if not isinstance(document, dict):
        raise ValidationError(f"(E) section '{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(document) - known
    if unknown:
        raise ValidationError(f"(E) unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**document)
    except TypeError as e:
        raise ValidationError(f"(E) invalid '{section}' section: {e}") from e


def config_from_dict(document: dict | None) -> PipelineConfig:
    """Build a config from a parsed document; missing keys take their defaults.

    Raises:
        ValidationError: For unknown keys or out-of-range values.
    """
    if document is not None and not isinstance(document, dict):
        raise ValidationError("(E) a config document must be a mapping")
    document = dict(document or {})
    sections = {
        "features": FeatureSpec,
        "gbt": GbtHyperParams,
        "arima": ArimaSpec,
        "explain": ExplainSettings,
        "bootstrap": BootstrapSettings,
    }
    for name, cls in sections.items():
        if name in document:
            section = document[name]
            if name == "features" and isinstance(section, dict) and "rolling_windows" in section:
                section = dict(section)
                section["rolling_windows"] = {
                    int(w): tuple(s) for w, s in section["rolling_windows"].items()
                }
            document[name] = _build(cls, section, name)
    return _build(PipelineConfig, document, "config")


def load_config(path: str | None = None, **overrides) -> PipelineConfig:
    """Load a YAML config, then apply non-None keyword overrides (e.g. seed, output_dir).

    Without a path the shipped config.yaml is used.

    Raises:
        ValidationError: If the file cannot be read or parsed, or holds invalid values.
    """
    try:
        if path is None:
            path = find_file(DEFAULT_CONFIG)
        with open(path, encoding="utf-8") as config_file:
            document = yaml.safe_load(config_file)
    except OSError as e:
        raise ValidationError(f"(E) cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ValidationError(f"(E) cannot parse config {path}: {e}") from e

    config = config_from_dict(document)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = replace(config, **overrides)
    logger.debug("Loaded config %s (hash %s)", path, config.config_hash()[:12])
    return config
