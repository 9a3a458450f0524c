#!/usr/bin/env python3
"""
Run configuration: one JSON file for the whole pipeline.

Precedence: built-in defaults < config file < FDX_SEED environment variable <
command-line flags. The master seed is handed down to every stage that does
not set its own seed explicitly.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

import pydantic
from pydantic import BaseModel, Field, model_validator

from .detectors import DetectorConfig
from .errors import ValidationError
from .evaluation import MetricConfig
from .features import DEFAULT_STRIDE, DEFAULT_WINDOW, TREND_ALPHA
from .fleet_sim import ScenarioSpec
from .models import ClassifierConfig
from .preprocess import FILL_HORIZON_STEPS
from .runtime import derive_seed
from .storage import PathLike, read_json

logger = logging.getLogger(__name__)

SEED_ENV = "FDX_SEED"
DEFAULT_SEED = 42

M = TypeVar("M", bound=BaseModel)


class PipelineConfig(BaseModel):
    """Preparation and feature-extraction parameters."""

    window: int = Field(DEFAULT_WINDOW, ge=4)
    stride: int = Field(DEFAULT_STRIDE, ge=1)
    fill_horizon: int = Field(FILL_HORIZON_STEPS, ge=0)
    alpha: float = Field(TREND_ALPHA, gt=0, lt=0.5)


def _default_classifiers() -> List[ClassifierConfig]:
    return [ClassifierConfig(kind="above_one"), ClassifierConfig(kind="mlp")]


class RunConfig(BaseModel):
    """Everything end_to_end needs; relative paths resolve against the config file."""

    seed: int = Field(DEFAULT_SEED, ge=0)
    scenario: str = "scenarios/table1.json"
    output_dir: str = "runs/quickstart"
    threads: Optional[int] = Field(None, ge=1)
    run_cv: bool = True
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    detectors: DetectorConfig = Field(default_factory=DetectorConfig)
    metrics: MetricConfig = Field(default_factory=MetricConfig)
    classifiers: List[ClassifierConfig] = Field(default_factory=_default_classifiers, min_length=1)

    @model_validator(mode="after")
    def _unique_names(self):
        labels = [c.label for c in self.classifiers]
        if len(set(labels)) != len(labels):
            raise ValueError(f"classifier names must be unique, got {labels}")
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        """
        Copy with a new master seed pushed down to every stage without its own seed.
        """
        metrics = self.metrics
        if "seed" not in metrics.model_fields_set:
            metrics = metrics.model_copy(update={"seed": derive_seed(seed, "metrics")})
        classifiers = [
            c if "seed" in c.model_fields_set else c.model_copy(update={"seed": derive_seed(seed, "classifier", c.label)})
            for c in self.classifiers
        ]
        return self.model_copy(update={"seed": seed, "metrics": metrics, "classifiers": classifiers})


def _format_errors(error: pydantic.ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def validate_model(model: Type[M], data: Any, source: str) -> M:
    """Validate data against a pydantic model, raising the project ValidationError."""
    try:
        return model.model_validate(data)
    except pydantic.ValidationError as e:
        raise ValidationError(f"Invalid {model.__name__} in {source}: {_format_errors(e)}") from e


def _read_config_json(path: PathLike, what: str) -> Any:
    if not Path(path).is_file():
        raise ValidationError(f"{what} file not found: {path}")
    return read_json(path)


def seed_from_env(environ: Optional[Dict[str, str]] = None) -> Optional[int]:
    value = (environ if environ is not None else os.environ).get(SEED_ENV)
    if value is None or value == "":
        return None
    try:
        seed = int(value)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be a non-negative integer, got '{value}'")
    if seed < 0:
        raise ValidationError(f"{SEED_ENV} must be a non-negative integer, got '{value}'")
    return seed


def load_run_config(
    path: Optional[PathLike] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    environ: Optional[Dict[str, str]] = None,
) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        path: JSON config file (defaults only when None)
        seed (int): --seed flag, overrides file and FDX_SEED
        threads (int): --threads flag

    Returns:
        RunConfig: validated configuration with the master seed pushed down
        and paths resolved against the config file's directory
    """
    data: Dict[str, Any] = {}
    if path is not None:
        data = _read_config_json(path, "Config")
        if not isinstance(data, dict):
            raise ValidationError(f"Config file {path} must hold a JSON object")
    config = validate_model(RunConfig, data, str(path or "defaults"))
    if path is not None:
        base = Path(path).resolve().parent
        config = config.model_copy(
            update={
                "scenario": str(_resolve(base, config.scenario)),
                "output_dir": str(_resolve(base, config.output_dir)),
            }
        )
    env_seed = seed_from_env(environ)
    master = seed if seed is not None else env_seed if env_seed is not None else config.seed
    if threads is not None:
        if threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {threads}")
        config = config.model_copy(update={"threads": threads})
    logger.debug(f"Run config from {path or 'defaults'} with master seed {master}")
    return config.with_seed(master)


def scenario_seed(
    path: Optional[PathLike] = None,
    seed: Optional[int] = None,
    environ: Optional[Dict[str, str]] = None,
) -> Optional[int]:
    """
    Seed override for a scenario simulated on its own.

    Args:
        path: run config JSON, or None
        seed (int): --seed flag
        environ: environment mapping (os.environ when None)

    Returns:
        int: --seed, else FDX_SEED, else a seed set in the config file;
        None keeps the scenario file's own seed
    """
    if seed is not None:
        return seed
    env_seed = seed_from_env(environ)
    if env_seed is not None:
        return env_seed
    if path is not None:
        data = _read_config_json(path, "Config")
        if isinstance(data, dict) and "seed" in data:
            return validate_model(RunConfig, data, str(path)).seed
    return None


def _resolve(base: Path, value: str) -> Path:
    candidate = Path(value)
    return candidate if candidate.is_absolute() else base / candidate


def load_scenario(path: PathLike, seed: Optional[int] = None) -> ScenarioSpec:
    """
    Load a scenario file.

    Args:
        path: scenario JSON
        seed (int): replaces the scenario's own seed when given

    Returns:
        ScenarioSpec: validated scenario
    """
    data = _read_config_json(path, "Scenario")
    if isinstance(data, dict) and seed is not None:
        data = {**data, "seed": seed}
    return validate_model(ScenarioSpec, data, str(path))
