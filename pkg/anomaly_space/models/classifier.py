#!/usr/bin/env python3
"""
Trained classifier wrapper, train/predict entry points and the model file.

Model file (JSON):
    {"magic": "fdx-model", "version": 1, "kind": ..., "config": {...},
     "feature_columns": [...], "class_codes": [0, 1, 2], "parameters": {...}}
Trees are stored as node lists {feature, threshold, left, right, leaf_value};
MLP weights as nested arrays.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import pydantic

from ..domain import CLASS_CODES, FaultClass
from ..errors import ModelFormatError, ValidationError
from ..features import FEATURE_COLUMNS
from ..storage import PathLike, atomic_write_text
from .above_one import AboveOneClassifier
from .base import ClassifierConfig, ClassifierInterface, feature_matrix, label_vector
from .mlp import MLPClassifier
from .trees import GradientBoostingClassifier, RandomForestClassifier

logger = logging.getLogger(__name__)

MODEL_MAGIC = "fdx-model"
FORMAT_VERSION = 1


def create_estimator(config: ClassifierConfig) -> ClassifierInterface:
    """Unfitted estimator for a classifier configuration."""
    if config.kind == "above_one":
        return AboveOneClassifier()
    if config.kind == "random_forest":
        return RandomForestClassifier(config.random_forest, config.seed)
    if config.kind == "gbm":
        return GradientBoostingClassifier(config.gbm, config.seed)
    if config.kind == "mlp":
        return MLPClassifier(config.mlp, config.seed)
    raise ValidationError(f"Unsupported classifier kind: {config.kind}")


@dataclass
class ClassifierModel:
    """A fitted classifier bound to the feature layout it was trained on."""

    config: ClassifierConfig
    estimator: ClassifierInterface
    feature_columns: List[str] = field(default_factory=lambda: list(FEATURE_COLUMNS))
    class_codes: List[int] = field(default_factory=lambda: list(CLASS_CODES))
    format_version: int = FORMAT_VERSION

    @property
    def kind(self) -> str:
        return self.config.kind

    def predict_scores(self, rows: Any) -> np.ndarray:
        """Per-class scores, shape (n, 3), columns in class-code order."""
        return self.estimator.scores(feature_matrix(rows, self.feature_columns))

    def predict(self, rows: Any) -> np.ndarray:
        """Class code per row."""
        return self.estimator.predict(feature_matrix(rows, self.feature_columns))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "magic": MODEL_MAGIC,
            "version": self.format_version,
            "kind": self.kind,
            "config": self.config.model_dump(mode="json"),
            "feature_columns": list(self.feature_columns),
            "class_codes": list(self.class_codes),
            "parameters": self.estimator.parameters(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassifierModel":
        if not isinstance(data, dict) or data.get("magic") != MODEL_MAGIC:
            raise ModelFormatError(f"Not a model file (magic {data.get('magic') if isinstance(data, dict) else None!r})")
        version = data.get("version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"Unsupported model format version {version} (expected {FORMAT_VERSION})")
        try:
            config = ClassifierConfig.model_validate(data["config"])
            if data["kind"] != config.kind:
                raise ModelFormatError(f"Model kind {data['kind']} does not match its config ({config.kind})")
            if list(data["feature_columns"]) != list(FEATURE_COLUMNS):
                raise ModelFormatError(f"Unsupported feature layout {data['feature_columns']}")
            if list(data["class_codes"]) != list(CLASS_CODES):
                raise ModelFormatError(f"Unsupported class codes {data['class_codes']}")
            estimator = create_estimator(config)
            estimator.load_parameters(data["parameters"])
        except (KeyError, TypeError, ValueError, IndexError, pydantic.ValidationError) as e:
            raise ModelFormatError(f"Corrupt model file: {e}") from e
        return cls(config, estimator, list(data["feature_columns"]), list(data["class_codes"]), version)


def train(config: ClassifierConfig, rows: pd.DataFrame, threads: Optional[int] = None) -> ClassifierModel:
    """
    Train a classifier on labeled feature rows.

    Args:
        config: classifier configuration
        rows: feature table with the 6 feature columns and label
        threads (int): worker threads (trees only)

    Returns:
        ClassifierModel: fitted model; a pure function of (config, rows)
    """
    X = feature_matrix(rows)
    y = label_vector(rows)
    estimator = create_estimator(config)
    if estimator.learned:
        missing = [FaultClass(c).display_name for c in CLASS_CODES if not np.any(y == c)]
        if missing:
            raise ValidationError(f"Training rows for {config.label} have no samples of {', '.join(missing)}")
    sample_weight = np.asarray(config.class_weights, dtype=np.float64)[y]
    logger.info(f"Training {config.label} on {len(y)} rows (class counts {np.bincount(y, minlength=3).tolist()})")
    estimator.fit(X, y, sample_weight, threads)
    return ClassifierModel(config, estimator)


def predict(model: ClassifierModel, rows: Any) -> np.ndarray:
    return model.predict(rows)


def predict_scores(model: ClassifierModel, rows: Any) -> np.ndarray:
    return model.predict_scores(rows)


def model_to_json(model: ClassifierModel) -> str:
    return json.dumps(model.to_dict(), separators=(",", ":")) + "\n"


def save_model(model: ClassifierModel, path: PathLike) -> None:
    """Write a model file atomically."""
    atomic_write_text(path, model_to_json(model))
    logger.info(f"Saved {model.kind} model to {path}")


def load_model(path: PathLike) -> ClassifierModel:
    """
    Read a model file.

    Raises:
        ModelFormatError: unreadable, truncated, wrong magic or version
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFormatError(f"Cannot read model file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"Corrupt model file {path}: {e}") from e
    return ClassifierModel.from_dict(data)
