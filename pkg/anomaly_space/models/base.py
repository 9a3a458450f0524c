#!/usr/bin/env python3
"""
Classifier configuration and the abstract estimator interface.

Every classifier maps the 6-feature Anomaly-Space row layout to the three
class codes (0 Normal, 1 BearingFault, 2 SensorFault). Implementations live in
above_one.py, trees.py and mlp.py; ClassifierModel in classifier.py wraps one
of them together with its column layout and configuration.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from ..domain import CLASS_CODES
from ..errors import ValidationError
from ..features import FEATURE_COLUMNS

ClassifierKind = Literal["above_one", "random_forest", "gbm", "mlp"]
N_CLASSES = len(CLASS_CODES)


class MLPParams(BaseModel):
    """Multilayer perceptron hyperparameters (one hidden layer of 5 ReLU units by default)."""

    hidden_layers: List[int] = Field(default_factory=lambda: [5])
    activation: Literal["relu"] = "relu"
    optimizer: Literal["adam"] = "adam"
    learning_rate: float = Field(0.001, gt=0)
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(64, ge=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    scale_variance: bool = Field(True, description="Min-max scale the variance columns as well as the base scores")

    @field_validator("hidden_layers")
    @classmethod
    def _layer_sizes(cls, value: List[int]) -> List[int]:
        if not value or any(size < 1 for size in value):
            raise ValueError(f"hidden layer sizes must be >= 1, got {value}")
        return value


class ForestParams(BaseModel):
    n_trees: int = Field(100, ge=1)
    max_depth: Optional[int] = Field(None, ge=1)
    min_samples_split: int = Field(2, ge=2)
    max_features: int = Field(2, ge=1, le=len(FEATURE_COLUMNS))
    bootstrap: bool = True


class GBMParams(BaseModel):
    n_rounds: int = Field(100, ge=0)
    learning_rate: float = Field(0.1, gt=0)
    max_leaves: int = Field(31, ge=2)
    min_samples_leaf: int = Field(20, ge=1)
    max_bins: int = Field(64, ge=2, le=255)
    lambda_l2: float = Field(0.0, ge=0)
    min_hessian: float = Field(1e-3, ge=0)


class ClassifierConfig(BaseModel):
    """
    Configuration of one classifier.

    Only the parameter block of the configured kind is used; all blocks are
    echoed into the model file.
    """

    kind: ClassifierKind
    name: Optional[str] = None
    seed: int = 0
    class_weights: List[float] = Field(default_factory=lambda: [1.0] * N_CLASSES)
    mlp: MLPParams = Field(default_factory=MLPParams)
    random_forest: ForestParams = Field(default_factory=ForestParams)
    gbm: GBMParams = Field(default_factory=GBMParams)

    @field_validator("class_weights")
    @classmethod
    def _weights(cls, value: List[float]) -> List[float]:
        if len(value) != N_CLASSES or any(not w > 0 for w in value):
            raise ValueError(f"class_weights needs {N_CLASSES} positive values, got {value}")
        return value

    @property
    def label(self) -> str:
        return self.name or self.kind


class ClassifierInterface(ABC):
    """Abstract interface for classifier implementations."""

    kind: str = ""
    learned: bool = True

    @abstractmethod
    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, threads: Optional[int] = None) -> None:
        """Fit on a (n, 6) raw feature matrix and class codes."""
        pass

    @abstractmethod
    def scores(self, X: np.ndarray) -> np.ndarray:
        """Per-class scores, shape (n, 3); the prediction is their argmax."""
        pass

    @abstractmethod
    def parameters(self) -> Dict[str, Any]:
        """JSON-serializable fitted parameters."""
        pass

    @abstractmethod
    def load_parameters(self, params: Dict[str, Any]) -> None:
        """Restore fitted parameters written by parameters()."""
        pass

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, so ties go to the lowest class code
        return np.argmax(self.scores(X), axis=1).astype(np.int64)


def feature_matrix(rows: Any, columns: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
    """
    Raw feature matrix in the model column order.

    Args:
        rows: DataFrame with the feature columns, or an (n, 6) array already
            laid out in column order

    Returns:
        np.ndarray: float64 matrix of shape (n, len(columns))
    """
    if isinstance(rows, pd.DataFrame):
        missing = [c for c in columns if c not in rows.columns]
        if missing:
            raise ValidationError(f"Feature rows are missing columns {missing}")
        X = rows[list(columns)].to_numpy(dtype=np.float64)
    else:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != len(columns):
            raise ValidationError(f"Expected feature rows with {len(columns)} columns {list(columns)}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("Feature rows contain NaN or infinite values")
    return X


def label_vector(rows: pd.DataFrame) -> np.ndarray:
    if "label" not in rows.columns:
        raise ValidationError("Training rows need a label column")
    y = rows["label"].to_numpy(dtype=np.int64)
    unknown = sorted(set(np.unique(y).tolist()) - set(CLASS_CODES))
    if unknown:
        raise ValidationError(f"Unknown class codes {unknown}")
    return y


def one_hot(y: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    out = np.zeros((y.size, n_classes), dtype=np.float64)
    out[np.arange(y.size), y] = 1.0
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)
