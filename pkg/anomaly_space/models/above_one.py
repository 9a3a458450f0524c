#!/usr/bin/env python3
"""
Above-One baseline: detector scores above 1.0 map straight to their fault class.
"""

from typing import Any, Dict, Optional

import numpy as np

from ..domain import FaultClass
from ..features import FEATURE_COLUMNS
from .base import ClassifierInterface, one_hot

BBCV_COLUMN = FEATURE_COLUMNS.index("bbcv_base")
TUPLET_COLUMN = FEATURE_COLUMNS.index("tuplet_base")


def above_one_predict(bbcv_base: float, tuplet_base: float) -> FaultClass:
    """
    Classify one row from its two base scores.

    Args:
        bbcv_base (float): bearing detector score
        tuplet_base (float): sensor detector score

    Returns:
        FaultClass: BearingFault if only bbcv exceeds 1.0, SensorFault if only
        tuplet does, the larger score's class if both do (exact tie:
        BearingFault), Normal otherwise
    """
    return FaultClass(int(above_one_codes(np.array([bbcv_base]), np.array([tuplet_base]))[0]))


def above_one_codes(bbcv: np.ndarray, tuplet: np.ndarray) -> np.ndarray:
    bbcv = np.asarray(bbcv, dtype=np.float64)
    tuplet = np.asarray(tuplet, dtype=np.float64)
    codes = np.full(bbcv.shape, int(FaultClass.NORMAL), dtype=np.int64)
    bearing = bbcv > 1.0
    sensor = tuplet > 1.0
    codes[bearing & ~sensor] = int(FaultClass.BEARING_FAULT)
    codes[sensor & ~bearing] = int(FaultClass.SENSOR_FAULT)
    both = bearing & sensor
    codes[both] = np.where(tuplet[both] > bbcv[both], int(FaultClass.SENSOR_FAULT), int(FaultClass.BEARING_FAULT))
    return codes


class AboveOneClassifier(ClassifierInterface):
    """Rule classifier with no fitted parameters."""

    kind = "above_one"
    learned = False

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, threads: Optional[int] = None) -> None:
        pass

    def scores(self, X: np.ndarray) -> np.ndarray:
        return one_hot(above_one_codes(X[:, BBCV_COLUMN], X[:, TUPLET_COLUMN]))

    def parameters(self) -> Dict[str, Any]:
        return {}

    def load_parameters(self, params: Dict[str, Any]) -> None:
        pass
