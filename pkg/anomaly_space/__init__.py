#!/usr/bin/env python3
"""
Anomaly-Space fault diagnosis for wind turbine fleets.

This package contains modules for:
- domain.py: entities, anomaly records, fault frames and dataset splits
- storage.py: CSV/JSON artifact formats with atomic writes
- fleet_sim.py: synthetic fleets with injected bearing and sensor faults
- detectors.py: simplified tuplet and bbcv detectors
- preprocess.py: operating-mode filter, forward fill, labels, bbcv column choice
- features.py: windowed Mann-Kendall trend certainty, variance, min-max scaling
- models/: Above-One, random forest, gradient boosting and MLP classifiers
- evaluation.py: metrics, cross-validation and transfer evaluation
- config.py: the run configuration
"""

from .domain import AnomalyRecord, DatasetSplit, Detector, EntityId, FaultClass, FaultFrame
from .errors import DataFormatError, FaultDiagnosisError, ModelFormatError, StageError, ValidationError
from .evaluation import EvaluationReport, MetricConfig, cross_validate, f_beta, transfer_evaluate
from .features import mann_kendall, window_features
from .fleet_sim import ScenarioSpec, generate_fleet
from .models import ClassifierConfig, ClassifierModel, load_model, save_model, train
from .preprocess import build_base_table

__all__ = [
    'AnomalyRecord',
    'DatasetSplit',
    'Detector',
    'EntityId',
    'FaultClass',
    'FaultFrame',
    'DataFormatError',
    'FaultDiagnosisError',
    'ModelFormatError',
    'StageError',
    'ValidationError',
    'EvaluationReport',
    'MetricConfig',
    'cross_validate',
    'f_beta',
    'transfer_evaluate',
    'mann_kendall',
    'window_features',
    'ScenarioSpec',
    'generate_fleet',
    'ClassifierConfig',
    'ClassifierModel',
    'load_model',
    'save_model',
    'train',
    'build_base_table',
]
