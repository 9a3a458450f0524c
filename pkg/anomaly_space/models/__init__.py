#!/usr/bin/env python3
"""
Classifier package for Anomaly-Space fault diagnosis.

This package contains modules for:
- base.py: classifier configuration and the abstract estimator interface
- above_one.py: the Above-One rule baseline
- trees.py: random forest and histogram gradient boosting
- mlp.py: multilayer perceptron trained with Adam
- classifier.py: trained model wrapper and versioned model files
"""

from .above_one import AboveOneClassifier, above_one_predict
from .base import ClassifierConfig, ClassifierInterface, ForestParams, GBMParams, MLPParams
from .classifier import ClassifierModel, create_estimator, load_model, predict, predict_scores, save_model, train
from .mlp import MLPClassifier, mlp_loss_and_gradients
from .trees import GradientBoostingClassifier, RandomForestClassifier

__all__ = [
    'AboveOneClassifier',
    'above_one_predict',
    'ClassifierConfig',
    'ClassifierInterface',
    'ForestParams',
    'GBMParams',
    'MLPParams',
    'ClassifierModel',
    'create_estimator',
    'load_model',
    'predict',
    'predict_scores',
    'save_model',
    'train',
    'MLPClassifier',
    'mlp_loss_and_gradients',
    'GradientBoostingClassifier',
    'RandomForestClassifier',
]
