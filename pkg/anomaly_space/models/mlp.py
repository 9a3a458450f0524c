#!/usr/bin/env python3
"""
Multilayer perceptron classifier (6 inputs, ReLU hidden layers, 3-way softmax).

Trained on min-max scaled features with Adam mini-batches on the
(class-weighted) mean softmax cross-entropy. The scaler is fitted on the
training rows and stored inside the model. The base scores are always
scaled; scaling the variance columns follows `MLPParams.scale_variance`.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import ValidationError
from ..features import BASE_ONLY_SCALED_COLUMNS, FEATURE_COLUMNS, SCALED_COLUMNS, MinMaxScaler, fit_minmax
from ..runtime import substream
from .base import N_CLASSES, ClassifierInterface, MLPParams, one_hot, softmax

logger = logging.getLogger(__name__)

Weights = List[np.ndarray]


def layer_sizes(n_inputs: int, hidden_layers: Sequence[int], n_outputs: int = N_CLASSES) -> List[int]:
    return [n_inputs, *hidden_layers, n_outputs]


def init_weights(sizes: Sequence[int], rng: np.random.Generator) -> Weights:
    """Glorot-uniform weight matrices and zero biases, as [W1, b1, W2, b2, ...]."""
    weights: Weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        weights.append(np.zeros(fan_out))
    return weights


def _forward(weights: Weights, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    activations = [X]
    pre_activations = []
    a = X
    for i in range(0, len(weights) - 2, 2):
        z = a @ weights[i] + weights[i + 1]
        pre_activations.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    logits = a @ weights[-2] + weights[-1]
    return logits, activations, pre_activations


def mlp_logits(weights: Weights, X: np.ndarray) -> np.ndarray:
    return _forward(weights, X)[0]


def mlp_loss_and_gradients(
    weights: Weights,
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: Optional[np.ndarray] = None,
) -> Tuple[float, Weights]:
    """
    Mean softmax cross-entropy of a batch and its exact gradients.

    Args:
        weights: [W1, b1, ..., Wk, bk] with W of shape (fan_in, fan_out)
        X: batch inputs, shape (m, n_inputs), m >= 1
        y: class codes, shape (m,)
        sample_weight: per-row weights (uniform when None); the loss is
            sum(w * ce) / sum(w)

    Returns:
        tuple: (loss, gradients laid out like weights)
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValidationError("Batch must not be empty")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    w = w / w.sum()
    logits, activations, pre_activations = _forward(weights, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(w * log_probs[np.arange(len(y)), y]).sum())

    grads: Weights = [np.empty(0)] * len(weights)
    delta = (np.exp(log_probs) - one_hot(y, logits.shape[1])) * w[:, None]
    for layer in range(len(weights) // 2 - 1, -1, -1):
        grads[2 * layer] = activations[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[2 * layer].T) * (pre_activations[layer - 1] > 0)
    return loss, grads


class AdamOptimizer:
    """Adam with bias correction."""

    def __init__(self, shapes: Sequence[Tuple[int, ...]], params: MLPParams):
        self.params = params
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, weights: Weights, grads: Weights) -> None:
        p = self.params
        self.t += 1
        correction1 = 1.0 - p.beta1**self.t
        correction2 = 1.0 - p.beta2**self.t
        for i, g in enumerate(grads):
            self.m[i] = p.beta1 * self.m[i] + (1.0 - p.beta1) * g
            self.v[i] = p.beta2 * self.v[i] + (1.0 - p.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            weights[i] -= p.learning_rate * m_hat / (np.sqrt(v_hat) + p.epsilon)


class MLPClassifier(ClassifierInterface):
    """Feed-forward network; per-class scores are softmax probabilities."""

    kind = "mlp"

    def __init__(self, params: Optional[MLPParams] = None, seed: int = 0):
        self.params = params or MLPParams()
        self.seed = seed
        self.weights: Weights = []
        self.scaler: Optional[MinMaxScaler] = None

    @classmethod
    def from_weights(cls, weights: Weights, scaler: Optional[MinMaxScaler] = None) -> "MLPClassifier":
        model = cls()
        model.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        model.scaler = scaler
        return model

    def _inputs(self, X: np.ndarray) -> np.ndarray:
        if self.scaler is None:
            return X
        return self.scaler.transform_array(X, FEATURE_COLUMNS)

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, threads: Optional[int] = None) -> None:
        scaled = SCALED_COLUMNS if self.params.scale_variance else BASE_ONLY_SCALED_COLUMNS
        self.scaler = fit_minmax(pd.DataFrame(X, columns=FEATURE_COLUMNS), scaled)
        inputs = self._inputs(X)
        self.weights = init_weights(layer_sizes(X.shape[1], self.params.hidden_layers), substream(self.seed, "mlp-init"))
        optimizer = AdamOptimizer([w.shape for w in self.weights], self.params)
        shuffle = substream(self.seed, "mlp-shuffle")
        batch = self.params.batch_size
        for epoch in range(self.params.epochs):
            order = shuffle.permutation(len(y))
            for start in range(0, len(y), batch):
                rows = order[start:start + batch]
                _, grads = mlp_loss_and_gradients(self.weights, inputs[rows], y[rows], sample_weight[rows])
                optimizer.step(self.weights, grads)
            if epoch % 50 == 0 or epoch == self.params.epochs - 1:
                loss, _ = mlp_loss_and_gradients(self.weights, inputs, y, sample_weight)
                logger.debug(f"Epoch {epoch + 1}/{self.params.epochs}: training loss {loss:.5f}")
        logger.info(f"Trained MLP {layer_sizes(X.shape[1], self.params.hidden_layers)} for {self.params.epochs} epochs on {len(y)} rows")

    def logits(self, X: np.ndarray) -> np.ndarray:
        return mlp_logits(self.weights, self._inputs(X))

    def scores(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.logits(X))

    def parameters(self) -> Dict[str, Any]:
        return {
            "weights": [w.tolist() for w in self.weights],
            "scaler": self.scaler.to_dict() if self.scaler else None,
        }

    def load_parameters(self, params: Dict[str, Any]) -> None:
        self.weights = [np.asarray(w, dtype=np.float64) for w in params["weights"]]
        self.scaler = MinMaxScaler.from_dict(params["scaler"]) if params.get("scaler") else None
