#!/usr/bin/env python3
"""
Tests for the Above-One baseline, tree ensembles, the MLP and model files
"""

import json
import sys

import numpy as np
import pandas as pd
import pytest

from anomaly_space.domain import FaultClass
from anomaly_space.errors import ModelFormatError, ValidationError
from anomaly_space.features import BASE_ONLY_SCALED_COLUMNS, FEATURE_COLUMNS, SCALED_COLUMNS
from anomaly_space.models import (
    AboveOneClassifier,
    ClassifierConfig,
    GradientBoostingClassifier,
    MLPClassifier,
    RandomForestClassifier,
    above_one_predict,
    load_model,
    mlp_loss_and_gradients,
    save_model,
    train,
)
from anomaly_space.models.base import MLPParams, feature_matrix
from anomaly_space.models.mlp import init_weights, layer_sizes
from anomaly_space.models.trees import Tree
from anomaly_space.runtime import substream


def synthetic_rows(n_per_class: int = 60, seed: int = 0) -> pd.DataFrame:
    """Separable-ish rows: bearing rows have high bbcv, sensor rows high tuplet."""
    rng = np.random.default_rng(seed)
    parts = []
    for label, (bbcv, tuplet) in enumerate([(0.3, 0.3), (2.5, 0.4), (0.4, 3.0)]):
        frame = pd.DataFrame(
            {
                "bbcv_base": np.abs(rng.normal(bbcv, 0.3, n_per_class)),
                "tuplet_base": np.abs(rng.normal(tuplet, 0.3, n_per_class)),
                "bbcv_tc": (rng.random(n_per_class) < (0.8 if label == 1 else 0.05)).astype(int),
                "bbcv_var": np.abs(rng.normal(0.5 if label == 1 else 0.05, 0.05, n_per_class)),
                "tuplet_tc": (rng.random(n_per_class) < 0.05).astype(int),
                "tuplet_var": np.abs(rng.normal(0.6 if label == 2 else 0.05, 0.05, n_per_class)),
                "label": label,
            }
        )
        parts.append(frame)
    return pd.concat(parts, ignore_index=True)


def config(kind: str, **kwargs) -> ClassifierConfig:
    small = {
        "random_forest": {"n_trees": 15},
        "gbm": {"n_rounds": 20, "min_samples_leaf": 5},
        "mlp": {"epochs": 300, "hidden_layers": [8], "learning_rate": 0.01, "batch_size": 32},
    }
    data = {"kind": kind, "seed": 11}
    if kind in small:
        data[kind] = small[kind]
    data.update(kwargs)
    return ClassifierConfig.model_validate(data)


@pytest.mark.parametrize(
    "bbcv, tuplet, expected",
    [
        (0.5, 0.5, FaultClass.NORMAL),
        (1.8, 0.2, FaultClass.BEARING_FAULT),
        (0.3, 1.4, FaultClass.SENSOR_FAULT),
        (1.5, 2.0, FaultClass.SENSOR_FAULT),
        (2.0, 2.0, FaultClass.BEARING_FAULT),
        (1.0, 1.0, FaultClass.NORMAL),
    ],
)
def test_above_one_rule(bbcv, tuplet, expected):
    assert above_one_predict(bbcv, tuplet) is expected


def test_above_one_ignores_other_columns():
    rows = np.array([[1.5, 0.2, 0, 0.0, 1, 9.0], [1.5, 0.2, 1, 4.0, 0, 0.0]])
    assert AboveOneClassifier().predict(rows).tolist() == [1, 1]


def test_above_one_trains_without_fault_samples():
    rows = synthetic_rows()
    model = train(config("above_one"), rows[rows["label"] == 0])
    queries = pd.DataFrame([[0.2, 0.2, 0, 0.0, 0, 0.0], [2.0, 0.2, 0, 0.0, 0, 0.0]], columns=FEATURE_COLUMNS)
    assert model.predict(queries).tolist() == [0, 1]


@pytest.mark.parametrize("kind", ["random_forest", "gbm", "mlp"])
def test_learned_models_need_every_class(kind):
    rows = synthetic_rows()
    with pytest.raises(ValidationError, match="SensorFault"):
        train(config(kind), rows[rows["label"] != 2])


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    weights = init_weights(layer_sizes(6, [5]), rng)
    weights[1] = rng.normal(0, 0.1, size=weights[1].shape)
    X = rng.normal(size=(7, 6))
    y = np.array([0, 1, 2, 1, 0, 2, 2])
    sample_weight = np.array([1.0, 2.0, 1.0, 0.5, 1.0, 3.0, 1.0])
    _, grads = mlp_loss_and_gradients(weights, X, y, sample_weight)
    step = 1e-6
    for w, g in zip(weights, grads):
        for index in np.ndindex(w.shape):
            original = w[index]
            w[index] = original + step
            up, _ = mlp_loss_and_gradients(weights, X, y, sample_weight)
            w[index] = original - step
            down, _ = mlp_loss_and_gradients(weights, X, y, sample_weight)
            w[index] = original
            assert (up - down) / (2 * step) == pytest.approx(g[index], abs=1e-4)


def test_mlp_with_zero_weights_is_uniform():
    weights = [np.zeros(s) for s in [(6, 5), (5,), (5, 3), (3,)]]
    model = MLPClassifier.from_weights(weights)
    scores = model.scores(np.random.default_rng(0).normal(size=(4, 6)))
    assert np.allclose(scores, 1 / 3)
    assert model.predict(np.zeros((1, 6))).tolist() == [0]


def test_mlp_rejects_an_empty_batch():
    weights = init_weights(layer_sizes(6, [5]), substream(0, "test"))
    with pytest.raises(ValidationError):
        mlp_loss_and_gradients(weights, np.zeros((0, 6)), np.zeros(0, dtype=int))


def single_leaf(code: int):
    return [{"feature": -1, "threshold": None, "left": -1, "right": -1,
             "leaf_value": [1.0 if c == code else 0.0 for c in range(3)]}]


def test_forest_majority_vote():
    forest = RandomForestClassifier()
    forest.load_parameters({"trees": [single_leaf(1), single_leaf(1), single_leaf(2)]})
    X = np.zeros((1, 6))
    assert forest.votes(X)[:, 0].tolist() == [1, 1, 2]
    assert forest.predict(X).tolist() == [1]
    assert forest.scores(X)[0].tolist() == pytest.approx([0.0, 2 / 3, 1 / 3])


def test_forest_tie_goes_to_lowest_class():
    forest = RandomForestClassifier()
    forest.load_parameters({"trees": [single_leaf(2), single_leaf(1)]})
    assert forest.predict(np.zeros((1, 6))).tolist() == [1]


def test_tree_routes_ties_to_the_left():
    tree = Tree.from_nodes(
        [
            {"feature": 0, "threshold": 1.0, "left": 1, "right": 2, "leaf_value": None},
            {"feature": -1, "threshold": None, "left": -1, "right": -1, "leaf_value": 0.25},
            {"feature": -1, "threshold": None, "left": -1, "right": -1, "leaf_value": 0.75},
        ]
    )
    X = np.array([[1.0, 0, 0, 0, 0, 0], [1.0001, 0, 0, 0, 0, 0]])
    assert tree.predict_value(X).tolist() == [0.25, 0.75]


def test_gbm_with_zero_rounds_predicts_normal():
    rows = synthetic_rows()
    model = train(config("gbm", gbm={"n_rounds": 0}), rows)
    assert np.allclose(model.predict_scores(rows), 1 / 3)
    assert set(model.predict(rows).tolist()) == {0}


@pytest.mark.parametrize("kind", ["random_forest", "gbm", "mlp"])
def test_learned_models_fit_separable_rows(kind):
    rows = synthetic_rows()
    model = train(config(kind), rows, threads=2)
    accuracy = np.mean(model.predict(rows) == rows["label"].to_numpy())
    assert accuracy >= 0.9
    scores = model.predict_scores(rows)
    assert scores.shape == (len(rows), 3)
    assert np.allclose(scores.sum(axis=1), 1.0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_mlp_with_default_hyperparameters_separates_a_toy_set(seed):
    """One hidden layer of 5, Adam at 0.001, batches of 64: 500 epochs fit 60 separable rows."""
    rows = synthetic_rows(n_per_class=20)
    model = train(ClassifierConfig(kind="mlp", seed=seed, mlp={"epochs": 500}), rows)
    assert model.config.mlp.hidden_layers == [5]
    assert np.mean(model.predict(rows) == rows["label"].to_numpy()) == 1.0


@pytest.mark.parametrize("scale_variance, expected", [(True, SCALED_COLUMNS), (False, BASE_ONLY_SCALED_COLUMNS)])
def test_mlp_variance_scaling_is_configurable(tmp_path, scale_variance, expected):
    rows = synthetic_rows()
    mlp = {"epochs": 50, "hidden_layers": [8], "learning_rate": 0.01, "scale_variance": scale_variance}
    model = train(ClassifierConfig(kind="mlp", seed=11, mlp=mlp), rows)
    assert model.estimator.scaler.columns == list(expected)
    assert model.to_dict()["parameters"]["scaler"]["columns"] == list(expected)

    save_model(model, tmp_path / "mlp.json")
    loaded = load_model(tmp_path / "mlp.json")
    assert loaded.config.mlp.scale_variance is scale_variance
    assert np.allclose(loaded.predict_scores(rows), model.predict_scores(rows))


def test_mlp_scales_variance_by_default():
    assert MLPParams().scale_variance is True


@pytest.mark.parametrize("kind", ["above_one", "random_forest", "gbm", "mlp"])
def test_model_file_round_trip(tmp_path, kind):
    rows = synthetic_rows()
    model = train(config(kind), rows)
    path = tmp_path / f"{kind}.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.kind == kind
    assert np.array_equal(loaded.predict(rows), model.predict(rows))
    assert np.allclose(loaded.predict_scores(rows), model.predict_scores(rows))


@pytest.mark.parametrize("kind", ["random_forest", "gbm", "mlp"])
def test_training_is_deterministic(tmp_path, kind):
    rows = synthetic_rows()
    first = train(config(kind), rows, threads=1)
    second = train(config(kind), rows, threads=4)
    save_model(first, tmp_path / "a.json")
    save_model(second, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.mark.parametrize("kind", ["random_forest", "gbm"])
def test_trees_are_invariant_to_monotone_transforms(kind):
    rows = synthetic_rows()
    transformed = rows.copy()
    for column in FEATURE_COLUMNS:
        transformed[column] = rows[column] ** 3 + 2.0 * rows[column] + 5.0
    original = train(config(kind), rows).predict(rows)
    warped = train(config(kind), transformed).predict(transformed)
    assert np.array_equal(original, warped)


def test_corrupt_model_files(tmp_path):
    model = train(config("random_forest"), synthetic_rows())
    path = tmp_path / "model.json"
    save_model(model, path)
    text = path.read_text()

    (tmp_path / "truncated.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "truncated.json")

    data = json.loads(text)
    data["version"] = 0
    (tmp_path / "old.json").write_text(json.dumps(data))
    with pytest.raises(ModelFormatError, match="version 0"):
        load_model(tmp_path / "old.json")

    data["version"] = 1
    data["magic"] = "something-else"
    (tmp_path / "magic.json").write_text(json.dumps(data))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "magic.json")

    data["magic"] = "fdx-model"
    del data["parameters"]
    (tmp_path / "partial.json").write_text(json.dumps(data))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "partial.json")

    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "absent.json")


def test_feature_matrix_checks_layout():
    with pytest.raises(ValidationError, match="tuplet_var"):
        feature_matrix(pd.DataFrame({c: [0.0] for c in FEATURE_COLUMNS[:-1]}))
    with pytest.raises(ValidationError):
        feature_matrix(np.zeros((2, 5)))
    with pytest.raises(ValidationError):
        feature_matrix(np.full((1, 6), np.nan))


def test_class_weights_must_be_positive():
    with pytest.raises(ValueError):
        ClassifierConfig(kind="mlp", class_weights=[1.0, 0.0, 1.0])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
