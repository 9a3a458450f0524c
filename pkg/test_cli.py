#!/usr/bin/env python3
"""
Tests for the fault_diagnosis command-line front end: stage commands,
artifacts and exit codes
"""

import json
import sys
from pathlib import Path

import pytest

from anomaly_space.config import load_run_config, scenario_seed
from anomaly_space.errors import ValidationError
from anomaly_space.models.base import MLPParams
from fault_diagnosis import build_parser, end_to_end, main, read_features, resolve_classifiers

SCENARIO = {
    "name": "cli",
    "start": "2021-01-01T00:00:00Z",
    "duration_days": 8,
    "fidelity": "score_level",
    "seed": 3,
    "turbines": [
        {"park": "P1", "unit": "U1"},
        {"park": "P1", "unit": "U2"},
        {"park": "P2", "unit": "U1"},
        {"park": "P3", "unit": "U1"},
    ],
    "injections": [
        {
            "case_no": 1, "park": "P1", "unit": "U1", "component": "FastShaftBearingDE",
            "fault_type": "bearing", "start": "2021-01-03T00:00:00Z", "end": "2021-01-08T00:00:00Z",
            "profile": {"kind": "bearing_trend", "amplitude": 3.0, "noise_sd": 0.2},
        },
        {
            "case_no": 2, "park": "P1", "unit": "U2", "component": "GeneratorTemperature",
            "fault_type": "sensor", "start": "2021-01-03T00:00:00Z", "end": "2021-01-08T00:00:00Z",
            "profile": {"kind": "sensor_variance", "amplitude": 2.5, "noise_sd": 0.3},
        },
        {
            "case_no": 3, "park": "P2", "unit": "U1", "component": "FastShaftBearingNDE",
            "fault_type": "bearing", "start": "2021-01-04T00:00:00Z", "end": "2021-01-08T00:00:00Z",
            "profile": {"kind": "bearing_trend", "amplitude": 3.0, "noise_sd": 0.2},
        },
        {
            "case_no": 4, "park": "P3", "unit": "U1", "component": "TransformerTemperature",
            "fault_type": "sensor", "start": "2021-01-04T00:00:00Z", "end": "2021-01-08T00:00:00Z",
            "profile": {"kind": "sensor_variance", "amplitude": 2.5, "noise_sd": 0.3},
        },
    ],
    "splits": {"train": [1, 2], "test": [3, 4]},
}

CLASSIFIERS = [
    {"kind": "above_one"},
    {"kind": "random_forest", "name": "rf", "random_forest": {"n_trees": 10, "max_depth": 6}},
]


def write_config(directory: Path, **overrides) -> Path:
    (directory / "scenario.json").write_text(json.dumps(SCENARIO))
    config = {
        "seed": 3,
        "scenario": "scenario.json",
        "output_dir": "out",
        "threads": 2,
        "metrics": {"k_folds": 3},
        "classifiers": CLASSIFIERS,
        **overrides,
    }
    path = directory / "config.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Runs simulate, preprocess and featurize once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root)
    out = root / "out"
    common = ["--config", str(config), "--quiet"]
    assert main(["simulate", "--scenario", str(root / "scenario.json"), "--out", str(out), *common]) == 0
    assert main([
        "preprocess", "--records", str(out / "anomaly_records.csv"), "--frames", str(out / "fault_frames.json"),
        "--splits", str(out / "splits.json"), "--out", str(out / "base_table.csv"), *common,
    ]) == 0
    assert main([
        "featurize", "--base", str(out / "base_table.csv"), "--splits", str(out / "splits.json"),
        "--frames", str(out / "fault_frames.json"), "--out", str(out), *common,
    ]) == 0
    return root, config, out


def test_no_command_is_a_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error():
    assert main(["simulate", "--bogus"]) == 2


def test_missing_config_is_a_validation_error(tmp_path, capsys):
    code = main(["cv", "--config", str(tmp_path / "missing.json"), "--quiet"])
    assert code == 2
    assert "❌ Error" in capsys.readouterr().err


def test_invalid_config_is_a_validation_error(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"classifiers": [{"kind": "svm"}]}))
    assert main(["cv", "--config", str(path), "--quiet"]) == 2


def test_run_needs_a_config(capsys):
    assert main(["run", "--quiet"]) == 2
    assert "run needs --config" in capsys.readouterr().err


def test_from_stage_must_be_known():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--from-stage", "detect"])


def test_resolve_classifiers(tmp_path):
    config = load_run_config(write_config(tmp_path))
    assert [c.label for c in resolve_classifiers(config, None)] == ["above_one", "rf"]
    resolved = resolve_classifiers(config, ["rf", "gbm"])
    assert [c.kind for c in resolved] == ["random_forest", "gbm"]
    assert resolved[0].random_forest.n_trees == 10
    with pytest.raises(ValidationError, match="Unknown model"):
        resolve_classifiers(config, ["svm"])


def test_stage_artifacts(staged):
    _, _, out = staged
    for name in (
        "anomaly_records.csv", "fault_frames.json", "splits.json", "base_table.csv",
        "base_table_selection.json", "features.csv", "train.csv", "test.csv",
    ):
        assert (out / name).is_file(), name
    train = read_features(out / "train.csv")
    test = read_features(out / "test.csv")
    train_turbines = set(zip(train["park"], train["unit"]))
    test_turbines = set(zip(test["park"], test["unit"]))
    assert train_turbines == {("P1", "U1"), ("P1", "U2")}
    assert test_turbines == {("P2", "U1"), ("P3", "U1")}
    assert set(train["label"]) == {0, 1, 2}
    selection = json.loads((out / "base_table_selection.json").read_text())
    assert "column" in selection


def test_cv_and_report_commands(staged, capsys):
    root, config, out = staged
    report_path = root / "cv.json"
    code = main(["cv", "--config", str(config), "--features", str(out / "train.csv"), "--out", str(report_path), "--quiet"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "✅ Cross-validation report written" in printed
    assert "above_one: F_0.5" in printed
    report = json.loads(report_path.read_text())
    assert report["mode"] == "cv"
    assert [m["model"] for m in report["models"]] == ["above_one", "rf"]

    markdown = root / "cv.md"
    assert main(["report", "--input", str(report_path), "--out", str(markdown), "--quiet"]) == 0
    assert markdown.read_text().startswith("# Cross-validation results")


def test_evaluate_command_adds_the_baseline(staged, capsys):
    root, config, out = staged
    report_path = root / "transfer.json"
    code = main([
        "evaluate", "--config", str(config), "--train", str(out / "train.csv"), "--test", str(out / "test.csv"),
        "--model", "rf", "--out", str(report_path), "--quiet",
    ])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["mode"] == "transfer"
    assert sorted(m["model"] for m in report["models"]) == ["above_one", "rf"]
    assert "rf: F_0.5" in capsys.readouterr().out


def test_evaluate_rerun_gives_identical_bytes(staged, tmp_path):
    _, config, out = staged
    contents = []
    for name in ("a.json", "b.json"):
        code = main([
            "evaluate", "--config", str(config), "--train", str(out / "train.csv"), "--test", str(out / "test.csv"),
            "--model", "rf", "--out", str(tmp_path / name), "--quiet",
        ])
        assert code == 0
        contents.append((tmp_path / name).read_bytes())
    assert contents[0] == contents[1]


def test_train_command_writes_a_model(staged):
    root, config, out = staged
    model_path = root / "rf.model"
    code = main(["train", "--config", str(config), "--features", str(out / "train.csv"), "--model", "rf", "--out", str(model_path), "--quiet"])
    assert code == 0
    assert model_path.stat().st_size > 0


def test_corrupted_features_fail_at_runtime(staged, tmp_path, capsys):
    _, config, out = staged
    lines = (out / "train.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    row[header.index("bbcv_tc")] = "abc"
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([lines[0], ",".join(row)] + lines[2:]) + "\n")
    code = main(["cv", "--config", str(config), "--features", str(bad), "--model", "above_one", "--out", str(tmp_path / "r.json"), "--quiet"])
    assert code == 1
    assert "bbcv_tc" in capsys.readouterr().err


def test_missing_input_file_fails_at_runtime(staged, tmp_path):
    _, config, _ = staged
    code = main(["cv", "--config", str(config), "--features", str(tmp_path / "none.csv"), "--out", str(tmp_path / "r.json"), "--quiet"])
    assert code == 1


def test_featurize_needs_frames_with_splits(staged, tmp_path):
    _, config, out = staged
    code = main(["featurize", "--config", str(config), "--base", str(out / "base_table.csv"), "--splits", str(out / "splits.json"), "--out", str(tmp_path), "--quiet"])
    assert code == 2


def test_end_to_end_rejects_unknown_stage(tmp_path):
    config = load_run_config(write_config(tmp_path))
    with pytest.raises(ValidationError, match="Unknown stage"):
        end_to_end(config, "detect")


def test_simulate_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("FDX_SEED", raising=False)
    config = write_config(tmp_path, seed=7)
    scenario = str(tmp_path / "scenario.json")

    def simulate(name, *extra):
        out = tmp_path / name
        assert main(["simulate", "--scenario", scenario, "--out", str(out), "--quiet", *extra]) == 0
        return (out / "anomaly_records.csv").read_bytes()

    from_config = simulate("config", "--config", str(config))
    assert from_config == simulate("flag", "--seed", "7")
    assert from_config != simulate("own")

    assert scenario_seed(config, environ={}) == 7
    assert scenario_seed(config, environ={"FDX_SEED": "5"}) == 5
    assert scenario_seed(config, seed=1, environ={"FDX_SEED": "5"}) == 1
    assert scenario_seed(None, environ={}) is None
    unseeded = tmp_path / "unseeded.json"
    unseeded.write_text(json.dumps({"threads": 1}))
    assert scenario_seed(unseeded, environ={}) is None


def test_bundled_scenario_simulates(tmp_path):
    scenario = Path(__file__).parent / "scenarios" / "table1.json"
    assert main(["simulate", "--scenario", str(scenario), "--seed", "42", "--out", str(tmp_path), "--quiet"]) == 0
    assert (tmp_path / "anomaly_records.csv").stat().st_size > 0
    frames = json.loads((tmp_path / "fault_frames.json").read_text())
    assert len(frames) == 8


def test_quickstart_config_trains_the_default_mlp():
    config = load_run_config(Path(__file__).parent / "configs" / "quickstart.json")
    mlp = next(c for c in config.classifiers if c.kind == "mlp")
    assert mlp.mlp.model_dump() == MLPParams().model_dump()
    assert Path(config.scenario).name == "table1.json"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
