#!/usr/bin/env python3
"""
Command-line front end for Anomaly-Space fault diagnosis.

Stages read and write plain CSV/JSON artifacts so each one can be inspected
and rerun on its own:

    simulate -> (detect) -> preprocess -> featurize -> train / cv / evaluate -> report

`run` chains all stages from one config file (end_to_end).
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from anomaly_space.config import RunConfig, load_run_config, load_scenario, scenario_seed
from anomaly_space.detectors import DetectorConfig, run_detectors
from anomaly_space.domain import split_turbines
from anomaly_space.errors import DataFormatError, FaultDiagnosisError, StageError, ValidationError
from anomaly_space.evaluation import (
    EvaluationReport,
    MetricConfig,
    choose_bbcv_candidate,
    cross_validate,
    load_report,
    render_markdown,
    transfer_evaluate_all,
)
from anomaly_space.features import FEATURE_TABLE_COLUMNS, build_candidate_features, select_bbcv_candidate
from anomaly_space.fleet_sim import FleetOutput, ScenarioSpec, generate_fleet, read_raw_streams, write_raw_streams
from anomaly_space.models import ClassifierConfig, save_model, train
from anomaly_space.preprocess import BASE_TABLE_COLUMNS, build_base_table
from anomaly_space.runtime import derive_seed
from anomaly_space.storage import (
    atomic_write_text,
    read_anomaly_records,
    read_fault_frames,
    read_json,
    read_splits,
    read_table,
    write_anomaly_records,
    write_fault_frames,
    write_json,
    write_splits,
    write_table,
)

logger = logging.getLogger("fault_diagnosis")

STAGES = ("simulate", "preprocess", "featurize", "cv", "evaluate")
CLASSIFIER_KINDS = ("above_one", "random_forest", "gbm", "mlp")


def _numeric_columns(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> pd.DataFrame:
    for column in columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        if values.isna().any() or not np.isfinite(values).all():
            raise DataFormatError(f"Column '{column}' of {path} holds non-numeric or missing values")
        frame[column] = values
    return frame


def read_base_table(path: Path) -> pd.DataFrame:
    frame = read_table(path, BASE_TABLE_COLUMNS)
    numeric = [c for c in frame.columns if c not in ("ts", "park", "unit", "component")]
    frame = _numeric_columns(frame, numeric, path)
    frame["label"] = frame["label"].astype(np.int64)
    return frame


def read_features(path: Path) -> pd.DataFrame:
    frame = read_table(path, FEATURE_TABLE_COLUMNS)
    numeric = [c for c in frame.columns if c not in ("ts", "park", "unit", "component")]
    frame = _numeric_columns(frame, numeric, path)
    for column in ("bbcv_tc", "tuplet_tc", "label"):
        frame[column] = frame[column].astype(np.int64)
    return frame


def write_report(report: EvaluationReport, path: Path, markdown: bool = False) -> None:
    write_json(report.model_dump(mode="json"), path)
    if markdown:
        atomic_write_text(Path(path).with_suffix(".md"), render_markdown(report))


def simulate_to(scenario: ScenarioSpec, out_dir: Path, threads: Optional[int] = None) -> FleetOutput:
    """
    Generate a fleet and write its artifacts.

    Writes anomaly_records.csv (score level) or raw/ (signal level), plus
    fault_frames.json and splits.json.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    fleet = generate_fleet(scenario, threads)
    if fleet.records is not None:
        write_anomaly_records(fleet.records, out_dir / "anomaly_records.csv")
    if fleet.streams is not None:
        write_raw_streams(fleet.streams, out_dir / "raw")
    write_fault_frames(fleet.frames, out_dir / "fault_frames.json")
    write_splits(fleet.splits, out_dir / "splits.json")
    return fleet


def detect_to(
    raw_dir: Path,
    out_path: Path,
    config: DetectorConfig,
    threads: Optional[int] = None,
    calibration_dir: Optional[Path] = None,
) -> pd.DataFrame:
    """Score raw streams and write anomaly records (and optionally calibrations)."""
    records, calibrations = run_detectors(read_raw_streams(raw_dir), config, threads)
    write_anomaly_records(records, out_path)
    if calibration_dir is not None:
        calibration_dir.mkdir(parents=True, exist_ok=True)
        write_json({name: cal.to_dict() for name, cal in sorted(calibrations.items())}, calibration_dir / "calibration.json")
    return records


def _turbine_sets(frames_path: Path, splits_path: Path) -> Tuple[Set[Tuple[str, str]], Set[Tuple[str, str]]]:
    resolved = split_turbines(read_fault_frames(frames_path), read_splits(splits_path))
    return resolved.get("train", set()), resolved.get("test", set())


def preprocess_to(
    records_path: Path,
    frames_path: Path,
    out_path: Path,
    splits_path: Optional[Path] = None,
    fill_horizon: int = 18,
) -> pd.DataFrame:
    """
    Build the base table; the bbcv column is chosen on training turbines when
    splits are given. The choice is written next to the table.
    """
    records = read_anomaly_records(records_path)
    frames = read_fault_frames(frames_path)
    fit_turbines = None
    if splits_path is not None:
        _, test_turbines = _turbine_sets(frames_path, splits_path)
        all_turbines = set(zip(records["park"], records["unit"]))
        fit_turbines = all_turbines - test_turbines
    table, selection = build_base_table(records, frames, fill_horizon, fit_turbines)
    write_table(table, out_path)
    write_json(selection.to_dict(), out_path.with_name(out_path.stem + "_selection.json"))
    return table


def featurize_to(
    base_path: Path,
    out_dir: Path,
    window: int = 144,
    stride: int = 1,
    alpha: float = 0.001,
    splits_path: Optional[Path] = None,
    frames_path: Optional[Path] = None,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """
    Window features for every entity: features.csv, and train.csv/test.csv
    when splits are given (turbines of test cases go to test, all others to
    train).
    """
    if (splits_path is None) != (frames_path is None):
        raise ValidationError("--splits and --frames must be given together")
    features = build_candidate_features(read_base_table(base_path), window, stride, alpha, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(features, out_dir / "features.csv")
    if splits_path is not None:
        _, test_turbines = _turbine_sets(frames_path, splits_path)
        in_test = np.array([(p, u) in test_turbines for p, u in zip(features["park"], features["unit"])], dtype=bool)
        write_table(features[~in_test], out_dir / "train.csv")
        write_table(features[in_test], out_dir / "test.csv")
        logger.info(f"Split {len(features)} feature rows into {int((~in_test).sum())} train and {int(in_test.sum())} test rows")
    return features


def resolve_classifiers(config: RunConfig, names: Optional[Sequence[str]]) -> List[ClassifierConfig]:
    """Classifiers named on the command line, taken from the config when it defines them."""
    if not names:
        return list(config.classifiers)
    by_label = {c.label: c for c in config.classifiers}
    resolved = []
    for name in names:
        if name in by_label:
            resolved.append(by_label[name])
        elif name in CLASSIFIER_KINDS:
            resolved.append(ClassifierConfig(kind=name, seed=derive_seed(config.seed, "classifier", name)))
        else:
            raise ValidationError(f"Unknown model '{name}', expected one of {list(CLASSIFIER_KINDS)} or a configured name")
    return resolved


def train_to(features_path: Path, classifier: ClassifierConfig, out_path: Path, threads: Optional[int] = None) -> None:
    rows = read_features(features_path)
    candidate = choose_bbcv_candidate(rows)
    if candidate is not None:
        rows = select_bbcv_candidate(rows, candidate)
    save_model(train(classifier, rows, threads), out_path)


def cv_to(
    features_path: Path,
    classifiers: Sequence[ClassifierConfig],
    metrics: MetricConfig,
    out_path: Path,
    threads: Optional[int] = None,
    markdown: bool = False,
) -> EvaluationReport:
    report = cross_validate(read_features(features_path), classifiers, metrics, threads=threads)
    write_report(report, out_path, markdown)
    return report


def evaluate_to(
    train_path: Path,
    test_path: Path,
    classifiers: Sequence[ClassifierConfig],
    metrics: MetricConfig,
    out_path: Path,
    threads: Optional[int] = None,
    markdown: bool = False,
) -> EvaluationReport:
    report = transfer_evaluate_all(read_features(train_path), read_features(test_path), classifiers, metrics, threads)
    write_report(report, out_path, markdown)
    return report


def report_to(input_path: Path, out_path: Path) -> None:
    report = load_report(read_json(input_path))
    atomic_write_text(out_path, render_markdown(report))


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag any failure inside the block with the stage name."""
    logger.info(f"Stage {name}: started")
    try:
        yield
    except StageError:
        raise
    except (FaultDiagnosisError, OSError, ValueError, KeyError) as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, str(e)) from e
    logger.info(f"Stage {name}: done")


def end_to_end(config: RunConfig, start_stage: str = "simulate") -> EvaluationReport:
    """
    Run the whole chain and write the transfer report.

    Args:
        config: validated run configuration
        start_stage (str): first stage to run; earlier stages' artifacts
            must already exist in the output directory

    Returns:
        EvaluationReport: transfer evaluation of every classifier and the
        Above-One baseline on the test split
    """
    if start_stage not in STAGES:
        raise ValidationError(f"Unknown stage '{start_stage}', expected one of {list(STAGES)}")
    scenario = load_scenario(config.scenario, seed=config.seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    todo = STAGES[STAGES.index(start_stage):]
    records_path = out / "anomaly_records.csv"
    frames_path, splits_path = out / "fault_frames.json", out / "splits.json"
    base_path = out / "base_table.csv"

    if "simulate" in todo:
        with stage("simulate"):
            simulate_to(scenario, out, config.threads)
        if scenario.fidelity == "signal_level":
            with stage("detect"):
                detect_to(out / "raw", records_path, config.detectors, config.threads, out / "calibration")
    if "preprocess" in todo:
        with stage("preprocess"):
            preprocess_to(records_path, frames_path, base_path, splits_path, config.pipeline.fill_horizon)
    if "featurize" in todo:
        with stage("featurize"):
            p = config.pipeline
            featurize_to(base_path, out, p.window, p.stride, p.alpha, splits_path, frames_path, config.threads)
    if "cv" in todo and config.run_cv:
        with stage("cv"):
            cv_to(out / "train.csv", config.classifiers, config.metrics, out / "cv_report.json", config.threads, markdown=True)
    with stage("evaluate"):
        report = evaluate_to(
            out / "train.csv", out / "test.csv", config.classifiers, config.metrics,
            out / "transfer_report.json", config.threads, markdown=True,
        )
    return report


def _print_headlines(report: EvaluationReport) -> None:
    for model in report.models:
        h = model.metrics.headline
        print(
            f"   - {model.model}: F_{report.beta:g} = {h.f_beta:.3f}, F_1 = {h.f1:.3f}, "
            f"precision = {h.precision:.3f}, recall = {h.recall:.3f}"
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="Master seed (overrides config and FDX_SEED)")
    common.add_argument("--threads", type=int, help="Maximum worker threads (default: available cores)")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        description="Anomaly-Space fault diagnosis for wind turbine fleets"
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Generate a synthetic fleet")
    simulate.add_argument("--scenario", type=Path, required=True, help="Scenario JSON")
    simulate.add_argument("--out", type=Path, required=True, help="Output directory")

    detect = subparsers.add_parser("detect", parents=[common], help="Score raw streams with the detectors")
    detect.add_argument("--raw", type=Path, required=True, help="Raw-stream directory")
    detect.add_argument("--out", type=Path, required=True, help="Anomaly records CSV")
    detect.add_argument("--calibration-out", type=Path, help="Directory for detector calibrations")

    preprocess = subparsers.add_parser("preprocess", parents=[common], help="Build the labeled base table")
    preprocess.add_argument("--records", type=Path, required=True, help="Anomaly records CSV")
    preprocess.add_argument("--frames", type=Path, required=True, help="Fault frames JSON")
    preprocess.add_argument("--splits", type=Path, help="Splits JSON (bbcv column chosen on train turbines)")
    preprocess.add_argument("--out", type=Path, required=True, help="Base table CSV")

    featurize = subparsers.add_parser("featurize", parents=[common], help="Extract window features")
    featurize.add_argument("--base", type=Path, required=True, help="Base table CSV")
    featurize.add_argument("--splits", type=Path, help="Splits JSON (writes train.csv and test.csv)")
    featurize.add_argument("--frames", type=Path, help="Fault frames JSON (needed with --splits)")
    featurize.add_argument("--out", type=Path, required=True, help="Output directory")

    train_cmd = subparsers.add_parser("train", parents=[common], help="Train one classifier")
    train_cmd.add_argument("--features", type=Path, required=True, help="Training feature CSV")
    train_cmd.add_argument("--model", required=True, help="Classifier kind or configured name")
    train_cmd.add_argument("--out", type=Path, required=True, help="Model file")

    cv = subparsers.add_parser("cv", parents=[common], help="Stratified k-fold cross-validation")
    cv.add_argument("--features", type=Path, help="Training feature CSV")
    cv.add_argument("--model", action="append", help="Classifier (repeatable; default: configured classifiers)")
    cv.add_argument("--out", type=Path, help="Report JSON")

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="Transfer evaluation on test turbines")
    evaluate.add_argument("--train", type=Path, required=True, help="Training feature CSV")
    evaluate.add_argument("--test", type=Path, required=True, help="Test feature CSV")
    evaluate.add_argument("--model", action="append", help="Classifier (repeatable; default: configured classifiers)")
    evaluate.add_argument("--out", type=Path, required=True, help="Report JSON")

    report = subparsers.add_parser("report", parents=[common], help="Render a report as Markdown")
    report.add_argument("--input", type=Path, required=True, help="Report JSON")
    report.add_argument("--out", type=Path, required=True, help="Markdown file")

    run = subparsers.add_parser("run", parents=[common], help="Run the whole pipeline from a config file")
    run.add_argument("--from-stage", choices=STAGES, default="simulate", help="First stage to run")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def dispatch(args: argparse.Namespace) -> None:
    """Run one parsed subcommand."""
    config = load_run_config(args.config, seed=args.seed, threads=args.threads)
    threads = config.threads

    if args.command == "simulate":
        scenario = load_scenario(args.scenario, seed=scenario_seed(args.config, args.seed))
        fleet = simulate_to(scenario, args.out, threads)
        print(f"✅ Simulated '{scenario.name}' ({scenario.fidelity}, seed {scenario.seed}): {len(fleet.frames)} fault frames")
        print(f"   Artifacts written to {args.out}")

    elif args.command == "detect":
        records = detect_to(args.raw, args.out, config.detectors, threads, args.calibration_out)
        print(f"✅ Wrote {len(records)} anomaly records to {args.out}")

    elif args.command == "preprocess":
        table = preprocess_to(args.records, args.frames, args.out, args.splits, config.pipeline.fill_horizon)
        print(f"✅ Wrote base table with {len(table)} rows to {args.out}")

    elif args.command == "featurize":
        p = config.pipeline
        features = featurize_to(args.base, args.out, p.window, p.stride, p.alpha, args.splits, args.frames, threads)
        print(f"✅ Wrote {len(features)} feature rows to {args.out}")

    elif args.command == "train":
        (classifier,) = resolve_classifiers(config, [args.model])
        train_to(args.features, classifier, args.out, threads)
        print(f"✅ Trained {classifier.label} model saved to {args.out}")

    elif args.command == "cv":
        features = args.features or Path(config.output_dir) / "train.csv"
        out = args.out or Path(config.output_dir) / "cv_report.json"
        report = cv_to(features, resolve_classifiers(config, args.model), config.metrics, out, threads)
        print(f"✅ Cross-validation report written to {out}")
        _print_headlines(report)

    elif args.command == "evaluate":
        report = evaluate_to(args.train, args.test, resolve_classifiers(config, args.model), config.metrics, args.out, threads)
        print(f"✅ Transfer report written to {args.out}")
        _print_headlines(report)

    elif args.command == "report":
        report_to(args.input, args.out)
        print(f"✅ Markdown report written to {args.out}")

    elif args.command == "run":
        if args.config is None:
            raise ValidationError("run needs --config")
        report = end_to_end(config, args.from_stage)
        print(f"✅ Pipeline finished, reports in {config.output_dir}")
        _print_headlines(report)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function with command-line interface; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    _configure_logging(args)

    try:
        dispatch(args)
    except ValidationError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 2
    except (FaultDiagnosisError, OSError) as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
