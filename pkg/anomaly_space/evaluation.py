#!/usr/bin/env python3
"""
Metrics, cross-validation and transfer evaluation of the classifiers.

Precision and recall use the usual per-class definitions (0/0 is 0). The
headline aggregate is configurable:
- macro_over_fault_classes: mean of per-class values over BearingFault and
  SensorFault (default)
- micro: pooled TP/FP/FN over the two fault classes
- per_class: mean of per-class values over all three classes
Every report carries all three aggregates plus the F-beta recomputed from the
averaged precision and recall, since the two conventions can differ.
"""

import logging
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pydantic
from pydantic import BaseModel, Field
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import precision_recall_fscore_support
from sklearn.model_selection import StratifiedKFold

from .domain import CLASS_CODES, FAULT_CLASS_CODES, FaultClass
from .errors import ValidationError
from .features import FEATURE_CANDIDATE_PREFIXES, feature_candidates, select_bbcv_candidate
from .models import ClassifierConfig, train
from .preprocess import reduce_bbcv_columns
from .runtime import substream

logger = logging.getLogger(__name__)

Averaging = Literal["per_class", "macro_over_fault_classes", "micro"]
AVERAGING_MODES: Tuple[str, ...] = ("macro_over_fault_classes", "micro", "per_class")


class MetricConfig(BaseModel):
    """Metric and cross-validation settings."""

    beta: float = Field(0.5, gt=0)
    averaging: Averaging = "macro_over_fault_classes"
    k_folds: int = Field(3, ge=2)
    seed: int = 0
    fold_grouping: Literal["none", "turbine", "block"] = "none"
    block_size: int = Field(144, ge=1)


class ClassMetrics(BaseModel):
    class_code: int
    name: str
    precision: float
    recall: float
    f_beta: float
    f1: float
    support: int


class AggregateMetrics(BaseModel):
    averaging: str
    precision: float
    recall: float
    f_beta: float
    f1: float
    f_beta_of_means: float


class MetricsBlock(BaseModel):
    n_rows: int
    confusion: List[List[int]]
    per_class: List[ClassMetrics]
    aggregates: Dict[str, AggregateMetrics]
    headline: AggregateMetrics


class FoldResult(BaseModel):
    fold: int
    n_train: int
    n_test: int
    bbcv_column: Optional[str] = None
    metrics: MetricsBlock
    test_index: List[int] = Field(default_factory=list, exclude=True)
    predicted: List[int] = Field(default_factory=list, exclude=True)


class TurbineResult(BaseModel):
    park: str
    unit: str
    metrics: MetricsBlock


class ModelReport(BaseModel):
    model: str
    kind: str
    metrics: MetricsBlock
    bbcv_column: Optional[str] = None
    folds: List[FoldResult] = Field(default_factory=list)
    turbines: List[TurbineResult] = Field(default_factory=list)
    predicted: List[int] = Field(default_factory=list, exclude=True)


class EvaluationReport(BaseModel):
    """Evaluation of one or more classifiers under one protocol."""

    mode: Literal["cv", "transfer"]
    beta: float
    averaging: str
    config: Dict[str, Any] = Field(default_factory=dict)
    models: List[ModelReport] = Field(default_factory=list)

    def model(self, name: str) -> ModelReport:
        for report in self.models:
            if report.model == name:
                return report
        raise KeyError(name)


def f_beta(precision: float, recall: float, beta: float) -> float:
    """
    Weighted harmonic mean of precision and recall.

    Args:
        precision (float): in [0, 1]
        recall (float): in [0, 1]
        beta (float): recall weight; beta < 1 favors precision

    Returns:
        float: (1 + b^2) P R / (b^2 P + R), or 0.0 when the denominator is 0
    """
    b2 = beta * beta
    denominator = b2 * precision + recall
    if denominator == 0:
        return 0.0
    return (1.0 + b2) * precision * recall / denominator


def _ratio(numerator: float, denominator: float) -> float:
    return float(numerator) / float(denominator) if denominator else 0.0


def _check_codes(truth: Sequence[int], predicted: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ValidationError(f"{truth.size} true labels but {predicted.size} predictions")
    k = len(CLASS_CODES)
    if truth.size and (truth.min() < 0 or truth.max() >= k or predicted.min() < 0 or predicted.max() >= k):
        raise ValidationError(f"Class codes must lie in {list(CLASS_CODES)}")
    return truth, predicted


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int]) -> np.ndarray:
    """3x3 counts; rows are true classes, columns predicted classes."""
    truth, predicted = _check_codes(truth, predicted)
    return sk_confusion_matrix(truth, predicted, labels=list(CLASS_CODES))


def confusion_and_prf(truth: Sequence[int], predicted: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Confusion matrix and per-class precision and recall (0/0 counts as 0).

    Returns:
        tuple: (confusion, precision per class, recall per class)
    """
    truth, predicted = _check_codes(truth, predicted)
    labels = list(CLASS_CODES)
    if truth.size == 0:
        return np.zeros((len(labels), len(labels)), dtype=np.int64), np.zeros(len(labels)), np.zeros(len(labels))
    confusion = sk_confusion_matrix(truth, predicted, labels=labels)
    precision, recall, _, _ = precision_recall_fscore_support(
        truth, predicted, labels=labels, average=None, zero_division=0
    )
    return confusion, np.asarray(precision, dtype=np.float64), np.asarray(recall, dtype=np.float64)


def _aggregate(name: str, precision: float, recall: float, f_b: float, f_1: float, beta: float) -> AggregateMetrics:
    return AggregateMetrics(
        averaging=name,
        precision=float(precision),
        recall=float(recall),
        f_beta=float(f_b),
        f1=float(f_1),
        f_beta_of_means=f_beta(float(precision), float(recall), beta),
    )


def metrics_block(truth: Sequence[int], predicted: Sequence[int], beta: float, averaging: str) -> MetricsBlock:
    """All per-class and aggregate metrics of one prediction set."""
    confusion, precision, recall = confusion_and_prf(truth, predicted)
    per_class = [
        ClassMetrics(
            class_code=c,
            name=FaultClass(c).display_name,
            precision=float(precision[c]),
            recall=float(recall[c]),
            f_beta=f_beta(precision[c], recall[c], beta),
            f1=f_beta(precision[c], recall[c], 1.0),
            support=int(confusion[c].sum()),
        )
        for c in CLASS_CODES
    ]
    aggregates = {}
    for mode, codes in (("macro_over_fault_classes", FAULT_CLASS_CODES), ("per_class", CLASS_CODES)):
        chosen = [per_class[c] for c in codes]
        aggregates[mode] = _aggregate(
            mode,
            np.mean([m.precision for m in chosen]),
            np.mean([m.recall for m in chosen]),
            np.mean([m.f_beta for m in chosen]),
            np.mean([m.f1 for m in chosen]),
            beta,
        )
    codes = list(FAULT_CLASS_CODES)
    tp = confusion[codes, codes].sum()
    micro_p = _ratio(tp, confusion[:, codes].sum())
    micro_r = _ratio(tp, confusion[codes, :].sum())
    aggregates["micro"] = _aggregate(
        "micro", micro_p, micro_r, f_beta(micro_p, micro_r, beta), f_beta(micro_p, micro_r, 1.0), beta
    )
    return MetricsBlock(
        n_rows=int(confusion.sum()),
        confusion=confusion.tolist(),
        per_class=per_class,
        aggregates={mode: aggregates[mode] for mode in AVERAGING_MODES},
        headline=aggregates[averaging],
    )


def mean_metrics(blocks: Sequence[MetricsBlock], averaging: str) -> MetricsBlock:
    """Mean of per-fold metrics; confusion matrices and supports are summed."""
    confusion = np.sum([np.asarray(b.confusion) for b in blocks], axis=0)
    per_class = []
    for c in CLASS_CODES:
        rows = [b.per_class[c] for b in blocks]
        per_class.append(
            ClassMetrics(
                class_code=c,
                name=rows[0].name,
                precision=float(np.mean([r.precision for r in rows])),
                recall=float(np.mean([r.recall for r in rows])),
                f_beta=float(np.mean([r.f_beta for r in rows])),
                f1=float(np.mean([r.f1 for r in rows])),
                support=int(sum(r.support for r in rows)),
            )
        )
    aggregates = {}
    for mode in AVERAGING_MODES:
        rows = [b.aggregates[mode] for b in blocks]
        aggregates[mode] = AggregateMetrics(
            averaging=mode,
            **{
                key: float(np.mean([getattr(r, key) for r in rows]))
                for key in ("precision", "recall", "f_beta", "f1", "f_beta_of_means")
            },
        )
    return MetricsBlock(
        n_rows=int(confusion.sum()),
        confusion=confusion.tolist(),
        per_class=per_class,
        aggregates=aggregates,
        headline=aggregates[averaging],
    )


def stratified_kfold(labels: Sequence[int], k: int, seed: int = 0) -> List[np.ndarray]:
    """
    Split row indices into k folds stratified by label.

    Per-class fold counts differ by at most one.

    Args:
        labels: class code per row
        k (int): number of folds (>= 2)
        seed (int): shuffle seed

    Returns:
        list: k sorted index arrays partitioning range(len(labels))
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels, dtype=np.int64)
    codes, counts = np.unique(labels, return_counts=True)
    for code, count in zip(codes, counts):
        if count < k:
            raise ValidationError(f"Class {int(code)} has {int(count)} samples, fewer than k={k}")
    # sklearn accepts 32-bit random states only
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=int(seed) % 2**32)
    placeholder = np.zeros((labels.size, 1))
    return [np.sort(test).astype(np.int64) for _, test in splitter.split(placeholder, labels)]


def group_kfold(groups: Sequence[object], k: int, seed: int = 0) -> List[np.ndarray]:
    """
    Split row indices into k folds that never separate a group.

    Groups are shuffled with the seed and each is assigned to the fold with
    the fewest rows so far (ties to the lowest fold).
    """
    keys = pd.Series(list(groups)).astype(str).to_numpy()
    unique = np.unique(keys)
    if unique.size < k:
        raise ValidationError(f"{unique.size} groups cannot fill k={k} folds")
    order = substream(seed, "group_kfold").permutation(unique.size)
    sizes = np.zeros(k, dtype=np.int64)
    fold_of: Dict[str, int] = {}
    counts = pd.Series(keys).value_counts()
    for i in order:
        target = int(np.argmin(sizes))
        fold_of[unique[i]] = target
        sizes[target] += int(counts[unique[i]])
    assignment = np.array([fold_of[key] for key in keys])
    return [np.flatnonzero(assignment == j) for j in range(k)]


def make_folds(features: pd.DataFrame, config: MetricConfig) -> List[np.ndarray]:
    """Folds for the configured grouping: none (stratified), turbine or block."""
    if config.fold_grouping == "none":
        return stratified_kfold(features["label"].to_numpy(), config.k_folds, config.seed)
    if config.fold_grouping == "turbine":
        groups = features["park"].astype(str) + "/" + features["unit"].astype(str)
    else:
        entity = features["park"].astype(str) + "/" + features["unit"].astype(str) + "/" + features["component"].astype(str)
        position = features.assign(_entity=entity).sort_values(["_entity", "ts"], kind="mergesort").groupby("_entity").cumcount()
        groups = entity + "#" + (position.reindex(features.index) // config.block_size).astype(str)
    return group_kfold(groups.to_numpy(), config.k_folds, config.seed)


def choose_bbcv_candidate(train_rows: pd.DataFrame) -> Optional[str]:
    """bbcv candidate with the largest variance on the training rows (None if the table has none)."""
    names = feature_candidates(train_rows)
    if not names:
        return None
    prefix = FEATURE_CANDIDATE_PREFIXES[0]
    selection = reduce_bbcv_columns(train_rows[[prefix + name for name in names]])
    return selection.column[len(prefix):]


def _with_candidate(rows: pd.DataFrame, name: Optional[str]) -> pd.DataFrame:
    return rows if name is None else select_bbcv_candidate(rows, name)


def _with_baseline(configs: Sequence[ClassifierConfig]) -> List[ClassifierConfig]:
    configs = list(configs)
    if not any(c.kind == "above_one" for c in configs):
        configs.append(ClassifierConfig(kind="above_one"))
    labels = [c.label for c in configs]
    duplicated = sorted({label for label in labels if labels.count(label) > 1})
    if duplicated:
        raise ValidationError(f"Classifier names must be unique, duplicated: {duplicated}")
    return configs


def cross_validate(
    features: pd.DataFrame,
    classifiers: Sequence[ClassifierConfig],
    config: Optional[MetricConfig] = None,
    folds: Optional[Sequence[np.ndarray]] = None,
    threads: Optional[int] = None,
) -> EvaluationReport:
    """
    k-fold cross-validation of every classifier on the training cases.

    Per fold, the bbcv column choice and the MLP scaler are fitted on the
    fold's training rows only. The Above-One baseline is added when absent.

    Args:
        features: feature table (optionally with bbcv candidate triples)
        classifiers: classifier configurations, in report order
        config: metric settings
        folds: precomputed test-index folds (default: from config)
        threads (int): worker threads for tree training

    Returns:
        EvaluationReport: per-model mean metrics with the per-fold breakdown
    """
    config = config or MetricConfig()
    configs = _with_baseline(classifiers)
    folds = list(folds) if folds is not None else make_folds(features, config)
    all_index = np.arange(len(features))
    per_model: Dict[str, List[FoldResult]] = {c.label: [] for c in configs}
    for fold_no, test_index in enumerate(folds):
        test_index = np.asarray(test_index, dtype=np.int64)
        train_index = np.setdiff1d(all_index, test_index)
        candidate = choose_bbcv_candidate(features.iloc[train_index])
        train_rows = _with_candidate(features.iloc[train_index], candidate)
        test_rows = _with_candidate(features.iloc[test_index], candidate)
        truth = test_rows["label"].to_numpy(dtype=np.int64)
        for classifier in configs:
            predicted = train(classifier, train_rows, threads).predict(test_rows)
            block = metrics_block(truth, predicted, config.beta, config.averaging)
            per_model[classifier.label].append(
                FoldResult(
                    fold=fold_no,
                    n_train=len(train_index),
                    n_test=len(test_index),
                    bbcv_column=candidate,
                    metrics=block,
                    test_index=test_index.tolist(),
                    predicted=predicted.tolist(),
                )
            )
            logger.info(
                f"Fold {fold_no + 1}/{len(folds)} {classifier.label}: "
                f"F_{config.beta:g} = {block.headline.f_beta:.4f}"
            )
    models = [
        ModelReport(
            model=c.label,
            kind=c.kind,
            metrics=mean_metrics([f.metrics for f in per_model[c.label]], config.averaging),
            folds=per_model[c.label],
        )
        for c in configs
    ]
    return EvaluationReport(
        mode="cv",
        beta=config.beta,
        averaging=config.averaging,
        config={"metrics": config.model_dump(), "classifiers": [c.model_dump() for c in configs], "n_rows": len(features)},
        models=models,
    )


def _turbines(rows: pd.DataFrame) -> set:
    return set(zip(rows["park"].astype(str), rows["unit"].astype(str)))


def transfer_evaluate(
    train_rows: pd.DataFrame,
    test_rows: pd.DataFrame,
    classifier: ClassifierConfig,
    config: Optional[MetricConfig] = None,
    threads: Optional[int] = None,
) -> EvaluationReport:
    """
    Train on the training split and evaluate on turbines never seen in training.

    Args:
        train_rows: feature rows of the training cases
        test_rows: feature rows of the test cases
        classifier: classifier configuration
        config: metric settings
        threads (int): worker threads for tree training

    Returns:
        EvaluationReport: test metrics with a per-turbine breakdown

    Raises:
        ValidationError: when train and test share a turbine
    """
    config = config or MetricConfig()
    shared = _turbines(train_rows) & _turbines(test_rows)
    if shared:
        raise ValidationError(f"Train and test rows share turbines {sorted('/'.join(t) for t in shared)}")
    if len(test_rows) == 0:
        raise ValidationError("No test rows to evaluate")
    candidate = choose_bbcv_candidate(train_rows)
    fitted = train(classifier, _with_candidate(train_rows, candidate), threads)
    test_rows = _with_candidate(test_rows, candidate).reset_index(drop=True)
    truth = test_rows["label"].to_numpy(dtype=np.int64)
    predicted = fitted.predict(test_rows)
    turbines = []
    for (park, unit), group in test_rows.groupby(["park", "unit"], sort=True):
        turbines.append(
            TurbineResult(
                park=str(park),
                unit=str(unit),
                metrics=metrics_block(truth[group.index], predicted[group.index], config.beta, config.averaging),
            )
        )
    block = metrics_block(truth, predicted, config.beta, config.averaging)
    logger.info(f"Transfer {classifier.label}: F_{config.beta:g} = {block.headline.f_beta:.4f} on {len(truth)} test rows")
    return EvaluationReport(
        mode="transfer",
        beta=config.beta,
        averaging=config.averaging,
        config={
            "metrics": config.model_dump(),
            "classifiers": [classifier.model_dump()],
            "n_train": len(train_rows),
            "n_test": len(test_rows),
        },
        models=[
            ModelReport(
                model=classifier.label,
                kind=classifier.kind,
                metrics=block,
                bbcv_column=candidate,
                turbines=turbines,
                predicted=predicted.tolist(),
            )
        ],
    )


def merge_reports(reports: Sequence[EvaluationReport]) -> EvaluationReport:
    """Combine single-model reports of one protocol into one report."""
    if not reports:
        raise ValidationError("No reports to merge")
    first = reports[0]
    for report in reports[1:]:
        if (report.mode, report.beta, report.averaging) != (first.mode, first.beta, first.averaging):
            raise ValidationError("Reports of different protocols cannot be merged")
    merged = first.model_copy(deep=True)
    merged.models = [m for report in reports for m in report.models]
    merged.config["classifiers"] = [c for report in reports for c in report.config.get("classifiers", [])]
    return merged


def transfer_evaluate_all(
    train_rows: pd.DataFrame,
    test_rows: pd.DataFrame,
    classifiers: Sequence[ClassifierConfig],
    config: Optional[MetricConfig] = None,
    threads: Optional[int] = None,
) -> EvaluationReport:
    """transfer_evaluate for every classifier plus the Above-One baseline, merged in order."""
    return merge_reports(
        [transfer_evaluate(train_rows, test_rows, c, config, threads) for c in _with_baseline(classifiers)]
    )


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _metrics_table(rows: List[Tuple[str, AggregateMetrics]], beta: float) -> List[str]:
    lines = [
        f"| Model | F_{beta:g} score | F_1 score | Precision | Recall |",
        "|---|---|---|---|---|",
    ]
    for name, m in rows:
        lines.append(f"| {name} | {_fmt(m.f_beta)} | {_fmt(m.f1)} | {_fmt(m.precision)} | {_fmt(m.recall)} |")
    return lines


def render_markdown(report: EvaluationReport) -> str:
    """Markdown rendering of a report (F_beta, F_1, Precision, Recall columns)."""
    title = "Cross-validation" if report.mode == "cv" else "Transfer evaluation"
    lines = [
        f"# {title} results",
        "",
        f"Headline averaging: `{report.averaging}`, beta = {report.beta:g}.",
        "",
    ]
    lines += _metrics_table([(m.model, m.metrics.headline) for m in report.models], report.beta)
    lines += [
        "",
        "Other aggregates (F_beta of mean precision/recall in the last column):",
        "",
        f"| Model | Averaging | F_{report.beta:g} score | F_1 score | Precision | Recall | F_beta of means |",
        "|---|---|---|---|---|---|---|",
    ]
    for m in report.models:
        for mode, agg in m.metrics.aggregates.items():
            lines.append(
                f"| {m.model} | {mode} | {_fmt(agg.f_beta)} | {_fmt(agg.f1)} | "
                f"{_fmt(agg.precision)} | {_fmt(agg.recall)} | {_fmt(agg.f_beta_of_means)} |"
            )
    for m in report.models:
        lines += ["", f"## {m.model}", ""]
        if m.bbcv_column:
            lines += [f"bbcv column: `{m.bbcv_column}`", ""]
        lines += ["| Class | Support | Precision | Recall | F_beta | F_1 |", "|---|---|---|---|---|---|"]
        for c in m.metrics.per_class:
            lines.append(f"| {c.name} | {c.support} | {_fmt(c.precision)} | {_fmt(c.recall)} | {_fmt(c.f_beta)} | {_fmt(c.f1)} |")
        names = [FaultClass(c).display_name for c in CLASS_CODES]
        lines += ["", "Confusion matrix (rows: true, columns: predicted):", "", "| | " + " | ".join(names) + " |", "|---" * (len(names) + 1) + "|"]
        for name, counts in zip(names, m.metrics.confusion):
            lines.append(f"| {name} | " + " | ".join(str(v) for v in counts) + " |")
        if m.folds:
            lines += [""]
            lines += _metrics_table([(f"fold {f.fold + 1}", f.metrics.headline) for f in m.folds], report.beta)
        if m.turbines:
            lines += [""]
            lines += _metrics_table([(f"{t.park}/{t.unit}", t.metrics.headline) for t in m.turbines], report.beta)
    lines += [
        "",
        "Scores above 1.0 are anomalous by detector calibration at alpha = 0.001; "
        "the Above-One baseline relies on that calibration holding on every turbine.",
        "",
    ]
    return "\n".join(lines)


ReportLike = Union[EvaluationReport, Dict[str, Any]]


def load_report(data: ReportLike) -> EvaluationReport:
    if isinstance(data, EvaluationReport):
        return data
    try:
        return EvaluationReport.model_validate(data)
    except pydantic.ValidationError as e:
        raise ValidationError(f"Invalid evaluation report: {e}") from e
