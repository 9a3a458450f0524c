#!/usr/bin/env python3
"""
Sliding-window feature extraction on the base table.

Each entity's two base columns (bbcv_base, tuplet_base) are expanded with a
trend-certainty flag from the Mann-Kendall test and the window variance, which
gives the six features used by the classifiers:

    bbcv_base, tuplet_base, bbcv_tc, bbcv_var, tuplet_tc, tuplet_var

Windows that only contain values below 1.0 get (tc, var) = (0, 0.0).
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import norm

from .domain import EntityId, FaultClass
from .errors import ValidationError
from .runtime import ordered_map
from .storage import KEY_COLUMNS

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 144
DEFAULT_STRIDE = 1
TREND_ALPHA = 0.001

FEATURE_COLUMNS = [
    "bbcv_base",
    "tuplet_base",
    "bbcv_tc",
    "bbcv_var",
    "tuplet_tc",
    "tuplet_var",
]
FEATURE_TABLE_COLUMNS = KEY_COLUMNS + FEATURE_COLUMNS + ["label"]
SCALED_COLUMNS = ["bbcv_base", "tuplet_base", "bbcv_var", "tuplet_var"]
BASE_ONLY_SCALED_COLUMNS = ["bbcv_base", "tuplet_base"]

BASE_CANDIDATE_PREFIX = "bbcv__"
FEATURE_CANDIDATE_PREFIXES = ("bbcv_base__", "bbcv_tc__", "bbcv_var__")

_BATCH = 256


@dataclass(frozen=True)
class MannKendallResult:
    """Mann-Kendall statistics; p_pos is the one-sided p-value for a positive trend."""

    s: int
    var_s: float
    z: float
    p_pos: float


@dataclass(frozen=True)
class FeatureRow:
    """One classifier input row keyed by entity and window-end timestamp."""

    id: EntityId
    ts: pd.Timestamp
    bbcv_base: float
    tuplet_base: float
    bbcv_tc: int
    bbcv_var: float
    tuplet_tc: int
    tuplet_var: float
    label: FaultClass

    def values(self) -> List[float]:
        return [float(getattr(self, name)) for name in FEATURE_COLUMNS]


def _pair_sign_sums(windows: np.ndarray) -> np.ndarray:
    """S = sum over i<j of sgn(x_j - x_i) for every row of windows."""
    n = windows.shape[1]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    sums = np.empty(windows.shape[0], dtype=np.int64)
    for lo in range(0, windows.shape[0], _BATCH):
        chunk = windows[lo:lo + _BATCH]
        signs = np.sign(chunk[:, None, :] - chunk[:, :, None])
        sums[lo:lo + _BATCH] = signs[:, upper].sum(axis=1).astype(np.int64)
    return sums


def _tie_corrections(windows: np.ndarray) -> np.ndarray:
    """Sum of t(t-1)(2t+5) over tie groups of every row."""
    ordered = np.sort(windows, axis=1)
    has_ties = (ordered[:, 1:] == ordered[:, :-1]).any(axis=1)
    corrections = np.zeros(windows.shape[0], dtype=np.float64)
    for row in np.flatnonzero(has_ties):
        _, counts = np.unique(ordered[row], return_counts=True)
        t = counts[counts > 1].astype(np.float64)
        corrections[row] = np.sum(t * (t - 1) * (2 * t + 5))
    return corrections


def mann_kendall_batch(windows: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Mann-Kendall statistics for every row of a 2-D array.

    Args:
        windows (np.ndarray): shape (m, n) with n >= 4

    Returns:
        tuple: (S, var_S, Z, p_pos) arrays of length m
    """
    windows = np.asarray(windows, dtype=np.float64)
    m, n = windows.shape
    s = _pair_sign_sums(windows)
    var_s = (n * (n - 1) * (2 * n + 5) - _tie_corrections(windows)) / 18.0
    z = np.zeros(m, dtype=np.float64)
    valid = var_s > 0
    pos = valid & (s > 0)
    neg = valid & (s < 0)
    z[pos] = (s[pos] - 1) / np.sqrt(var_s[pos])
    z[neg] = (s[neg] + 1) / np.sqrt(var_s[neg])
    p_pos = norm.sf(z)
    return s, var_s, z, p_pos


def mann_kendall(x: Sequence[float]) -> MannKendallResult:
    """
    Tie-corrected Mann-Kendall trend test with continuity correction.

    Args:
        x: at least 4 finite values in time order

    Returns:
        MannKendallResult: S, var(S), Z and the one-sided p-value for a
        positive trend
    """
    values = np.asarray(x, dtype=np.float64)
    if values.ndim != 1 or values.size < 4:
        raise ValidationError(f"Mann-Kendall needs at least 4 values, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("Mann-Kendall input must be finite")
    s, var_s, z, p = mann_kendall_batch(values[None, :])
    return MannKendallResult(s=int(s[0]), var_s=float(var_s[0]), z=float(z[0]), p_pos=float(p[0]))


def trend_certainty(p_pos: float, alpha: float = TREND_ALPHA) -> int:
    """1 if the positive-trend p-value is below alpha (strictly), else 0."""
    if not 0.0 <= p_pos <= 1.0:
        raise ValidationError(f"p-value must lie in [0, 1], got {p_pos}")
    return 1 if p_pos < alpha else 0


def window_features(
    series: Sequence[float],
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    alpha: float = TREND_ALPHA,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Trend-certainty and variance of every full window of a series.

    Args:
        series: values of one base column of one entity, in time order
        window (int): window length in grid steps
        stride (int): step between window ends
        alpha (float): trend-certainty significance level

    Returns:
        tuple: (end_index, tc, var); end_index is the position of each
        window's last value. Empty arrays if the series is shorter than
        the window.
    """
    if window < 4:
        raise ValidationError(f"Window must be at least 4, got {window}")
    if stride < 1:
        raise ValidationError(f"Stride must be at least 1, got {stride}")
    values = np.asarray(series, dtype=np.float64)
    if values.size < window:
        empty = np.zeros(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty
    windows = sliding_window_view(values, window)[::stride]
    end_index = np.arange(window - 1, values.size, stride, dtype=np.int64)
    tc = np.zeros(len(windows), dtype=np.int64)
    var = np.zeros(len(windows), dtype=np.float64)
    active = np.flatnonzero(windows.max(axis=1) >= 1.0)
    if active.size:
        selected = windows[active]
        _, _, _, p_pos = mann_kendall_batch(selected)
        tc[active] = (p_pos < alpha).astype(np.int64)
        var[active] = selected.var(axis=1)
    return end_index, tc, var


@dataclass
class MinMaxScaler:
    """Per-column min-max scaling fitted on training rows."""

    columns: List[str]
    mins: List[float]
    maxs: List[float]

    def transform_array(self, values: np.ndarray, columns: Sequence[str]) -> np.ndarray:
        """Scale the fitted columns of a 2-D array laid out as columns; others pass through."""
        out = np.array(values, dtype=np.float64, copy=True)
        for name, lo, hi in zip(self.columns, self.mins, self.maxs):
            j = list(columns).index(name)
            span = hi - lo
            out[:, j] = 0.0 if span == 0 else (out[:, j] - lo) / span
        return out

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        out = frame.copy()
        for name, lo, hi in zip(self.columns, self.mins, self.maxs):
            span = hi - lo
            out[name] = 0.0 if span == 0 else (out[name].astype(float) - lo) / span
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"columns": list(self.columns), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MinMaxScaler":
        return cls(list(data["columns"]), [float(v) for v in data["mins"]], [float(v) for v in data["maxs"]])


def fit_minmax(rows: pd.DataFrame, columns: Optional[Sequence[str]] = None) -> MinMaxScaler:
    """
    Fit a min-max scaler on training rows.

    Args:
        rows: training feature rows
        columns: columns to scale (default: both base and both variance columns)

    Returns:
        MinMaxScaler: fitted per-column min and max
    """
    columns = list(columns or SCALED_COLUMNS)
    if len(rows) < 2:
        raise ValidationError(f"Min-max scaler needs at least 2 training rows, got {len(rows)}")
    values = rows[columns].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("Min-max scaler input must be finite")
    return MinMaxScaler(columns, values.min(axis=0).tolist(), values.max(axis=0).tolist())


def base_candidates(base_table: pd.DataFrame) -> List[str]:
    """Names of the bbcv candidate columns carried by a wide base table."""
    return sorted(c[len(BASE_CANDIDATE_PREFIX):] for c in base_table.columns if c.startswith(BASE_CANDIDATE_PREFIX))


def feature_candidates(features: pd.DataFrame) -> List[str]:
    """Names of the bbcv candidates carried by a feature table."""
    prefix = FEATURE_CANDIDATE_PREFIXES[0]
    return sorted(c[len(prefix):] for c in features.columns if c.startswith(prefix))


def _entity_features(
    group: pd.DataFrame,
    candidates: Sequence[str],
    window: int,
    stride: int,
    alpha: float,
) -> Optional[pd.DataFrame]:
    group = group.sort_values("ts", kind="mergesort")
    if len(group) < window:
        return None
    end_index, bbcv_tc, bbcv_var = window_features(group["bbcv_base"].to_numpy(), window, stride, alpha)
    _, tuplet_tc, tuplet_var = window_features(group["tuplet_base"].to_numpy(), window, stride, alpha)
    ends = group.iloc[end_index]
    out = pd.DataFrame(
        {
            "ts": ends["ts"].to_numpy(),
            "park": ends["park"].to_numpy(),
            "unit": ends["unit"].to_numpy(),
            "component": ends["component"].to_numpy(),
            "bbcv_base": ends["bbcv_base"].to_numpy(dtype=np.float64),
            "tuplet_base": ends["tuplet_base"].to_numpy(dtype=np.float64),
            "bbcv_tc": bbcv_tc,
            "bbcv_var": bbcv_var,
            "tuplet_tc": tuplet_tc,
            "tuplet_var": tuplet_var,
            "label": ends["label"].to_numpy(dtype=np.int64),
        }
    )
    for name in candidates:
        column = group[BASE_CANDIDATE_PREFIX + name].to_numpy(dtype=np.float64)
        _, tc, var = window_features(column, window, stride, alpha)
        out["bbcv_base__" + name] = column[end_index]
        out["bbcv_tc__" + name] = tc
        out["bbcv_var__" + name] = var
    return out


def build_candidate_features(
    base_table: pd.DataFrame,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    alpha: float = TREND_ALPHA,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """
    Window features for the base columns and for every bbcv candidate column.

    Args:
        base_table: dense base table, optionally with bbcv__<name> columns
        window (int): window length (default 144 = one day)
        stride (int): window stride (default 1)
        alpha (float): trend-certainty significance level
        threads (int): worker threads, one entity per task

    Returns:
        DataFrame: the documented feature columns followed by
        bbcv_base__<name>, bbcv_tc__<name>, bbcv_var__<name> per candidate
    """
    if base_table[["bbcv_base", "tuplet_base"]].isna().any().any():
        raise ValidationError("Base table must be dense before feature extraction")
    candidates = base_candidates(base_table)
    groups = [group for _, group in base_table.groupby(["park", "unit", "component"], sort=True)]
    parts = ordered_map(lambda g: _entity_features(g, candidates, window, stride, alpha), groups, threads)
    parts = [p for p in parts if p is not None]
    skipped = len(groups) - len(parts)
    if skipped:
        logger.warning(f"{skipped} entities have fewer than {window} rows and produce no feature rows")
    columns = FEATURE_TABLE_COLUMNS + [
        prefix + name for name in candidates for prefix in FEATURE_CANDIDATE_PREFIXES
    ]
    if not parts:
        return pd.DataFrame(columns=columns)
    features = pd.concat(parts, ignore_index=True)[columns]
    logger.info(
        f"Built {len(features)} feature rows from {len(parts)} entities "
        f"(window={window}, stride={stride}, {len(candidates)} bbcv candidates)"
    )
    return features


def build_feature_rows(
    base_table: pd.DataFrame,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    alpha: float = TREND_ALPHA,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """Feature rows with only the documented columns (see build_candidate_features)."""
    core = base_table.drop(columns=[c for c in base_table.columns if c.startswith(BASE_CANDIDATE_PREFIX)])
    return build_candidate_features(core, window, stride, alpha, threads)


def select_bbcv_candidate(features: pd.DataFrame, name: str) -> pd.DataFrame:
    """Replace the bbcv feature triple by the given candidate's columns."""
    out = features.copy()
    for column, prefix in zip(("bbcv_base", "bbcv_tc", "bbcv_var"), FEATURE_CANDIDATE_PREFIXES):
        source = prefix + name
        if source not in out.columns:
            raise ValidationError(f"Feature table has no bbcv candidate '{name}'")
        out[column] = out[source]
    return out


def to_feature_rows(features: pd.DataFrame) -> List[FeatureRow]:
    """Materialize a feature table as FeatureRow values."""
    return [
        FeatureRow(
            id=EntityId(row.park, row.unit, row.component),
            ts=row.ts,
            bbcv_base=float(row.bbcv_base),
            tuplet_base=float(row.tuplet_base),
            bbcv_tc=int(row.bbcv_tc),
            bbcv_var=float(row.bbcv_var),
            tuplet_tc=int(row.tuplet_tc),
            tuplet_var=float(row.tuplet_var),
            label=FaultClass(int(row.label)),
        )
        for row in features.itertuples(index=False)
    ]
