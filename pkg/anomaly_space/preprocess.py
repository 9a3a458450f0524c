#!/usr/bin/env python3
"""
Data preparation: from anomaly records to a dense, labeled base table.

Steps, in order:
1. drop records outside the normal operating mode
2. pivot records onto the per-entity 10-minute grid (one column per detector
   output; bbcv sub-features become bbcv__<name> candidate columns)
3. forward fill up to 18 grid steps (3 hours) after the last observation,
   remaining gaps become 0.0
4. label rows from the fault frames
5. keep the bbcv candidate with the largest variance on the fit rows as
   bbcv_base
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from .domain import GRID_SECONDS, Detector, FaultClass, FaultFrame, validate_fault_frames
from .errors import ValidationError
from .features import BASE_CANDIDATE_PREFIX
from .storage import KEY_COLUMNS

logger = logging.getLogger(__name__)

FILL_HORIZON_STEPS = 18
ENTITY_COLUMNS = ["park", "unit", "component"]
BASE_TABLE_COLUMNS = KEY_COLUMNS + ["bbcv_base", "tuplet_base", "label"]
DEFAULT_BBCV_FEATURE = "score"


@dataclass
class BbcvSelection:
    """The bbcv candidate kept as bbcv_base and the variances it was chosen on."""

    column: Optional[str]
    index: int
    variances: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"column": self.column, "index": self.index, "variances": self.variances}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BbcvSelection":
        return cls(data.get("column"), int(data.get("index", -1)), dict(data.get("variances", {})))


def filter_operating_mode(records: pd.DataFrame) -> pd.DataFrame:
    """Remove records taken outside the normal operating mode."""
    kept = records[records["operating"].astype(bool)]
    dropped = len(records) - len(kept)
    if dropped:
        logger.info(f"Dropped {dropped} of {len(records)} records outside the operating mode")
    return kept.reset_index(drop=True)


def assign_labels(rows: pd.DataFrame, frames: Sequence[FaultFrame]) -> np.ndarray:
    """
    Label grid rows from fault frames.

    A row (entity, ts) gets a frame's class iff the entity matches and
    start <= ts < end; every other row is Normal.

    Args:
        rows: DataFrame with ts, park, unit, component
        frames: validated fault frames

    Returns:
        np.ndarray: integer class codes, one per row
    """
    labels = np.full(len(rows), int(FaultClass.NORMAL), dtype=np.int64)
    ts = pd.to_datetime(rows["ts"], utc=True)
    for frame in frames:
        mask = (
            (rows["park"].to_numpy() == frame.id.park)
            & (rows["unit"].to_numpy() == frame.id.unit)
            & (rows["component"].to_numpy() == frame.id.component)
            & (ts >= pd.Timestamp(frame.start)).to_numpy()
            & (ts < pd.Timestamp(frame.end)).to_numpy()
        )
        labels[mask] = int(frame.fault)
    return labels


def forward_fill(series: pd.Series, horizon: int = FILL_HORIZON_STEPS) -> pd.Series:
    """
    Time-based forward fill on a gap-marked grid series.

    Missing points (NaN) within `horizon` grid steps after the most recent
    observation take that observation's value; all remaining gaps,
    including leading ones, become 0.0. Observed values are never changed.
    """
    if horizon < 0:
        raise ValidationError(f"Fill horizon must be >= 0, got {horizon}")
    filled = series.ffill(limit=horizon) if horizon > 0 else series
    return filled.fillna(0.0)


def reduce_bbcv_columns(columns: pd.DataFrame, fit_rows: Optional[Iterable[bool]] = None) -> BbcvSelection:
    """
    Keep the bbcv column with the largest population variance on the fit rows.

    Args:
        columns: one column per bbcv candidate, in candidate order
        fit_rows: boolean mask selecting the rows the variance is computed on
            (all rows when None)

    Returns:
        BbcvSelection: chosen column (ties go to the lowest column index)
    """
    if columns.shape[1] == 0:
        raise ValidationError("At least one bbcv column is required")
    data = columns if fit_rows is None else columns[np.asarray(list(fit_rows), dtype=bool)]
    if len(data) == 0:
        raise ValidationError("No fit rows to compute bbcv column variances on")
    variances = data.to_numpy(dtype=np.float64).var(axis=0)
    index = int(np.argmax(variances))
    name = str(columns.columns[index])
    return BbcvSelection(
        column=name,
        index=index,
        variances={str(c): float(v) for c, v in zip(columns.columns, variances)},
    )


def _column_name(detector: str, feature: str) -> str:
    if detector == Detector.TUPLET.value:
        return "tuplet"
    return BASE_CANDIDATE_PREFIX + (feature or DEFAULT_BBCV_FEATURE)


def pivot_records(records: pd.DataFrame) -> pd.DataFrame:
    """
    Pivot anomaly records into one column per detector output.

    Raises:
        ValidationError: off-grid timestamps or duplicate records for one key
    """
    ts = pd.to_datetime(records["ts"], utc=True)
    off_grid = (ts.dt.second != 0) | (ts.dt.minute % 10 != 0) | (ts.dt.microsecond != 0)
    if off_grid.any():
        raise ValidationError(f"Record at {ts[off_grid].iloc[0]} is not on the 10-minute grid")
    frame = records.assign(
        ts=ts,
        column=[_column_name(d, f) for d, f in zip(records["detector"], records["feature"])],
    )
    keys = KEY_COLUMNS + ["column"]
    duplicated = frame.duplicated(keys, keep=False)
    if duplicated.any():
        first = frame[duplicated].iloc[0]
        raise ValidationError(
            f"Duplicate records for {first['park']}/{first['unit']}/{first['component']} "
            f"{first['column']} at {first['ts']}"
        )
    return frame.pivot(index=KEY_COLUMNS, columns="column", values="score")


def assemble_base_table(filled: pd.DataFrame, labels: Sequence[int]) -> pd.DataFrame:
    """
    Combine filled detector columns and labels into the base table.

    Args:
        filled: dense columns indexed by (ts, park, unit, component); must
            contain "tuplet" and may contain bbcv__<name> columns
        labels: class codes aligned with filled

    Returns:
        DataFrame: ts, park, unit, component, bbcv_base, tuplet_base, label and
        the bbcv candidates; bbcv_base is 0.0 until a selection is applied
    """
    if len(labels) != len(filled):
        raise ValidationError(f"{len(labels)} labels for {len(filled)} grid rows")
    if filled.isna().any().any():
        raise ValidationError("Detector columns are misaligned with the grid (missing values remain)")
    table = filled.reset_index()
    per_entity = table.groupby(ENTITY_COLUMNS)["ts"]
    steps = per_entity.diff().dropna().dt.total_seconds()
    if (steps != GRID_SECONDS).any():
        raise ValidationError("Detector columns are misaligned with the 10-minute grid")
    candidates = sorted(c for c in table.columns if c.startswith(BASE_CANDIDATE_PREFIX))
    out = table[KEY_COLUMNS].copy()
    out["bbcv_base"] = 0.0
    out["tuplet_base"] = table["tuplet"].astype(float) if "tuplet" in table.columns else 0.0
    out["label"] = np.asarray(labels, dtype=np.int64)
    for name in candidates:
        out[name] = table[name].astype(float)
    return out


def apply_selection(base_table: pd.DataFrame, selection: BbcvSelection) -> pd.DataFrame:
    """Set bbcv_base from the selected candidate column."""
    out = base_table.copy()
    out["bbcv_base"] = out[selection.column].astype(float) if selection.column else 0.0
    return out


def build_base_table(
    records: pd.DataFrame,
    frames: Sequence[FaultFrame],
    fill_horizon: int = FILL_HORIZON_STEPS,
    fit_turbines: Optional[Set[Tuple[str, str]]] = None,
) -> Tuple[pd.DataFrame, BbcvSelection]:
    """
    Run the full preparation stage on anomaly records.

    Args:
        records: anomaly records (see storage.read_anomaly_records)
        frames: fault frames used for labeling
        fill_horizon (int): forward-fill horizon in grid steps
        fit_turbines: (park, unit) pairs whose rows fit the bbcv column
            choice; all rows when None

    Returns:
        tuple: (base table, bbcv selection)
    """
    frames = validate_fault_frames(frames)
    if records.empty:
        raise ValidationError("No anomaly records to preprocess")
    ts = pd.to_datetime(records["ts"], utc=True)
    start = ts.min()
    end = ts.max() + pd.Timedelta(seconds=GRID_SECONDS)
    grid = pd.date_range(start, end, freq=f"{GRID_SECONDS}s", inclusive="left")
    entities = records[ENTITY_COLUMNS].drop_duplicates().sort_values(ENTITY_COLUMNS)

    wide = pivot_records(filter_operating_mode(records))
    columns = sorted(set(wide.columns) | {"tuplet"})
    index = pd.MultiIndex.from_tuples(
        [(t, p, u, c) for p, u, c in entities.itertuples(index=False) for t in grid],
        names=KEY_COLUMNS,
    )
    wide = wide.reindex(index=index, columns=columns)
    filled = wide.groupby(level=ENTITY_COLUMNS, sort=False).transform(
        lambda s: forward_fill(s, fill_horizon)
    )
    logger.info(
        f"Filled {int(wide.isna().sum().sum())} missing values over {len(entities)} entities "
        f"and {len(grid)} grid steps (horizon {fill_horizon})"
    )
    labels = assign_labels(filled.index.to_frame(index=False), frames)
    table = assemble_base_table(filled, labels)

    candidates = [c for c in table.columns if c.startswith(BASE_CANDIDATE_PREFIX)]
    if not candidates:
        logger.warning("No bbcv records found, bbcv_base stays 0.0")
        return table, BbcvSelection(column=None, index=-1)
    fit_mask = None
    if fit_turbines is not None:
        fit_mask = [(p, u) in fit_turbines for p, u in zip(table["park"], table["unit"])]
    selection = reduce_bbcv_columns(table[candidates], fit_mask)
    logger.info(f"Kept bbcv column '{selection.column}' (variances {selection.variances})")
    return apply_selection(table, selection), selection
