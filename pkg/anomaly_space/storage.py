#!/usr/bin/env python3
"""
File formats of the pipeline artifacts.

Every intermediate artifact is a plain file so each stage can be inspected
on its own:
- fault frames: JSON array
- dataset splits: JSON object {"train": [...], "test": [...]}
- anomaly records, base tables and feature tables: CSV (UTF-8, LF, "." decimal)
- calibrations, selections, models and reports: JSON

All writes go to a temporary file in the target directory that is renamed
into place, so readers never observe half-written files.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from .domain import (
    AnomalyRecord,
    DatasetSplit,
    Detector,
    EntityId,
    FaultClass,
    FaultFrame,
    format_timestamp,
    validate_fault_frames,
)
from .errors import DataFormatError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

KEY_COLUMNS = ["ts", "park", "unit", "component"]
RECORD_COLUMNS = KEY_COLUMNS + ["detector", "score", "operating"]
RECORD_COLUMNS_WITH_FEATURE = RECORD_COLUMNS + ["feature"]
TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write payload to path via a temporary file and rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(data: Any, path: PathLike) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"Invalid JSON in {path}: {e}")


def format_ts_column(values: pd.Series) -> pd.Series:
    return pd.to_datetime(values, utc=True).dt.strftime(TS_FORMAT)


def parse_ts_column(values: pd.Series, path: PathLike) -> pd.Series:
    try:
        return pd.to_datetime(values, utc=True, format="ISO8601")
    except (ValueError, TypeError) as e:
        raise DataFormatError(f"Invalid timestamp in {path}: {e}")


def write_table(frame: pd.DataFrame, path: PathLike) -> None:
    """Write a table as CSV with ISO timestamps and LF line endings."""
    out = frame.copy()
    if "ts" in out.columns:
        out["ts"] = format_ts_column(out["ts"])
    if "operating" in out.columns:
        out["operating"] = np.where(out["operating"].astype(bool), "true", "false")
    atomic_write_text(path, out.to_csv(index=False, lineterminator="\n"))


def read_table(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    """
    Read a CSV artifact and check its header.

    Args:
        path: CSV file
        required: columns that must be present (extra columns are kept)

    Returns:
        DataFrame with a parsed UTC "ts" column when present

    Raises:
        DataFormatError: unreadable file or missing columns
    """
    try:
        frame = pd.read_csv(
            path, dtype={"park": str, "unit": str, "component": str}, keep_default_na=False,
            na_values=[""],
        )
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"Could not parse {path}: {e}")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataFormatError(f"{path} is missing columns {missing}")
    if "ts" in frame.columns:
        frame["ts"] = parse_ts_column(frame["ts"], path)
    return frame


def records_to_frame(records: Iterable[AnomalyRecord]) -> pd.DataFrame:
    """Convert anomaly records into the tabular record layout."""
    rows = [
        {
            "ts": record.ts,
            "park": record.id.park,
            "unit": record.id.unit,
            "component": record.id.component,
            "detector": record.detector.value,
            "score": float(record.score),
            "operating": bool(record.operating),
            "feature": record.feature,
        }
        for record in records
    ]
    frame = pd.DataFrame(rows, columns=RECORD_COLUMNS_WITH_FEATURE)
    frame["ts"] = pd.to_datetime(frame["ts"], utc=True)
    return frame


def frame_to_records(frame: pd.DataFrame) -> List[AnomalyRecord]:
    """Convert the tabular record layout back into validated AnomalyRecords."""
    features = frame["feature"] if "feature" in frame.columns else [""] * len(frame)
    return [
        AnomalyRecord(
            ts=ts.to_pydatetime(),
            id=EntityId(park, unit, component),
            detector=Detector(detector),
            score=float(score),
            operating=bool(operating),
            feature="" if pd.isna(feature) else str(feature),
        )
        for ts, park, unit, component, detector, score, operating, feature in zip(
            frame["ts"], frame["park"], frame["unit"], frame["component"],
            frame["detector"], frame["score"], frame["operating"], features,
        )
    ]


def write_anomaly_records(frame: pd.DataFrame, path: PathLike) -> None:
    """Write records as ts,park,unit,component,detector,score,operating,feature."""
    out = frame.copy()
    if "feature" not in out.columns:
        out["feature"] = ""
    write_table(out[RECORD_COLUMNS_WITH_FEATURE], path)


def _parse_bool_column(values: pd.Series, path: PathLike) -> pd.Series:
    if values.dtype == bool:
        return values
    text = values.astype(str).str.strip().str.lower()
    bad = ~text.isin(["true", "false", "1", "0"])
    if bad.any():
        raise DataFormatError(
            f"Invalid operating flag {values[bad].iloc[0]!r} in {path}"
        )
    return text.isin(["true", "1"])


def read_anomaly_records(path: PathLike) -> pd.DataFrame:
    """
    Read an anomaly-record CSV.

    The trailing feature column is optional so that plain
    ts,park,unit,component,detector,score,operating files are accepted.
    """
    frame = read_table(path, RECORD_COLUMNS)
    if "feature" not in frame.columns:
        frame["feature"] = ""
    frame["feature"] = frame["feature"].fillna("").astype(str)
    detectors = set(frame["detector"].unique())
    unknown = detectors - {d.value for d in Detector}
    if unknown:
        raise DataFormatError(f"Unknown detectors {sorted(unknown)} in {path}")
    scores = pd.to_numeric(frame["score"], errors="coerce")
    if scores.isna().any() or not np.isfinite(scores).all() or (scores < 0).any():
        raise DataFormatError(f"Scores in {path} must be finite and >= 0")
    frame["score"] = scores.astype(float)
    frame["operating"] = _parse_bool_column(frame["operating"], path)
    logger.info(f"Read {len(frame)} anomaly records from {path}")
    return frame[RECORD_COLUMNS_WITH_FEATURE]


def fault_frame_to_dict(frame: FaultFrame) -> Dict[str, Any]:
    return {
        "park": frame.id.park,
        "unit": frame.id.unit,
        "component": frame.id.component,
        "fault_type": frame.fault.fault_type,
        "start": format_timestamp(frame.start),
        "end": format_timestamp(frame.end),
        "case_no": frame.case_no,
    }


def fault_frame_from_dict(item: Dict[str, Any]) -> FaultFrame:
    try:
        return FaultFrame(
            id=EntityId(item["park"], item["unit"], item["component"]),
            fault=FaultClass.from_fault_type(item["fault_type"]),
            start=item["start"],
            end=item["end"],
            case_no=int(item["case_no"]),
        )
    except KeyError as e:
        raise DataFormatError(f"Fault frame is missing field {e}")


def write_fault_frames(frames: Sequence[FaultFrame], path: PathLike) -> None:
    write_json([fault_frame_to_dict(f) for f in validate_fault_frames(frames)], path)


def read_fault_frames(path: PathLike) -> List[FaultFrame]:
    data = read_json(path)
    if not isinstance(data, list):
        raise DataFormatError(f"{path} must contain a JSON array of fault frames")
    return validate_fault_frames(fault_frame_from_dict(item) for item in data)


def write_splits(splits: Sequence[DatasetSplit], path: PathLike) -> None:
    write_json({split.role: list(split.cases) for split in splits}, path)


def read_splits(path: PathLike) -> List[DatasetSplit]:
    data = read_json(path)
    if not isinstance(data, dict):
        raise DataFormatError(f"{path} must contain an object keyed by split role")
    try:
        return [DatasetSplit(role, tuple(cases)) for role, cases in sorted(data.items())]
    except (TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise DataFormatError(f"Invalid split definition in {path}: {e}")
