#!/usr/bin/env python3
"""
Shared domain types for the Anomaly-Space pipeline.

This module defines:
- the entity identifier scheme (park / unit / component)
- the fault classes with their fixed integer codes
- anomaly records and fault frames, the two inputs of the pipeline
- the 10-minute time grid and validation of fault frames and dataset splits
"""

import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Sequence, Set, Tuple, Union

import pandas as pd

from .errors import ValidationError

logger = logging.getLogger(__name__)

GRID_SECONDS = 600
GRID_STEP = timedelta(seconds=GRID_SECONDS)

TimestampLike = Union[datetime, pd.Timestamp, str]


class FaultClass(IntEnum):
    """Diagnosis classes. The integer codes are serialized with every model."""

    NORMAL = 0
    BEARING_FAULT = 1
    SENSOR_FAULT = 2

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @classmethod
    def from_fault_type(cls, fault_type: str) -> "FaultClass":
        """Map the fault-frame file vocabulary ("bearing", "sensor") to a class."""
        try:
            return _FAULT_TYPES[fault_type]
        except KeyError:
            raise ValidationError(
                f"Unknown fault_type '{fault_type}', expected 'bearing' or 'sensor'"
            )

    @property
    def fault_type(self) -> str:
        for name, value in _FAULT_TYPES.items():
            if value is self:
                return name
        raise ValidationError("Normal has no fault_type")


_DISPLAY_NAMES = {
    FaultClass.NORMAL: "Normal",
    FaultClass.BEARING_FAULT: "BearingFault",
    FaultClass.SENSOR_FAULT: "SensorFault",
}
_FAULT_TYPES = {
    "bearing": FaultClass.BEARING_FAULT,
    "sensor": FaultClass.SENSOR_FAULT,
}

CLASS_CODES: Tuple[int, ...] = tuple(int(c) for c in FaultClass)
FAULT_CLASS_CODES: Tuple[int, ...] = (
    int(FaultClass.BEARING_FAULT),
    int(FaultClass.SENSOR_FAULT),
)


class Detector(str, Enum):
    """The two detectors spanning the Anomaly-Space."""

    TUPLET = "tuplet"
    BBCV = "bbcv"


def to_utc(ts: TimestampLike) -> datetime:
    """
    Convert a timestamp-like value into an aware UTC datetime.

    Args:
        ts: datetime, pandas Timestamp or ISO-8601 string

    Returns:
        datetime: timezone-aware UTC datetime
    """
    try:
        stamp = pd.Timestamp(ts)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"Invalid timestamp {ts!r}: {e}")
    if stamp.tzinfo is None:
        stamp = stamp.tz_localize("UTC")
    return stamp.tz_convert("UTC").to_pydatetime()


def is_on_grid(ts: datetime) -> bool:
    return ts.second == 0 and ts.microsecond == 0 and ts.minute % 10 == 0


def ensure_on_grid(ts: TimestampLike, what: str = "timestamp") -> datetime:
    """Return ts as UTC datetime, raising if it is not on the 10-minute grid."""
    value = to_utc(ts)
    if not is_on_grid(value):
        raise ValidationError(f"{what} {format_timestamp(value)} is not on the 10-minute grid")
    return value


def format_timestamp(ts: datetime) -> str:
    """Format as ISO-8601 UTC with a trailing Z, e.g. 2023-01-01T00:00:00Z."""
    return to_utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_time_grid(start: TimestampLike, end: TimestampLike) -> List[datetime]:
    """
    Build all 10-minute grid points in [start, end).

    Args:
        start: first grid point (inclusive)
        end: end of the range (exclusive)

    Returns:
        list: strictly increasing UTC datetimes with a 600 s step
    """
    start_ts = ensure_on_grid(start, "start")
    end_ts = ensure_on_grid(end, "end")
    if start_ts >= end_ts:
        raise ValidationError(
            f"Grid start {format_timestamp(start_ts)} must precede end {format_timestamp(end_ts)}"
        )
    steps = int((end_ts - start_ts).total_seconds()) // GRID_SECONDS
    return [start_ts + i * GRID_STEP for i in range(steps)]


@dataclass(frozen=True, order=True)
class EntityId:
    """Identifier of one monitored component of one turbine."""

    park: str
    unit: str
    component: str

    def __post_init__(self):
        for name in ("park", "unit", "component"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValidationError(f"EntityId.{name} must be a non-empty string")

    @property
    def turbine(self) -> Tuple[str, str]:
        return (self.park, self.unit)

    def __str__(self) -> str:
        return f"{self.park}/{self.unit}/{self.component}"

    @classmethod
    def parse(cls, text: str) -> "EntityId":
        parts = text.split("/")
        if len(parts) != 3:
            raise ValidationError(f"Entity '{text}' must look like park/unit/component")
        return cls(*parts)


@dataclass(frozen=True)
class AnomalyRecord:
    """One detector score for one component at one grid timestamp."""

    ts: datetime
    id: EntityId
    detector: Detector
    score: float
    operating: bool = True
    feature: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ts", ensure_on_grid(self.ts, "record ts"))
        object.__setattr__(self, "detector", Detector(self.detector))
        if not math.isfinite(self.score) or self.score < 0:
            raise ValidationError(
                f"Score for {self.id} at {format_timestamp(self.ts)} must be finite and >= 0, got {self.score}"
            )

    @property
    def is_anomalous(self) -> bool:
        return self.score > 1.0


@dataclass(frozen=True)
class FaultFrame:
    """A labeled fault interval [start, end) for one component."""

    id: EntityId
    fault: FaultClass
    start: datetime
    end: datetime
    case_no: int

    def __post_init__(self):
        object.__setattr__(self, "fault", FaultClass(self.fault))
        object.__setattr__(self, "start", ensure_on_grid(self.start, f"Fault frame {self.case_no} start"))
        object.__setattr__(self, "end", ensure_on_grid(self.end, f"Fault frame {self.case_no} end"))

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts < self.end


@dataclass(frozen=True)
class DatasetSplit:
    """A named set of fault cases (train or test)."""

    role: str
    cases: Tuple[int, ...]

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise ValidationError(f"Split role must be 'train' or 'test', got '{self.role}'")
        object.__setattr__(self, "cases", tuple(sorted(int(c) for c in self.cases)))


def validate_fault_frames(frames: Iterable[FaultFrame]) -> List[FaultFrame]:
    """
    Validate fault frames and return them sorted by (entity, start).

    Args:
        frames: fault frames in any order

    Returns:
        list: the same frames sorted by (EntityId, start)

    Raises:
        ValidationError: inverted/empty interval, Normal class, or overlapping
            frames for the same entity; the message names the case_no
    """
    ordered = sorted(frames, key=lambda f: (f.id, f.start, f.case_no))
    for frame in ordered:
        if frame.fault == FaultClass.NORMAL:
            raise ValidationError(f"Fault frame of case {frame.case_no} cannot be Normal")
        if frame.start >= frame.end:
            raise ValidationError(
                f"Fault frame of case {frame.case_no} has start >= end "
                f"({format_timestamp(frame.start)} >= {format_timestamp(frame.end)})"
            )
    for previous, current in zip(ordered, ordered[1:]):
        if previous.id == current.id and current.start < previous.end:
            raise ValidationError(
                f"Fault frames of cases {previous.case_no} and {current.case_no} overlap on {current.id}"
            )
    return ordered


def validate_splits(splits: Sequence[DatasetSplit]) -> Dict[str, DatasetSplit]:
    """Check that train and test case sets are disjoint and index splits by role."""
    by_role: Dict[str, DatasetSplit] = {}
    for split in splits:
        if split.role in by_role:
            raise ValidationError(f"Duplicate split role '{split.role}'")
        by_role[split.role] = split
    train = set(by_role["train"].cases) if "train" in by_role else set()
    test = set(by_role["test"].cases) if "test" in by_role else set()
    shared = train & test
    if shared:
        raise ValidationError(f"Cases {sorted(shared)} appear in both train and test splits")
    return by_role


def turbines_for_cases(
    frames: Sequence[FaultFrame], cases: Iterable[int]
) -> Set[Tuple[str, str]]:
    """Resolve case numbers to the (park, unit) turbines they occurred on."""
    wanted = set(cases)
    known = {frame.case_no for frame in frames}
    missing = wanted - known
    if missing:
        raise ValidationError(f"Split references unknown cases {sorted(missing)}")
    return {frame.id.turbine for frame in frames if frame.case_no in wanted}


def split_turbines(
    frames: Sequence[FaultFrame], splits: Sequence[DatasetSplit]
) -> Dict[str, Set[Tuple[str, str]]]:
    """
    Resolve a train/test split to disjoint turbine sets.

    Raises:
        ValidationError: when a turbine carries cases from both splits
    """
    by_role = validate_splits(splits)
    resolved = {
        role: turbines_for_cases(frames, split.cases) for role, split in by_role.items()
    }
    shared = resolved.get("train", set()) & resolved.get("test", set())
    if shared:
        raise ValidationError(
            f"Turbines {sorted('/'.join(t) for t in shared)} appear in both train and test"
        )
    return resolved
