#!/usr/bin/env python3
"""
Synthetic wind-turbine fleets with injected bearing and sensor faults.

Two fidelities are supported:
- score_level: Anomaly-Space scores are drawn directly (healthy scores are
  |N(0, 1)| scaled so that the 99.9th percentile is 1.0)
- signal_level: raw streams (phase temperatures, vibration snapshots, wind
  speed) that the detectors turn into scores

Every entity draws from its own counter-based random substream keyed by
(seed, entity), so output is identical no matter how many threads run.
"""

import logging
import struct
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.signal import lfilter
from scipy.stats import norm

from .domain import (
    GRID_SECONDS,
    DatasetSplit,
    EntityId,
    FaultClass,
    FaultFrame,
    ensure_on_grid,
    to_utc,
    validate_fault_frames,
    validate_splits,
)
from .errors import DataFormatError, ValidationError
from .runtime import ordered_map, substream
from .storage import PathLike, RECORD_COLUMNS_WITH_FEATURE, atomic_write_bytes, read_table, write_table

logger = logging.getLogger(__name__)

# |N(0,1)| exceeds this with probability 0.001
HEALTHY_SCORE_SCALE = float(norm.isf(0.0005))

VIBRATION_MAGIC = b"FDXVIB1"
VIBRATION_LENGTH = 1024

Fidelity = Literal["score_level", "signal_level"]
ComponentKind = Literal["vibration", "tuple"]


class ComponentSpec(BaseModel):
    """A monitored component and the kind of raw signal it produces."""

    name: str = Field(..., min_length=1)
    kind: ComponentKind
    channels: int = Field(3, ge=2, description="Tuple channels (tuple kind only)")


DEFAULT_COMPONENTS = [
    ComponentSpec(name="FastShaftBearingDE", kind="vibration"),
    ComponentSpec(name="FastShaftBearingNDE", kind="vibration"),
    ComponentSpec(name="GeneratorTemperature", kind="tuple"),
    ComponentSpec(name="TransformerTemperature", kind="tuple"),
]


class TurbineSpec(BaseModel):
    park: str = Field(..., min_length=1)
    unit: str = Field(..., min_length=1)
    components: Optional[List[ComponentSpec]] = None
    wind_mean: float = Field(8.0, gt=0)


class InjectionProfile(BaseModel):
    """
    Shape of one injected fault.

    amplitude is in score units at score level, in degrees Celsius for sensor
    faults and in vibration units for bearing faults at signal level.
    """

    kind: Literal["bearing_trend", "sensor_variance", "sensor_loose_contact"]
    amplitude: float = Field(..., ge=0)
    ramp_shape: Literal["linear", "exponential"] = "linear"
    healthy_segment_hours: Optional[float] = Field(None, gt=0)
    faulty_segment_hours: Optional[float] = Field(None, gt=0)
    noise_sd: float = Field(0.0, ge=0)
    channel: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _segments(self):
        if self.kind == "sensor_loose_contact":
            for name in ("healthy_segment_hours", "faulty_segment_hours"):
                hours = getattr(self, name)
                if hours is None or hours * 3600 < GRID_SECONDS:
                    raise ValueError(f"{name} must be at least one grid step for loose contact")
        return self

    def segment_steps(self) -> Tuple[int, int]:
        """(faulty, healthy) loose-contact segment lengths in grid steps."""
        return (
            max(1, int(round(self.faulty_segment_hours * 3600 / GRID_SECONDS))),
            max(1, int(round(self.healthy_segment_hours * 3600 / GRID_SECONDS))),
        )


class Injection(BaseModel):
    case_no: int
    park: str
    unit: str
    component: str
    fault_type: Literal["bearing", "sensor"]
    start: datetime
    end: datetime
    profile: InjectionProfile

    @field_validator("start", "end", mode="before")
    @classmethod
    def _on_grid(cls, value):
        return ensure_on_grid(value, "injection bound")

    @property
    def entity(self) -> EntityId:
        return EntityId(self.park, self.unit, self.component)

    def frame(self) -> FaultFrame:
        return FaultFrame(
            id=self.entity,
            fault=FaultClass.from_fault_type(self.fault_type),
            start=self.start,
            end=self.end,
            case_no=self.case_no,
        )


class ScenarioSpec(BaseModel):
    """A synthetic fleet: topology, fault injections, fidelity and seed."""

    name: str = "scenario"
    start: datetime
    duration_days: float = Field(..., gt=0)
    fidelity: Fidelity = "score_level"
    seed: int = Field(0, ge=0, lt=2**64)
    turbines: List[TurbineSpec] = Field(..., min_length=1)
    default_components: List[ComponentSpec] = Field(default_factory=lambda: list(DEFAULT_COMPONENTS))
    injections: List[Injection] = Field(default_factory=list)
    splits: Dict[str, List[int]] = Field(default_factory=dict)
    cut_in: float = Field(3.5, ge=0)
    cut_out: float = Field(25.0, gt=0)
    dropout_rate: float = Field(0.002, ge=0, lt=1)
    dropout_max_steps: int = Field(30, ge=1)
    snapshot_every_steps: int = Field(6, ge=1)
    snapshot_length: int = Field(VIBRATION_LENGTH, ge=64)
    bbcv_features: List[str] = Field(default_factory=lambda: ["rms", "kurtosis", "spectral_kurtosis"])

    @field_validator("start", mode="before")
    @classmethod
    def _start_on_grid(cls, value):
        return ensure_on_grid(value, "scenario start")

    @model_validator(mode="after")
    def _consistent(self):
        length = self.snapshot_length
        if length & (length - 1):
            raise ValueError(f"snapshot_length must be a power of two, got {length}")
        components = dict(self.component_map())
        end = self.end
        for injection in self.injections:
            entity = injection.entity
            if entity not in components:
                raise ValueError(f"Injection of case {injection.case_no} references unknown entity {entity}")
            kind = components[entity].kind
            expected = "vibration" if injection.fault_type == "bearing" else "tuple"
            if kind != expected:
                raise ValueError(f"Case {injection.case_no}: {injection.fault_type} fault needs a {expected} component")
            profile_bearing = injection.profile.kind == "bearing_trend"
            if profile_bearing != (injection.fault_type == "bearing"):
                raise ValueError(f"Case {injection.case_no}: profile {injection.profile.kind} does not fit {injection.fault_type}")
            if injection.profile.amplitude <= 0:
                raise ValueError(f"Case {injection.case_no}: amplitude must be > 0")
            if injection.start < self.start or injection.end > end:
                raise ValueError(f"Case {injection.case_no}: interval lies outside the scenario range")
            if kind == "tuple" and injection.profile.channel >= components[entity].channels:
                raise ValueError(f"Case {injection.case_no}: channel {injection.profile.channel} does not exist")
        validate_fault_frames([i.frame() for i in self.injections])
        validate_splits(self.dataset_splits())
        known = {i.case_no for i in self.injections}
        for role, cases in self.splits.items():
            unknown = set(cases) - known
            if unknown:
                raise ValueError(f"Split '{role}' references unknown cases {sorted(unknown)}")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.duration_days * 86400 / GRID_SECONDS))

    @property
    def end(self) -> datetime:
        return self.start + pd.Timedelta(seconds=self.steps * GRID_SECONDS).to_pytimedelta()

    def grid(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.steps, freq=f"{GRID_SECONDS}s")

    def component_map(self) -> List[Tuple[EntityId, ComponentSpec]]:
        entries = []
        for turbine in self.turbines:
            for component in turbine.components or self.default_components:
                entries.append((EntityId(turbine.park, turbine.unit, component.name), component))
        ids = [e for e, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("Duplicate (park, unit, component) in scenario topology")
        return sorted(entries, key=lambda item: item[0])

    def frames(self) -> List[FaultFrame]:
        return validate_fault_frames(i.frame() for i in self.injections)

    def dataset_splits(self) -> List[DatasetSplit]:
        return [DatasetSplit(role, tuple(cases)) for role, cases in sorted(self.splits.items())]


@dataclass
class VibrationSeries:
    """Vibration snapshots of one entity: epoch-second timestamps and float32 samples."""

    timestamps: np.ndarray
    samples: np.ndarray


@dataclass
class RawStreams:
    """Raw signals of a fleet on the 10-minute grid."""

    grid: pd.DatetimeIndex
    wind: Dict[Tuple[str, str], np.ndarray]
    operating: Dict[Tuple[str, str], np.ndarray]
    tuples: Dict[EntityId, np.ndarray] = field(default_factory=dict)
    vibration: Dict[EntityId, VibrationSeries] = field(default_factory=dict)

    def grid_index(self, ts: datetime) -> int:
        position = (pd.Timestamp(to_utc(ts)) - self.grid[0]).total_seconds() / GRID_SECONDS
        return int(position)

    def grid_seconds(self) -> np.ndarray:
        return (self.grid.asi8 // 10**9).astype(np.int64)


@dataclass
class FleetOutput:
    frames: List[FaultFrame]
    splits: List[DatasetSplit]
    records: Optional[pd.DataFrame] = None
    streams: Optional[RawStreams] = None


def _ramp(u: np.ndarray, shape: str) -> np.ndarray:
    if shape == "exponential":
        return np.expm1(3.0 * u) / np.expm1(3.0)
    return u


def _interval_positions(grid: pd.DatetimeIndex, start: datetime, end: datetime) -> Tuple[int, int]:
    if pd.Timestamp(start) < grid[0] or pd.Timestamp(end) > grid[-1] + pd.Timedelta(seconds=GRID_SECONDS):
        raise ValidationError("Injection interval lies outside the stream range")
    lo = int(grid.searchsorted(pd.Timestamp(start)))
    hi = int(grid.searchsorted(pd.Timestamp(end)))
    return lo, hi


def _loose_contact_mask(length: int, profile: InjectionProfile) -> np.ndarray:
    """True on faulty steps: faulty and clean segments alternate, faulty first."""
    faulty, healthy = profile.segment_steps()
    position = np.arange(length) % (faulty + healthy)
    return position < faulty


def _sensor_mask(length: int, profile: InjectionProfile) -> np.ndarray:
    if profile.kind == "sensor_loose_contact":
        return _loose_contact_mask(length, profile)
    return np.ones(length, dtype=bool)


def _wind_speed(steps: int, mean: float, rng: np.random.Generator) -> np.ndarray:
    """AR(1) wind speed around a park mean, m/s."""
    phi, sigma = 0.98, 0.6
    shocks = rng.normal(0.0, sigma, steps)
    initial = rng.normal(0.0, sigma / np.sqrt(1 - phi**2))
    deviation, _ = lfilter([1.0], [1.0, -phi], shocks, zi=[phi * initial])
    return np.clip(mean + deviation, 0.0, None)


def _dropout_mask(steps: int, rate: float, max_steps: int, rng: np.random.Generator) -> np.ndarray:
    """True where data is missing: bursts of random length start with probability rate."""
    missing = np.zeros(steps, dtype=bool)
    starts = np.flatnonzero(rng.random(steps) < rate)
    lengths = rng.integers(1, max_steps + 1, size=starts.size)
    for start, length in zip(starts, lengths):
        missing[start:start + length] = True
    return missing


def healthy_scores(size: int, rng: np.random.Generator) -> np.ndarray:
    """Healthy anomaly scores: P(score > 1.0) = 0.001."""
    return np.abs(rng.standard_normal(size)) / HEALTHY_SCORE_SCALE


def _turbine_wind(spec: ScenarioSpec) -> Tuple[Dict[Tuple[str, str], np.ndarray], Dict[Tuple[str, str], np.ndarray]]:
    wind, operating = {}, {}
    for turbine in spec.turbines:
        key = (turbine.park, turbine.unit)
        series = _wind_speed(spec.steps, turbine.wind_mean, substream(spec.seed, "wind", *key))
        wind[key] = series
        operating[key] = (series >= spec.cut_in) & (series <= spec.cut_out)
    return wind, operating


def _score_injection(
    scores: np.ndarray, injection: Injection, grid: pd.DatetimeIndex, gain: float, channel: str, seed: int
) -> np.ndarray:
    lo, hi = _interval_positions(grid, injection.start, injection.end)
    if hi <= lo:
        return scores
    profile = injection.profile
    rng = substream(seed, "score-injection", injection.case_no, channel)
    out = scores.copy()
    length = hi - lo
    if profile.kind == "bearing_trend":
        u = np.arange(length) / length
        shift = profile.amplitude * gain * _ramp(u, profile.ramp_shape)
    else:
        mask = _sensor_mask(length, profile)
        shift = np.where(mask, profile.amplitude * (0.75 + 0.5 * rng.random(length)), 0.0)
    noise = profile.noise_sd * rng.standard_normal(length)
    out[lo:hi] = np.clip(out[lo:hi] + shift + noise, 0.0, None)
    return out


def _score_level_entity(
    spec: ScenarioSpec,
    entity: EntityId,
    component: ComponentSpec,
    operating: np.ndarray,
) -> pd.DataFrame:
    grid = spec.grid()
    rng = substream(spec.seed, "scores", entity)
    missing = _dropout_mask(spec.steps, spec.dropout_rate, spec.dropout_max_steps, rng)
    injections = [i for i in spec.injections if i.entity == entity]
    if component.kind == "tuple":
        channels = {("tuplet", ""): healthy_scores(spec.steps, rng)}
        gains = {("tuplet", ""): 1.0}
    else:
        channels = {("bbcv", name): healthy_scores(spec.steps, rng) for name in spec.bbcv_features}
        gains = {("bbcv", name): 1.0 / (1.0 + 0.7 * i) for i, name in enumerate(spec.bbcv_features)}
    parts = []
    kept = ~missing
    for (detector, feature), scores in channels.items():
        for injection in injections:
            scores = _score_injection(
                scores, injection, grid, gains[(detector, feature)], f"{detector}:{feature}", spec.seed
            )
        parts.append(
            pd.DataFrame(
                {
                    "ts": grid[kept],
                    "park": entity.park,
                    "unit": entity.unit,
                    "component": entity.component,
                    "detector": detector,
                    "score": scores[kept],
                    "operating": operating[kept],
                    "feature": feature,
                }
            )
        )
    return pd.concat(parts, ignore_index=True)


def _healthy_tuples(steps: int, channels: int, wind: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Phase temperatures in degrees Celsius: shared load/daily pattern plus channel noise."""
    t = np.arange(steps)
    common = 45.0 + 6.0 * np.sin(2 * np.pi * t / 144.0) + 1.5 * (np.clip(wind, 0, 15) - 8.0)
    return common[:, None] + rng.normal(0.0, 0.25, size=(steps, channels))


def _healthy_vibration(
    spec: ScenarioSpec, wind: np.ndarray, rng: np.random.Generator
) -> VibrationSeries:
    positions = np.arange(0, spec.steps, spec.snapshot_every_steps)
    n = np.arange(spec.snapshot_length)
    f1 = 20.0 / spec.snapshot_length
    phases = rng.uniform(0, 2 * np.pi, size=(positions.size, 2))
    amplitude = 1.0 + 0.02 * (wind[positions] - 8.0)
    tonal = np.sin(2 * np.pi * f1 * n[None, :] + phases[:, :1]) + 0.5 * np.sin(
        2 * np.pi * 2 * f1 * n[None, :] + phases[:, 1:]
    )
    samples = amplitude[:, None] * tonal + rng.normal(0.0, 0.3, size=(positions.size, spec.snapshot_length))
    grid_seconds = (spec.grid().asi8 // 10**9).astype(np.int64)
    return VibrationSeries(timestamps=grid_seconds[positions], samples=samples.astype(np.float32))


def inject_bearing_fault(
    streams: RawStreams,
    entity: EntityId,
    interval: Tuple[datetime, datetime],
    profile: InjectionProfile,
    seed: int = 0,
) -> RawStreams:
    """
    Add a growing bearing-defect component to the entity's vibration snapshots.

    The defect is an impulse train of decaying high-frequency ringings whose
    amplitude ramps from 0 to profile.amplitude over the interval, which
    raises RMS, kurtosis, peak and high-band energy over time.

    Args:
        streams: raw streams (not modified)
        entity: component with vibration snapshots
        interval: (start, end) of the fault, end exclusive
        profile: ramp shape, amplitude and noise
        seed (int): seed of the jitter stream

    Returns:
        RawStreams: new streams with the defect added
    """
    if entity not in streams.vibration:
        raise ValidationError(f"{entity} has no vibration snapshots")
    start, end = to_utc(interval[0]), to_utc(interval[1])
    if start >= end:
        return streams
    _interval_positions(streams.grid, start, end)
    series = streams.vibration[entity]
    t0, t1 = pd.Timestamp(start).value // 10**9, pd.Timestamp(end).value // 10**9
    inside = np.flatnonzero((series.timestamps >= t0) & (series.timestamps < t1))
    if inside.size == 0 or profile.amplitude == 0:
        return streams
    rng = substream(seed, "bearing", entity, t0)
    length = series.samples.shape[1]
    ring_n = np.arange(30)
    ringing = 2.0 * np.exp(-ring_n / 5.0) * np.sin(2 * np.pi * 0.27 * ring_n)
    period = 20
    u = (series.timestamps[inside] - t0) / float(t1 - t0)
    level = profile.amplitude * _ramp(u, profile.ramp_shape)
    level = np.clip(level * (1.0 + profile.noise_sd * rng.standard_normal(inside.size)), 0.0, None)
    samples = series.samples.astype(np.float64, copy=True)
    for row, amp in zip(inside, level):
        train = np.zeros(length)
        train[int(rng.integers(0, period))::period] = 1.0
        samples[row] += amp * np.convolve(train, ringing)[:length]
    vibration = dict(streams.vibration)
    vibration[entity] = VibrationSeries(series.timestamps.copy(), samples.astype(np.float32))
    return replace(streams, vibration=vibration)


def inject_sensor_fault(
    streams: RawStreams,
    entity: EntityId,
    interval: Tuple[datetime, datetime],
    profile: InjectionProfile,
    seed: int = 0,
) -> RawStreams:
    """
    Corrupt one tuple channel with an offset plus noise inside the interval.

    For the loose-contact kind, corrupted and clean segments alternate
    according to the profile's segment lengths, starting with a corrupted one.
    """
    if entity not in streams.tuples:
        raise ValidationError(f"{entity} has no tuple channels")
    start, end = to_utc(interval[0]), to_utc(interval[1])
    lo, hi = _interval_positions(streams.grid, start, end)
    if hi <= lo:
        return streams
    channels = streams.tuples[entity]
    if profile.channel >= channels.shape[1]:
        raise ValidationError(f"{entity} has no channel {profile.channel}")
    rng = substream(seed, "sensor", entity, lo)
    mask = _sensor_mask(hi - lo, profile)
    corruption = profile.amplitude + profile.noise_sd * rng.standard_normal(hi - lo)
    values = channels.copy()
    values[lo:hi, profile.channel] += np.where(mask, corruption, 0.0)
    tuples = dict(streams.tuples)
    tuples[entity] = values
    return replace(streams, tuples=tuples)


def _signal_level_entity(
    spec: ScenarioSpec, entity: EntityId, component: ComponentSpec, wind: np.ndarray
) -> Tuple[EntityId, object]:
    rng = substream(spec.seed, "signals", entity)
    if component.kind == "tuple":
        return entity, _healthy_tuples(spec.steps, component.channels, wind, rng)
    return entity, _healthy_vibration(spec, wind, rng)


def generate_fleet(spec: ScenarioSpec, threads: Optional[int] = None) -> FleetOutput:
    """
    Generate a synthetic fleet.

    Args:
        spec: validated scenario
        threads (int): worker threads, one entity per task

    Returns:
        FleetOutput: anomaly records (score level) or raw streams (signal
        level), plus the ground-truth fault frames and dataset splits
    """
    wind, operating = _turbine_wind(spec)
    entities = spec.component_map()
    frames = spec.frames()
    splits = spec.dataset_splits()
    logger.info(
        f"Generating {spec.fidelity} fleet '{spec.name}': {len(spec.turbines)} turbines, "
        f"{len(entities)} entities, {spec.steps} grid steps, {len(frames)} fault frames"
    )
    if spec.fidelity == "score_level":
        parts = ordered_map(
            lambda item: _score_level_entity(spec, item[0], item[1], operating[item[0].turbine]),
            entities,
            threads,
        )
        records = pd.concat(parts, ignore_index=True)[RECORD_COLUMNS_WITH_FEATURE]
        records = records.sort_values(["ts", "park", "unit", "component", "detector", "feature"], kind="mergesort")
        return FleetOutput(frames=frames, splits=splits, records=records.reset_index(drop=True))

    generated = ordered_map(
        lambda item: _signal_level_entity(spec, item[0], item[1], wind[item[0].turbine]),
        entities,
        threads,
    )
    streams = RawStreams(grid=spec.grid(), wind=wind, operating=operating)
    for entity, data in generated:
        if isinstance(data, VibrationSeries):
            streams.vibration[entity] = data
        else:
            streams.tuples[entity] = data
    for injection in spec.injections:
        interval = (injection.start, injection.end)
        if injection.fault_type == "bearing":
            streams = inject_bearing_fault(streams, injection.entity, interval, injection.profile, spec.seed)
        else:
            streams = inject_sensor_fault(streams, injection.entity, interval, injection.profile, spec.seed)
    return FleetOutput(frames=frames, splits=splits, streams=streams)


def write_raw_streams(streams: RawStreams, directory: PathLike) -> None:
    """Write tuples.csv, wind.csv and vibration.bin into directory."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    wind_parts = [
        pd.DataFrame({"ts": streams.grid, "park": park, "unit": unit,
                      "wind_speed": streams.wind[(park, unit)], "operating": streams.operating[(park, unit)]})
        for park, unit in sorted(streams.wind)
    ]
    write_table(pd.concat(wind_parts, ignore_index=True), out / "wind.csv")

    tuple_parts = []
    for entity in sorted(streams.tuples):
        values = streams.tuples[entity]
        for channel in range(values.shape[1]):
            tuple_parts.append(
                pd.DataFrame({"ts": streams.grid, "park": entity.park, "unit": entity.unit,
                              "component": entity.component, "channel": channel, "value": values[:, channel]})
            )
    tuples = pd.concat(tuple_parts, ignore_index=True) if tuple_parts else pd.DataFrame(
        columns=["ts", "park", "unit", "component", "channel", "value"]
    )
    write_table(tuples, out / "tuples.csv")

    chunks = []
    for entity in sorted(streams.vibration):
        series = streams.vibration[entity]
        name = str(entity).encode("utf-8")
        for ts, samples in zip(series.timestamps, series.samples):
            chunks.append(VIBRATION_MAGIC)
            chunks.append(struct.pack("<H", len(name)) + name)
            chunks.append(struct.pack("<qI", int(ts), samples.size))
            chunks.append(np.asarray(samples, dtype="<f4").tobytes())
    atomic_write_bytes(out / "vibration.bin", b"".join(chunks))
    logger.info(f"Wrote raw streams for {len(streams.tuples)} tuple and {len(streams.vibration)} vibration entities to {out}")


def _read_vibration(path: Path) -> Dict[EntityId, VibrationSeries]:
    payload = path.read_bytes()
    offset = 0
    collected: Dict[EntityId, Tuple[List[int], List[np.ndarray]]] = {}
    header = struct.calcsize("<qI")
    while offset < len(payload):
        if payload[offset:offset + len(VIBRATION_MAGIC)] != VIBRATION_MAGIC:
            raise DataFormatError(f"Bad vibration record magic at byte {offset} of {path}")
        offset += len(VIBRATION_MAGIC)
        try:
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            entity = EntityId.parse(payload[offset:offset + name_len].decode("utf-8"))
            offset += name_len
            ts, length = struct.unpack_from("<qI", payload, offset)
            offset += header
        except (struct.error, UnicodeDecodeError, ValidationError) as e:
            raise DataFormatError(f"Truncated or corrupt vibration header in {path}: {e}")
        end = offset + 4 * length
        if end > len(payload):
            raise DataFormatError(f"Truncated vibration samples in {path}")
        samples = np.frombuffer(payload[offset:end], dtype="<f4").astype(np.float32)
        offset = end
        stamps, rows = collected.setdefault(entity, ([], []))
        stamps.append(ts)
        rows.append(samples)
    return {
        entity: VibrationSeries(np.asarray(stamps, dtype=np.int64), np.vstack(rows))
        for entity, (stamps, rows) in collected.items()
    }


def read_raw_streams(directory: PathLike) -> RawStreams:
    """Read a raw-stream directory written by write_raw_streams."""
    root = Path(directory)
    wind_table = read_table(root / "wind.csv", ["ts", "park", "unit", "wind_speed", "operating"])
    grid = pd.DatetimeIndex(sorted(wind_table["ts"].unique()))
    wind, operating = {}, {}
    for (park, unit), group in wind_table.groupby(["park", "unit"], sort=True):
        group = group.sort_values("ts")
        if len(group) != len(grid):
            raise DataFormatError(f"Wind series of {park}/{unit} does not cover the grid")
        wind[(park, unit)] = group["wind_speed"].to_numpy(dtype=np.float64)
        operating[(park, unit)] = group["operating"].astype(str).str.lower().isin(["true", "1"]).to_numpy()
    streams = RawStreams(grid=grid, wind=wind, operating=operating)
    tuple_table = read_table(root / "tuples.csv", ["ts", "park", "unit", "component", "channel", "value"])
    for (park, unit, component), group in tuple_table.groupby(["park", "unit", "component"], sort=True):
        matrix = group.pivot(index="ts", columns="channel", values="value").reindex(grid)
        if matrix.isna().any().any():
            raise DataFormatError(f"Tuple channels of {park}/{unit}/{component} do not cover the grid")
        streams.tuples[EntityId(park, unit, component)] = matrix.to_numpy(dtype=np.float64)
    streams.vibration = _read_vibration(root / "vibration.bin")
    return streams

