#!/usr/bin/env python3
"""
Simplified detectors that turn raw streams into normalized anomaly scores.

- tuplet: cross-channel variance of semantically similar sensors (e.g. the
  three generator phase temperatures), divided by the healthy-period
  99.9th-percentile statistic
- bbcv: time- and frequency-domain features of vibration snapshots captured
  at near-constant wind speed; each feature history is scored by its
  Mann-Kendall trend, Z / z_alpha, clamped at 0

Both detectors follow the Anomaly-Space convention: scores above 1.0 are
anomalous at the configured significance level.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, model_validator
from scipy.stats import kurtosis, norm, skew

from .domain import Detector, EntityId
from .errors import ValidationError
from .features import mann_kendall_batch
from .fleet_sim import RawStreams
from .runtime import ordered_map
from .storage import PathLike, RECORD_COLUMNS_WITH_FEATURE, read_json, write_json

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.001
MIN_CALIBRATION_SAMPLES = 1000
MIN_HISTORY = 10
DEGENERATE_VARIANCE = 1e-12
TIME_FEATURES = ["mean", "rms", "skewness", "kurtosis", "peak"]
SPECTRAL_FEATURES = ["spectral_mean", "spectral_kurtosis"]


class DetectorConfig(BaseModel):
    """Parameters of the signal-level detectors."""

    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=0.5)
    wind_band: Tuple[float, float] = (6.0, 12.0)
    history_window: int = Field(72, ge=MIN_HISTORY)
    min_history: int = Field(MIN_HISTORY, ge=MIN_HISTORY)
    tuplet_window: int = Field(1, ge=1)
    calibration_steps: int = Field(1008, ge=MIN_CALIBRATION_SAMPLES)
    n_bands: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _band(self):
        if self.wind_band[0] >= self.wind_band[1]:
            raise ValueError(f"wind_band lower bound must be below upper bound, got {self.wind_band}")
        return self


def z_for_alpha(alpha: float) -> float:
    """Upper standard-normal quantile: Phi^-1(1 - alpha)."""
    return float(norm.isf(alpha))


@dataclass(frozen=True)
class DetectorCalibration:
    """Normalization of one detector; scores above 1.0 are anomalous."""

    detector: Detector
    reference_statistic: float
    alpha: float = DEFAULT_ALPHA
    z_alpha: float = z_for_alpha(DEFAULT_ALPHA)

    def __post_init__(self):
        object.__setattr__(self, "detector", Detector(self.detector))
        if not (self.reference_statistic > 0 and math.isfinite(self.reference_statistic)):
            raise ValidationError(f"reference_statistic must be > 0, got {self.reference_statistic}")
        if not 0 < self.alpha < 0.5:
            raise ValidationError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if abs(self.z_alpha - z_for_alpha(self.alpha)) > 1e-9:
            raise ValidationError(f"z_alpha {self.z_alpha} does not match alpha {self.alpha}")

    @classmethod
    def for_bbcv(cls, alpha: float = DEFAULT_ALPHA) -> "DetectorCalibration":
        z = z_for_alpha(alpha)
        return cls(Detector.BBCV, reference_statistic=z, alpha=alpha, z_alpha=z)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "detector": self.detector.value,
            "reference_statistic": self.reference_statistic,
            "alpha": self.alpha,
            "z_alpha": self.z_alpha,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DetectorCalibration":
        return cls(
            Detector(data["detector"]),
            float(data["reference_statistic"]),
            float(data["alpha"]),
            float(data["z_alpha"]),
        )


def save_calibration(calibration: DetectorCalibration, path: PathLike) -> None:
    write_json(calibration.to_dict(), path)


def load_calibration(path: PathLike) -> DetectorCalibration:
    return DetectorCalibration.from_dict(read_json(path))


def calibrate(
    healthy_statistics: Sequence[float],
    alpha: float = DEFAULT_ALPHA,
    detector: Detector = Detector.TUPLET,
) -> DetectorCalibration:
    """
    Calibrate a detector on healthy-period statistics.

    Args:
        healthy_statistics: at least 1000 statistics from a healthy period
        alpha (float): significance level (default 0.001)
        detector: detector the calibration belongs to

    Returns:
        DetectorCalibration: reference statistic = empirical (1 - alpha)
        quantile with linear interpolation
    """
    values = np.asarray(healthy_statistics, dtype=np.float64)
    if values.size < MIN_CALIBRATION_SAMPLES:
        raise ValidationError(
            f"Calibration needs at least {MIN_CALIBRATION_SAMPLES} healthy statistics, got {values.size}"
        )
    if not 0 < alpha < 0.5:
        raise ValidationError(f"alpha must lie in (0, 0.5), got {alpha}")
    reference = float(np.quantile(values, 1.0 - alpha, method="linear"))
    return DetectorCalibration(Detector(detector), reference, alpha, z_for_alpha(alpha))


def tuplet_statistic(tuple_window: np.ndarray) -> float:
    """Mean over timesteps of the cross-channel population variance."""
    values = np.asarray(tuple_window, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.shape[1] < 2:
        raise ValidationError(f"Tuplet needs at least 2 channels, got {values.shape[1]}")
    if values.shape[0] < 1:
        raise ValidationError("Tuplet window must contain at least one timestep")
    return float(values.var(axis=1).mean())


def tuplet_score(tuple_window: np.ndarray, cal: DetectorCalibration) -> float:
    """
    Tuplet anomaly score of one window.

    Args:
        tuple_window: shape (timesteps, channels), k >= 2 aligned channels
        cal: tuplet calibration

    Returns:
        float: statistic / reference_statistic
    """
    return tuplet_statistic(tuple_window) / cal.reference_statistic


def tuplet_statistics(channels: np.ndarray, window: int = 1) -> np.ndarray:
    """Trailing-window tuplet statistic for every timestep of a channel matrix."""
    values = np.asarray(channels, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] < 2:
        raise ValidationError("Tuplet needs a (timesteps, channels>=2) matrix")
    per_step = values.var(axis=1)
    if window == 1:
        return per_step
    return pd.Series(per_step).rolling(window, min_periods=1).mean().to_numpy()


def capture_condition_windows(
    streams: RawStreams,
    entity: EntityId,
    wind_band: Tuple[float, float],
) -> List[Tuple[int, np.ndarray]]:
    """
    Vibration snapshots taken while the wind speed was inside the band.

    Args:
        streams: raw streams
        entity: vibration entity
        wind_band: inclusive [v_lo, v_hi] in m/s

    Returns:
        list: (epoch seconds, samples) per captured snapshot, in time order
    """
    v_lo, v_hi = wind_band
    if not v_lo < v_hi:
        raise ValidationError(f"Wind band lower bound must be below upper bound, got {wind_band}")
    if entity.turbine not in streams.wind:
        raise ValidationError(f"{entity} has no wind signal")
    if entity not in streams.vibration:
        return []
    series = streams.vibration[entity]
    wind = streams.wind[entity.turbine]
    start = streams.grid_seconds()[0]
    positions = ((series.timestamps - start) // 600).astype(np.int64)
    outside = (positions < 0) | (positions >= wind.size)
    if np.any(outside):
        first = int(series.timestamps[np.flatnonzero(outside)[0]])
        raise ValidationError(f"{entity} has a snapshot at {first} outside the wind record")
    concurrent = wind[positions]
    captured = (concurrent >= v_lo) & (concurrent <= v_hi)
    return [(int(series.timestamps[i]), series.samples[i]) for i in np.flatnonzero(captured)]


@dataclass(frozen=True)
class BbcvFeatureSet:
    """Named features of one vibration snapshot."""

    values: Dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def feature_names(n_bands: int = 4) -> List[str]:
    return TIME_FEATURES + SPECTRAL_FEATURES + [f"band_{i + 1}" for i in range(n_bands)]


def magnitude_spectrum(snapshot: np.ndarray) -> np.ndarray:
    """One-sided DFT magnitude, bins 0 (DC) .. N/2."""
    return np.abs(np.fft.rfft(np.asarray(snapshot, dtype=np.float64)))


def _moments(values: np.ndarray) -> Tuple[float, float]:
    if values.var() < DEGENERATE_VARIANCE:
        return 0.0, 0.0
    return float(skew(values, bias=True)), float(kurtosis(values, fisher=True, bias=True))


def vibration_features(snapshot: np.ndarray, n_bands: int = 4) -> BbcvFeatureSet:
    """
    Time-domain and spectral features of one vibration snapshot.

    Time-domain moments use population formulas. Spectral features use the
    one-sided magnitude spectrum without the DC bin; band energies cover
    n_bands log-spaced bands over (0, Nyquist].

    Args:
        snapshot: samples, length a power of two and at least 64
        n_bands (int): number of spectral bands

    Returns:
        BbcvFeatureSet: mean, rms, skewness, kurtosis (excess), peak,
        spectral_mean, spectral_kurtosis, band_1..band_n
    """
    x = np.asarray(snapshot, dtype=np.float64)
    n = x.size
    if n < 64 or n & (n - 1):
        raise ValidationError(f"Snapshot length must be a power of two >= 64, got {n}")
    skewness, excess_kurtosis = _moments(x)
    magnitude = magnitude_spectrum(x)[1:]
    spectral_kurtosis = _moments(magnitude)[1]
    edges = np.unique(np.round(np.geomspace(1, magnitude.size + 1, n_bands + 1)).astype(int))
    bins = np.arange(1, magnitude.size + 1)
    values = {
        "mean": float(x.mean()),
        "rms": float(np.sqrt(np.mean(x**2))),
        "skewness": skewness,
        "kurtosis": excess_kurtosis,
        "peak": float(np.max(np.abs(x))),
        "spectral_mean": float(magnitude.mean()),
        "spectral_kurtosis": spectral_kurtosis,
    }
    for i in range(n_bands):
        if i + 1 < edges.size:
            lo, hi = edges[i], edges[i + 1]
            mask = (bins >= lo) & ((bins < hi) if i + 2 < edges.size else (bins <= hi))
            values[f"band_{i + 1}"] = float(np.sum(magnitude[mask] ** 2) / n)
        else:
            values[f"band_{i + 1}"] = 0.0
    return BbcvFeatureSet(values)


def bbcv_scores_from_z(z: np.ndarray, cal: DetectorCalibration) -> np.ndarray:
    """score = max(0, Z / z_alpha); score > 1.0 exactly when p < alpha."""
    return np.maximum(0.0, np.asarray(z, dtype=np.float64) / cal.z_alpha)


def trailing_trend_z(history: np.ndarray, history_window: int, min_history: int = MIN_HISTORY) -> np.ndarray:
    """Mann-Kendall Z over the trailing window ending at each point from min_history on."""
    values = np.asarray(history, dtype=np.float64)
    if values.size < min_history:
        raise ValidationError(f"Feature history needs at least {min_history} points, got {values.size}")
    z = np.empty(values.size - min_history + 1)
    ramp_end = min(history_window, values.size + 1) - 1
    for i in range(min_history - 1, ramp_end):
        _, _, zi, _ = mann_kendall_batch(values[None, : i + 1])
        z[i - min_history + 1] = zi[0]
    if values.size >= history_window:
        _, _, full, _ = mann_kendall_batch(sliding_window_view(values, history_window))
        z[history_window - min_history:] = full
    return z


def bbcv_scores(
    entity: EntityId,
    timestamps: Sequence[int],
    feature_histories: Dict[str, np.ndarray],
    cal: DetectorCalibration,
    history_window: int = 72,
    min_history: int = MIN_HISTORY,
) -> pd.DataFrame:
    """
    Trend scores of bbcv feature histories.

    Args:
        entity: scored component
        timestamps: epoch seconds of the captured snapshots
        feature_histories: feature name -> values, aligned with timestamps
        cal: bbcv calibration (alpha, z_alpha)
        history_window (int): trailing window length in snapshots
        min_history (int): first evaluation needs this many points (>= 10)

    Returns:
        DataFrame: one anomaly record per feature per evaluation time
    """
    stamps = np.asarray(timestamps, dtype=np.int64)
    parts = []
    for name in sorted(feature_histories):
        history = np.asarray(feature_histories[name], dtype=np.float64)
        if history.size != stamps.size:
            raise ValidationError(f"History of '{name}' is not aligned with its timestamps")
        scores = bbcv_scores_from_z(trailing_trend_z(history, history_window, min_history), cal)
        parts.append(
            pd.DataFrame(
                {
                    "ts": pd.to_datetime(stamps[min_history - 1:], unit="s", utc=True),
                    "park": entity.park,
                    "unit": entity.unit,
                    "component": entity.component,
                    "detector": Detector.BBCV.value,
                    "score": scores,
                    "operating": True,
                    "feature": name,
                }
            )
        )
    if not parts:
        return pd.DataFrame(columns=RECORD_COLUMNS_WITH_FEATURE)
    return pd.concat(parts, ignore_index=True)


def _score_tuple_entity(
    streams: RawStreams, entity: EntityId, config: DetectorConfig
) -> Tuple[pd.DataFrame, DetectorCalibration]:
    statistics = tuplet_statistics(streams.tuples[entity], config.tuplet_window)
    operating = streams.operating[entity.turbine]
    healthy = statistics[operating][: config.calibration_steps]
    calibration = calibrate(healthy, config.alpha, Detector.TUPLET)
    records = pd.DataFrame(
        {
            "ts": streams.grid,
            "park": entity.park,
            "unit": entity.unit,
            "component": entity.component,
            "detector": Detector.TUPLET.value,
            "score": statistics / calibration.reference_statistic,
            "operating": operating,
            "feature": "",
        }
    )
    return records, calibration


def _score_vibration_entity(
    streams: RawStreams, entity: EntityId, config: DetectorConfig
) -> Tuple[pd.DataFrame, DetectorCalibration]:
    calibration = DetectorCalibration.for_bbcv(config.alpha)
    captured = capture_condition_windows(streams, entity, config.wind_band)
    if len(captured) < config.min_history:
        logger.warning(f"{entity}: only {len(captured)} snapshots captured, no bbcv scores")
        return pd.DataFrame(columns=RECORD_COLUMNS_WITH_FEATURE), calibration
    names = feature_names(config.n_bands)
    rows = [vibration_features(samples, config.n_bands) for _, samples in captured]
    histories = {name: np.array([row[name] for row in rows]) for name in names}
    stamps = [ts for ts, _ in captured]
    records = bbcv_scores(entity, stamps, histories, calibration, config.history_window, config.min_history)
    positions = streams.grid.get_indexer(records["ts"])
    records["operating"] = streams.operating[entity.turbine][positions]
    return records, calibration


def run_detectors(
    streams: RawStreams,
    config: Optional[DetectorConfig] = None,
    threads: Optional[int] = None,
) -> Tuple[pd.DataFrame, Dict[str, DetectorCalibration]]:
    """
    Score every entity of a raw-stream fleet.

    Args:
        streams: raw streams
        config: detector parameters
        threads (int): worker threads, one entity per task

    Returns:
        tuple: (anomaly records, calibration per entity name)
    """
    config = config or DetectorConfig()
    tasks = [(e, "tuple") for e in sorted(streams.tuples)] + [(e, "vibration") for e in sorted(streams.vibration)]

    def score(task):
        entity, kind = task
        if kind == "tuple":
            return _score_tuple_entity(streams, entity, config)
        return _score_vibration_entity(streams, entity, config)

    results = ordered_map(score, tasks, threads)
    calibrations = {str(entity): cal for (entity, _), (_, cal) in zip(tasks, results)}
    frames = [records for records, _ in results if len(records)]
    if not frames:
        raise ValidationError("Detectors produced no anomaly records")
    records = pd.concat(frames, ignore_index=True)[RECORD_COLUMNS_WITH_FEATURE]
    records = records.sort_values(["ts", "park", "unit", "component", "detector", "feature"], kind="mergesort")
    logger.info(f"Scored {len(tasks)} entities into {len(records)} anomaly records")
    return records.reset_index(drop=True), calibrations
