#!/usr/bin/env python3
"""
Tests for the synthetic fleet generator
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from anomaly_space.config import load_scenario, validate_model
from anomaly_space.detectors import calibrate, tuplet_statistics, vibration_features
from anomaly_space.domain import EntityId
from anomaly_space.errors import DataFormatError, ValidationError
from anomaly_space.features import mann_kendall_batch
from anomaly_space.fleet_sim import (
    InjectionProfile,
    ScenarioSpec,
    generate_fleet,
    inject_bearing_fault,
    inject_sensor_fault,
    read_raw_streams,
    write_raw_streams,
)

SCENARIOS = Path(__file__).parent / "scenarios"
BEARING = EntityId("P1", "U1", "FastShaftBearingDE")
GENERATOR = EntityId("P1", "U1", "GeneratorTemperature")
START = pd.Timestamp("2021-01-01", tz="UTC")


def signal_spec(days: float = 10, seed: int = 5) -> ScenarioSpec:
    return ScenarioSpec.model_validate(
        {
            "start": "2021-01-01T00:00:00Z",
            "duration_days": days,
            "fidelity": "signal_level",
            "seed": seed,
            "snapshot_length": 256,
            "turbines": [{"park": "P1", "unit": "U1"}],
        }
    )


def test_eight_case_topology():
    spec = load_scenario(SCENARIOS / "table1.json")
    output = generate_fleet(spec, threads=2)
    assert len(spec.turbines) == 7
    assert len({t.park for t in spec.turbines}) == 5
    assert len(output.frames) == 8
    splits = {s.role: s.cases for s in output.splits}
    assert splits == {"train": (1, 2, 3, 4, 5, 6), "test": (7, 8)}
    assert [f.case_no for f in sorted(output.frames, key=lambda f: f.case_no)] == list(range(1, 9))
    keys = output.records[["park", "unit", "component"]].drop_duplicates()
    assert {f.id for f in output.frames} <= {EntityId(*row) for row in keys.itertuples(index=False)}


def test_frames_match_injections_one_to_one():
    spec = load_scenario(SCENARIOS / "table1.json")
    frames = {f.case_no: f for f in generate_fleet(spec).frames}
    for injection in spec.injections:
        frame = frames[injection.case_no]
        assert frame.id == injection.entity
        assert frame.start == injection.start and frame.end == injection.end
        assert frame.fault.fault_type == injection.fault_type


def test_generation_is_deterministic_and_thread_independent():
    spec = load_scenario(SCENARIOS / "table1.json")
    first = generate_fleet(spec, threads=1).records
    again = generate_fleet(spec, threads=4).records
    pd.testing.assert_frame_equal(first, again)

    other = generate_fleet(load_scenario(SCENARIOS / "table1.json", seed=43), threads=1).records
    assert not first["score"].equals(other["score"])


def test_healthy_scores_exceed_one_at_the_calibrated_rate():
    records = generate_fleet(load_scenario(SCENARIOS / "healthy.json")).records
    assert len(records) > 100_000
    fraction = float(np.mean(records["score"] > 1.0))
    assert 0.0005 <= fraction <= 0.002


def test_healthy_scores_have_no_trend():
    records = generate_fleet(load_scenario(SCENARIOS / "healthy.json")).records
    series = records[(records["detector"] == "tuplet")].groupby(["park", "unit", "component"])["score"]
    windows = np.vstack([
        values.to_numpy()[: (len(values) // 144) * 144].reshape(-1, 144) for _, values in series
    ])
    _, _, _, p_pos = mann_kendall_batch(windows)
    assert np.mean(p_pos > 0.001) >= 0.99


def test_injected_scores_rise_inside_the_frame():
    spec = load_scenario(SCENARIOS / "table1.json")
    records = generate_fleet(spec).records
    frame = next(f for f in spec.frames() if f.case_no == 4)
    scores = records[
        (records["park"] == frame.id.park) & (records["unit"] == frame.id.unit)
        & (records["component"] == frame.id.component)
    ]
    inside = scores[(scores["ts"] >= pd.Timestamp(frame.start)) & (scores["ts"] < pd.Timestamp(frame.end))]
    before = scores[scores["ts"] < pd.Timestamp(frame.start)]
    assert inside["score"].mean() > 3 * before["score"].mean()


@pytest.mark.parametrize(
    "change, message",
    [
        ({"component": "Gearbox"}, "unknown entity"),
        ({"start": "2020-12-01T00:00:00Z"}, "outside"),
        ({"fault_type": "sensor"}, "needs a tuple component"),
        ({"start": "2021-01-05T00:05:00Z"}, "grid"),
    ],
)
def test_invalid_scenarios_are_rejected(change, message):
    injection = {
        "case_no": 1, "park": "P1", "unit": "U1", "component": "FastShaftBearingDE", "fault_type": "bearing",
        "start": "2021-01-05T00:00:00Z", "end": "2021-01-08T00:00:00Z",
        "profile": {"kind": "bearing_trend", "amplitude": 1.0},
    }
    injection.update(change)
    data = {
        "start": "2021-01-01T00:00:00Z", "duration_days": 10,
        "turbines": [{"park": "P1", "unit": "U1"}], "injections": [injection],
    }
    with pytest.raises(ValidationError, match=message):
        validate_model(ScenarioSpec, data, "test")


def test_loose_contact_needs_segment_lengths():
    with pytest.raises(ValueError):
        InjectionProfile(kind="sensor_loose_contact", amplitude=1.0)


def bearing_profile(amplitude: float) -> InjectionProfile:
    return InjectionProfile(kind="bearing_trend", amplitude=amplitude, ramp_shape="linear")


def test_bearing_ramp_creates_a_significant_rms_trend():
    streams = generate_fleet(signal_spec(days=32)).streams
    start, end = START + pd.Timedelta(days=1), START + pd.Timedelta(days=31)
    faulty = inject_bearing_fault(streams, BEARING, (start, end), bearing_profile(1.0), seed=5)
    series = faulty.vibration[BEARING]
    inside = (series.timestamps >= start.value // 10**9) & (series.timestamps < end.value // 10**9)
    rms = np.array([vibration_features(s)["rms"] for s in series.samples[inside]])
    _, _, _, p_pos = mann_kendall_batch(rms[None, :])
    assert p_pos[0] < 0.001


def test_degenerate_bearing_injections_leave_streams_unchanged():
    streams = generate_fleet(signal_spec()).streams
    moment = START + pd.Timedelta(days=2)
    same = inject_bearing_fault(streams, BEARING, (moment, moment), bearing_profile(1.0))
    assert np.array_equal(same.vibration[BEARING].samples, streams.vibration[BEARING].samples)
    silent = inject_bearing_fault(streams, BEARING, (moment, moment + pd.Timedelta(days=2)), bearing_profile(0.0))
    assert np.array_equal(silent.vibration[BEARING].samples, streams.vibration[BEARING].samples)
    with pytest.raises(ValidationError):
        inject_bearing_fault(streams, GENERATOR, (moment, moment + pd.Timedelta(days=1)), bearing_profile(1.0))


def test_sensor_variance_fault_dwarfs_healthy_variance():
    streams = generate_fleet(signal_spec(days=10)).streams
    start = START + pd.Timedelta(days=8)
    profile = InjectionProfile(kind="sensor_variance", amplitude=5.0, channel=2)
    faulty = inject_sensor_fault(streams, GENERATOR, (start, start + pd.Timedelta(days=1)), profile)
    statistics = tuplet_statistics(faulty.tuples[GENERATOR])
    reference = calibrate(statistics[:1008]).reference_statistic
    lo = faulty.grid_index(start)
    assert statistics[lo:lo + 144].mean() > 10 * reference
    assert np.array_equal(faulty.tuples[GENERATOR][:lo], streams.tuples[GENERATOR][:lo])


def test_loose_contact_alternates_corrupted_and_clean_segments():
    streams = generate_fleet(signal_spec(days=20)).streams
    start = START + pd.Timedelta(days=8)
    profile = InjectionProfile(
        kind="sensor_loose_contact", amplitude=5.0, channel=1, faulty_segment_hours=24, healthy_segment_hours=48
    )
    faulty = inject_sensor_fault(streams, GENERATOR, (start, start + pd.Timedelta(days=12)), profile)
    statistics = tuplet_statistics(faulty.tuples[GENERATOR])
    scores = statistics / calibrate(statistics[:1008]).reference_statistic
    lo = faulty.grid_index(start)
    cycle = np.arange(scores.size - lo) % (144 + 288)
    inside = scores[lo:]
    assert inside[cycle < 144].mean() > 10.0
    clean = inside[cycle >= 144]
    assert clean.size >= 3 * 288
    assert np.mean(clean < 1.0) >= 0.99


def test_sensor_injection_errors():
    streams = generate_fleet(signal_spec()).streams
    profile = InjectionProfile(kind="sensor_variance", amplitude=5.0)
    with pytest.raises(ValidationError):
        inject_sensor_fault(streams, BEARING, (START, START + pd.Timedelta(days=1)), profile)
    with pytest.raises(ValidationError, match="outside"):
        inject_sensor_fault(streams, GENERATOR, (START + pd.Timedelta(days=20), START + pd.Timedelta(days=21)), profile)


def test_raw_streams_directory(tmp_path):
    streams = generate_fleet(signal_spec(days=2)).streams
    write_raw_streams(streams, tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {"tuples.csv", "wind.csv", "vibration.bin"}
    assert (tmp_path / "vibration.bin").read_bytes().startswith(b"FDXVIB1")

    loaded = read_raw_streams(tmp_path)
    assert set(loaded.tuples) == set(streams.tuples)
    assert np.allclose(loaded.tuples[GENERATOR], streams.tuples[GENERATOR])
    assert np.array_equal(loaded.vibration[BEARING].samples, streams.vibration[BEARING].samples)
    assert np.array_equal(loaded.vibration[BEARING].timestamps, streams.vibration[BEARING].timestamps)
    assert np.array_equal(loaded.operating[("P1", "U1")], streams.operating[("P1", "U1")])

    payload = (tmp_path / "vibration.bin").read_bytes()
    (tmp_path / "vibration.bin").write_bytes(payload[:-10])
    with pytest.raises(DataFormatError):
        read_raw_streams(tmp_path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
