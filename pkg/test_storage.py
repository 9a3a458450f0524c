#!/usr/bin/env python3
"""
Tests for the CSV/JSON artifact formats
"""

import sys
from datetime import datetime, timezone

import pytest

from anomaly_space.domain import AnomalyRecord, DatasetSplit, EntityId, FaultClass, FaultFrame
from anomaly_space.errors import DataFormatError, ValidationError
from anomaly_space.storage import (
    RECORD_COLUMNS_WITH_FEATURE,
    frame_to_records,
    read_anomaly_records,
    read_fault_frames,
    read_json,
    read_splits,
    records_to_frame,
    write_anomaly_records,
    write_fault_frames,
    write_splits,
)

ENTITY = EntityId("P3", "U1", "DE")


def test_anomaly_records_survive_a_file(tmp_path):
    records = [
        AnomalyRecord(ts=datetime(2021, 1, 1, 0, 10, tzinfo=timezone.utc), id=ENTITY, detector="bbcv",
                      score=2.5, feature="rms"),
        AnomalyRecord(ts=datetime(2021, 1, 1, 0, 20, tzinfo=timezone.utc), id=ENTITY, detector="tuplet",
                      score=0.0, operating=False),
    ]
    path = tmp_path / "records.csv"
    write_anomaly_records(records_to_frame(records), path)

    text = path.read_text()
    assert text.splitlines()[0] == ",".join(RECORD_COLUMNS_WITH_FEATURE)
    assert "2021-01-01T00:10:00Z,P3,U1,DE,bbcv,2.5,true,rms" in text
    assert "\r" not in text

    assert frame_to_records(read_anomaly_records(path)) == records


def test_record_file_without_feature_column(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text(
        "ts,park,unit,component,detector,score,operating\n"
        "2021-01-01T00:00:00Z,P1,U1,GeneratorTemperature,tuplet,0.4,true\n"
    )
    frame = read_anomaly_records(path)
    assert list(frame["feature"]) == [""]
    assert bool(frame["operating"].iloc[0])


@pytest.mark.parametrize(
    "body",
    [
        "2021-01-01T00:00:00Z,P1,U1,G,tuplet,abc,true\n",
        "2021-01-01T00:00:00Z,P1,U1,G,tuplet,-1,true\n",
        "2021-01-01T00:00:00Z,P1,U1,G,vibration,0.5,true\n",
        "2021-01-01T00:00:00Z,P1,U1,G,tuplet,0.5,maybe\n",
        "not-a-time,P1,U1,G,tuplet,0.5,true\n",
    ],
)
def test_bad_record_rows_are_rejected(tmp_path, body):
    path = tmp_path / "records.csv"
    path.write_text("ts,park,unit,component,detector,score,operating\n" + body)
    with pytest.raises(DataFormatError):
        read_anomaly_records(path)


def test_missing_columns_are_named(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("ts,park,unit\n2021-01-01T00:00:00Z,P1,U1\n")
    with pytest.raises(DataFormatError, match="component"):
        read_anomaly_records(path)


def test_missing_file_is_not_a_format_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_anomaly_records(tmp_path / "absent.csv")


def test_fault_frames_and_splits(tmp_path):
    frames = [
        FaultFrame(id=ENTITY, fault=FaultClass.BEARING_FAULT, start="2021-01-05T00:00:00Z",
                   end="2021-01-10T00:00:00Z", case_no=4),
    ]
    write_fault_frames(frames, tmp_path / "frames.json")
    data = read_json(tmp_path / "frames.json")
    assert data[0]["fault_type"] == "bearing"
    assert data[0]["start"] == "2021-01-05T00:00:00Z"
    assert read_fault_frames(tmp_path / "frames.json") == frames

    splits = [DatasetSplit("test", (8, 7)), DatasetSplit("train", (1, 2))]
    write_splits(splits, tmp_path / "splits.json")
    assert read_json(tmp_path / "splits.json") == {"test": [7, 8], "train": [1, 2]}
    assert read_splits(tmp_path / "splits.json") == sorted(splits, key=lambda s: s.role)


def test_invalid_json_and_bad_frames(tmp_path):
    path = tmp_path / "frames.json"
    path.write_text("[{")
    with pytest.raises(DataFormatError):
        read_fault_frames(path)

    path.write_text('[{"park": "P1"}]')
    with pytest.raises(DataFormatError, match="missing field"):
        read_fault_frames(path)

    path.write_text(
        '[{"park": "P1", "unit": "U1", "component": "DE", "fault_type": "bearing",'
        ' "start": "2021-01-02T00:00:00Z", "end": "2021-01-01T00:00:00Z", "case_no": 5}]'
    )
    with pytest.raises(ValidationError, match="case 5"):
        read_fault_frames(path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
