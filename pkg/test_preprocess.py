#!/usr/bin/env python3
"""
Tests for operating-mode filtering, labeling, forward fill and bbcv column choice
"""

import sys

import numpy as np
import pandas as pd
import pytest

from anomaly_space.domain import EntityId, FaultClass, FaultFrame
from anomaly_space.errors import ValidationError
from anomaly_space.preprocess import (
    BASE_TABLE_COLUMNS,
    assemble_base_table,
    assign_labels,
    build_base_table,
    filter_operating_mode,
    forward_fill,
    reduce_bbcv_columns,
)

START = pd.Timestamp("2021-01-01", tz="UTC")


def grid(steps: int) -> pd.DatetimeIndex:
    return pd.date_range(START, periods=steps, freq="10min")


def records(rows) -> pd.DataFrame:
    """rows: (step, park, unit, component, detector, score, operating, feature)"""
    return pd.DataFrame(
        [
            {
                "ts": START + pd.Timedelta(minutes=10 * step),
                "park": park,
                "unit": unit,
                "component": component,
                "detector": detector,
                "score": score,
                "operating": operating,
                "feature": feature,
            }
            for step, park, unit, component, detector, score, operating, feature in rows
        ]
    )


def test_filter_operating_mode():
    frame = records(
        [(0, "P1", "U1", "G", "tuplet", 0.1, True, ""), (1, "P1", "U1", "G", "tuplet", 0.2, False, ""),
         (2, "P1", "U1", "G", "tuplet", 0.3, True, "")]
    )
    assert filter_operating_mode(frame)["score"].tolist() == [0.1, 0.3]
    assert filter_operating_mode(frame[frame["operating"]]).shape[0] == 2
    assert filter_operating_mode(frame[~frame["operating"]]).empty


def test_assign_labels_uses_half_open_frames():
    entity = EntityId("P1", "U1", "G")
    frame = FaultFrame(id=entity, fault=FaultClass.SENSOR_FAULT, start=START + pd.Timedelta(minutes=10),
                       end=START + pd.Timedelta(minutes=30), case_no=1)
    rows = pd.DataFrame({"ts": grid(4), "park": "P1", "unit": "U1", "component": "G"})
    assert assign_labels(rows, [frame]).tolist() == [0, 2, 2, 0]

    others = rows.assign(component="DE")
    assert assign_labels(others, [frame]).tolist() == [0, 0, 0, 0]


def test_forward_fill_short_gap():
    series = pd.Series([1.2, np.nan, np.nan, np.nan, 0.7])
    assert forward_fill(series).tolist() == [1.2, 1.2, 1.2, 1.2, 0.7]


def test_forward_fill_stops_after_three_hours():
    series = pd.Series([1.2] + [np.nan] * 20)
    filled = forward_fill(series).tolist()
    assert filled[1:19] == [1.2] * 18
    assert filled[19:] == [0.0, 0.0]


def test_forward_fill_leading_gap_and_idempotence():
    series = pd.Series([np.nan, np.nan, 2.0, np.nan, 3.0])
    once = forward_fill(series)
    assert once.tolist() == [0.0, 0.0, 2.0, 2.0, 3.0]
    assert forward_fill(once).tolist() == once.tolist()


def test_forward_fill_never_changes_observations():
    rng = np.random.default_rng(11)
    values = rng.normal(size=200)
    values[rng.random(200) < 0.4] = np.nan
    series = pd.Series(values)
    filled = forward_fill(series)
    observed = series.notna()
    assert filled[observed].tolist() == series[observed].tolist()
    assert filled.notna().all()


@pytest.mark.parametrize(
    "columns, expected",
    [
        ({"a": [0.0, 0.2 ** 0.5 * 2], "b": [0.0, 0.9 ** 0.5 * 2], "c": [0.0, 0.5 ** 0.5 * 2]}, "b"),
        ({"only": [1.0, 2.0]}, "only"),
        ({"first": [0.0, 1.0], "second": [1.0, 2.0]}, "first"),
    ],
)
def test_reduce_bbcv_columns(columns, expected):
    assert reduce_bbcv_columns(pd.DataFrame(columns)).column == expected


def test_reduce_bbcv_columns_ignores_constant_columns_and_respects_fit_rows():
    frame = pd.DataFrame({"noisy": [0.0, 5.0, 0.0, 0.0], "const": [1.0] * 4, "steady": [0.0, 1.0, 2.0, 3.0]})
    assert reduce_bbcv_columns(frame).column == "noisy"
    assert reduce_bbcv_columns(frame, [False, False, True, True]).column == "steady"
    with pytest.raises(ValidationError):
        reduce_bbcv_columns(frame[[]])


def test_build_base_table():
    rows = [(step, "P1", "U1", "G", "tuplet", 0.5, True, "") for step in range(6)]
    rows.append((3, "P1", "U2", "G", "tuplet", 0.4, True, ""))
    rows += [(step, "P1", "U1", "DE", "bbcv", float(step), True, "rms") for step in range(6)]
    rows += [(step, "P1", "U1", "DE", "bbcv", 0.1, True, "mean") for step in range(6)]
    frames = [
        FaultFrame(id=EntityId("P1", "U1", "DE"), fault=FaultClass.BEARING_FAULT,
                   start=START + pd.Timedelta(minutes=30), end=START + pd.Timedelta(hours=2), case_no=1)
    ]
    table, selection = build_base_table(records(rows), frames)

    assert list(table.columns[:len(BASE_TABLE_COLUMNS)]) == BASE_TABLE_COLUMNS
    assert selection.column == "bbcv__rms"
    assert len(table) == 3 * 6
    assert not table[["bbcv_base", "tuplet_base"]].isna().any().any()

    de = table[table["component"] == "DE"]
    assert de["bbcv_base"].tolist() == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert de["tuplet_base"].tolist() == [0.0] * 6
    assert de["label"].tolist() == [0, 0, 0, 1, 1, 1]

    u2 = table[table["unit"] == "U2"]
    assert u2["tuplet_base"].tolist() == [0.0, 0.0, 0.0, 0.4, 0.4, 0.4]
    assert (table[table["component"] == "G"]["label"] == 0).all()


def test_non_operating_records_are_treated_as_missing():
    rows = [(0, "P1", "U1", "G", "tuplet", 0.5, True, ""), (1, "P1", "U1", "G", "tuplet", 7.0, False, ""),
            (2, "P1", "U1", "G", "tuplet", 0.6, True, "")]
    table, selection = build_base_table(records(rows), [], fill_horizon=0)
    assert table["tuplet_base"].tolist() == [0.5, 0.0, 0.6]
    assert selection.column is None


def test_duplicate_records_are_rejected():
    rows = [(0, "P1", "U1", "G", "tuplet", 0.5, True, ""), (0, "P1", "U1", "G", "tuplet", 0.7, True, "")]
    with pytest.raises(ValidationError, match="Duplicate"):
        build_base_table(records(rows), [])


def test_fit_turbines_drive_the_bbcv_choice():
    rows = [(step, "P1", "U1", "DE", "bbcv", float(step % 2) * 4, True, "kurtosis") for step in range(4)]
    rows += [(step, "P1", "U1", "DE", "bbcv", 0.0, True, "rms") for step in range(4)]
    rows += [(step, "P2", "U1", "DE", "bbcv", 0.0, True, "kurtosis") for step in range(4)]
    rows += [(step, "P2", "U1", "DE", "bbcv", float(step), True, "rms") for step in range(4)]
    _, everything = build_base_table(records(rows), [])
    _, p2_only = build_base_table(records(rows), [], fit_turbines={("P2", "U1")})
    assert everything.column == "bbcv__kurtosis"
    assert p2_only.column == "bbcv__rms"


def filled_columns(steps) -> pd.DataFrame:
    index = pd.MultiIndex.from_tuples(
        [(START + pd.Timedelta(minutes=10 * s), "P1", "U1", "GeneratorTemperature") for s in steps],
        names=["ts", "park", "unit", "component"],
    )
    return pd.DataFrame({"tuplet": [0.5] * len(steps), "bbcv__rms": [0.2] * len(steps)}, index=index)


def test_assemble_base_table():
    table = assemble_base_table(filled_columns(range(4)), [0, 0, 2, 2])
    assert list(table.columns[: len(BASE_TABLE_COLUMNS)]) == BASE_TABLE_COLUMNS
    assert table["bbcv_base"].eq(0.0).all()
    assert table["tuplet_base"].eq(0.5).all()
    assert table["label"].tolist() == [0, 0, 2, 2]
    assert "bbcv__rms" in table.columns


def test_assemble_base_table_rejects_misaligned_input():
    with pytest.raises(ValidationError, match="3 labels for 4"):
        assemble_base_table(filled_columns(range(4)), [0, 0, 0])
    gappy = filled_columns([0, 1, 3])
    with pytest.raises(ValidationError, match="10-minute grid"):
        assemble_base_table(gappy, [0, 0, 0])
    holes = filled_columns(range(3))
    holes.iloc[1, 0] = np.nan
    with pytest.raises(ValidationError, match="missing values"):
        assemble_base_table(holes, [0, 0, 0])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
