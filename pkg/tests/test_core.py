"""Core vocabulary: identifiers, time handling, series and window arithmetic."""

from datetime import datetime, timezone

import numpy as np
import pytest

from faultcast.core import (
    CADENCE_S,
    NORMAL_CLASS,
    SYSTEM_RESOURCE,
    AnomalousKpi,
    AnomalyKind,
    FailureClass,
    FaultType,
    KpiId,
    Sample,
    TimeSeries,
    WindowSample,
    format_timestamp,
    hour_of_week,
    parse_timestamp,
    slide_windows,
)


def test_parse_timestamp_known_value():
    ts = parse_timestamp("2016-12-20T22:22:35Z")
    expected = int(datetime(2016, 12, 20, 22, 22, 35, tzinfo=timezone.utc).timestamp())
    assert ts == expected


def test_timestamp_round_trip():
    rng = np.random.default_rng(7)
    for ts in rng.integers(0, 2_000_000_000, size=200):
        text = format_timestamp(int(ts))
        assert parse_timestamp(text) == int(ts), f"round trip broke for {text}"


def test_parse_timestamp_rejects_junk():
    for bad in ("2016-12-20 22:22:35", "2016-12-20T22:22:35", "not-a-time", ""):
        with pytest.raises(ValueError):
            parse_timestamp(bad)


def test_hour_of_week_matches_datetime_oracle():
    rng = np.random.default_rng(11)
    for ts in rng.integers(0, 2_000_000_000, size=500):
        dt = datetime.fromtimestamp(int(ts), tz=timezone.utc)
        expected = dt.weekday() * 24 + dt.hour
        assert hour_of_week(int(ts)) == expected, f"wrong bucket for {dt}"


def test_hour_of_week_vectorized():
    ts = np.array([0, 3600, 86400, 6 * 86400 + 23 * 3600], dtype=np.int64)
    got = hour_of_week(ts)
    assert isinstance(got, np.ndarray)
    assert got.tolist() == [hour_of_week(int(t)) for t in ts]
    assert got.min() >= 0 and got.max() < 168


def test_kpi_id_basics():
    kpi = KpiId("Homer", "BytesSentPerSec")
    assert str(kpi) == "Homer/BytesSentPerSec"
    assert KpiId("A", "b") < KpiId("A", "c") < KpiId("B", "a")
    with pytest.raises(ValueError):
        KpiId("", "metric")
    with pytest.raises(ValueError):
        KpiId("host", "")
    with pytest.raises(ValueError):
        KpiId("host,a", "metric")
    with pytest.raises(ValueError):
        KpiId("host", "metric\n")


def test_sample_rejects_non_finite():
    Sample(1000, 5.0)
    with pytest.raises(ValueError):
        Sample(1000, float("nan"))
    with pytest.raises(ValueError):
        Sample(1000, float("inf"))


def test_time_series_validation():
    kpi = KpiId("Homer", "CpuIdlePct")
    with pytest.raises(ValueError):
        TimeSeries(kpi, [], [])
    with pytest.raises(ValueError):
        TimeSeries(kpi, [10, 10], [1.0, 2.0])  # duplicate timestamp
    with pytest.raises(ValueError):
        TimeSeries(kpi, [10, 5], [1.0, 2.0])  # out of order
    with pytest.raises(ValueError):
        TimeSeries(kpi, [10, 20], [1.0, float("nan")])
    series = TimeSeries(kpi, [10, 20, 30], [1.0, 2.0, 3.0])
    assert series.start == 10 and series.end == 30
    assert series.span_s == 20
    assert not series.timestamps.flags.writeable
    assert not series.values.flags.writeable


def test_time_series_from_samples_round_trip():
    kpi = KpiId("Sprout", "MemUsedPct")
    samples = [Sample(60 * i, float(i)) for i in range(5)]
    series = TimeSeries.from_samples(kpi, samples)
    assert list(series.samples()) == samples


def test_time_series_between_is_half_open():
    kpi = KpiId("Sprout", "MemUsedPct")
    series = TimeSeries(kpi, [0, 60, 120, 180], [0.0, 1.0, 2.0, 3.0])
    ts, vals = series.between(60, 180)
    assert ts.tolist() == [60, 120]
    assert vals.tolist() == [1.0, 2.0]
    ts, vals = series.between(181, 500)
    assert len(ts) == 0 and len(vals) == 0


def test_failure_class_validation():
    assert NORMAL_CLASS.label() == "Normal"
    assert FailureClass(FaultType.PACKET_LOSS, "Homer").label() == "PacketLoss(Homer)"
    assert (
        FailureClass(FaultType.EXCESSIVE_WORKLOAD, SYSTEM_RESOURCE).label()
        == "ExcessiveWorkload(SYSTEM)"
    )
    with pytest.raises(ValueError):
        FailureClass(FaultType.NORMAL, "Homer")
    with pytest.raises(ValueError):
        FailureClass(FaultType.EXCESSIVE_WORKLOAD, "Homer")
    with pytest.raises(ValueError):
        FailureClass(FaultType.CPU_HOG, "")


def test_window_sample_rejects_duplicates():
    kpi = KpiId("Homer", "ErrorsPerSec")
    a = AnomalousKpi(kpi, AnomalyKind.UNIVARIATE, 0)
    b = AnomalousKpi(kpi, AnomalyKind.UNIVARIATE, 300)
    with pytest.raises(ValueError):
        WindowSample(0, 600, frozenset([a, b]))
    # same KPI under a different detector kind is a distinct entry
    c = AnomalousKpi(kpi, AnomalyKind.MULTIVARIATE, 300)
    WindowSample(0, 600, frozenset([a, c]))
    with pytest.raises(ValueError):
        WindowSample(600, 600, frozenset())


def test_slide_windows_matches_enumeration_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        duration_min = int(rng.integers(1, 400))
        l_min = int(rng.integers(1, 200))
        step_min = int(rng.integers(1, 60))
        start = int(rng.integers(0, 10**9))
        end = start + duration_min * 60
        got = slide_windows(start, end, l_min, step_min)
        l_s, step_s = l_min * 60, step_min * 60
        if duration_min * 60 < l_s:
            expected = []
        else:
            expected = [
                (start + off, start + off + l_s)
                for off in range(0, duration_min * 60 - l_s + 1, step_s)
            ]
        assert got == expected, f"dur={duration_min} l={l_min} step={step_min}"


def test_slide_windows_fixed_cases():
    # 100-minute run, 90-minute windows advancing by 7 -> offsets 0 and 7 only
    got = slide_windows(0, 100 * 60, 90, 7)
    assert [(s // 60, e // 60) for s, e in got] == [(0, 90), (7, 97)]
    # run exactly one window long -> a single window
    assert slide_windows(500, 500 + 90 * 60, 90, 5) == [(500, 500 + 90 * 60)]
    # run shorter than the window -> nothing
    assert slide_windows(0, 89 * 60, 90, 5) == []
    with pytest.raises(ValueError):
        slide_windows(0, 6000, 0, 5)
    with pytest.raises(ValueError):
        slide_windows(0, 6000, 90, 0)


def test_cadence_constant():
    assert CADENCE_S == 60
