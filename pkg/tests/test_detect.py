"""Interval detectors: seasonal-band checks, edge-residual checks, streaming."""

import logging

import numpy as np
import pytest

from faultcast.baseline import BaselineModel, GrangerEdge, UnivariateBaseline
from faultcast.core import (
    HOURS_PER_WEEK,
    AnomalyKind,
    CsvParseError,
    KpiId,
    TimeSeries,
)
from faultcast.detect import (
    AnomalyEvent,
    detect_multivariate,
    detect_stream,
    detect_univariate,
    predict_from_edge,
    read_anomaly_log,
    write_anomaly_log,
)


def flat_baseline(kpi, mean, std, k_sigma=3.0):
    return UnivariateBaseline(
        kpi=kpi,
        bucket_means=np.full(HOURS_PER_WEEK, float(mean)),
        bucket_stds=np.full(HOURS_PER_WEEK, float(std)),
        k_sigma=k_sigma,
        std_floor=1e-12,
        global_mean=float(mean),
        global_std=float(std),
    )


# ---------------------------------------------------------------------------
# univariate


def test_univariate_peak_score():
    baseline = flat_baseline(KpiId("Homer", "CpuIdlePct"), 100.0, 2.0)
    event = detect_univariate(baseline, [0, 60, 120], [101.0, 107.0, 99.0])
    assert event is not None
    assert event.score == pytest.approx(3.5)
    assert event.kind is AnomalyKind.UNIVARIATE
    assert event.interval_start == 0
    event = detect_univariate(baseline, [0, 60, 120], [101.0, 107.0, 99.0], interval_start=600)
    assert event.interval_start == 600


def test_univariate_threshold_is_strict():
    baseline = flat_baseline(KpiId("Homer", "CpuIdlePct"), 100.0, 2.0)
    # |106 - 100| / 2 == 3.0 exactly: on the line is not an anomaly
    assert detect_univariate(baseline, [0, 60], [106.0, 100.0]) is None
    assert detect_univariate(baseline, [0, 60], [106.001, 100.0]) is not None
    # the band is symmetric
    assert detect_univariate(baseline, [0], [93.9]) is not None
    assert detect_univariate(baseline, [], []) is None


# ---------------------------------------------------------------------------
# multivariate


def make_edge(residual_std=0.25, coefficients=(1.0, 0.5, 2.0)):
    return GrangerEdge(
        cause=KpiId("A", "x"),
        effect=KpiId("B", "y"),
        weight=0.999,
        lag_order=(len(coefficients) - 1) // 2,
        coefficients=coefficients,
        residual_std=residual_std,
    )


def follow_edge(edge, x, offset=0.0, y0=0.0):
    """Build y so each step matches the edge's regression plus an offset."""
    c0, a1, b1 = edge.coefficients
    y = [y0]
    for t in range(1, len(x)):
        y.append(c0 + a1 * y[t - 1] + b1 * x[t - 1] + offset)
    return np.asarray(y)


def test_multivariate_exact_fit_scores_zero():
    edge = make_edge()
    x = np.array([0.4, -1.2, 0.7, 2.0, -0.3, 1.1])
    y = follow_edge(edge, x)
    pred = predict_from_edge(edge, x, y)
    assert np.allclose(y[1:], pred, atol=1e-12)
    # score 0 clears no threshold, not even zero
    assert detect_multivariate(edge, x, y, h=4, tau=0.0) is None


def test_multivariate_five_sigma_offset():
    edge = make_edge(residual_std=0.25)
    x = np.array([0.4, -1.2, 0.7, 2.0, -0.3, 1.1])
    y = follow_edge(edge, x, offset=5 * edge.residual_std)
    event = detect_multivariate(edge, x, y, h=4, tau=3.0, interval_start=900)
    assert event is not None
    assert event.score == pytest.approx(5.0, abs=1e-9)
    assert event.kpi == edge.effect
    assert event.kind is AnomalyKind.MULTIVARIATE
    assert event.interval_start == 900
    # the same deviation clears a loose threshold but not a tight one
    assert detect_multivariate(edge, x, y, h=4, tau=5.0) is None


def test_multivariate_input_gates():
    edge = make_edge()
    x = np.zeros(3)
    with pytest.raises(ValueError):
        detect_multivariate(edge, x, x, h=0)
    # p + h = 1 + 4 exceeds the 3 available samples
    assert detect_multivariate(edge, x, x, h=4) is None


# ---------------------------------------------------------------------------
# streaming over a run


def test_stream_empty_input():
    model = BaselineModel(baselines={}, edges=())
    assert detect_stream(model, {}, 0) == []


def test_stream_rejects_bad_interval():
    model = BaselineModel(baselines={}, edges=())
    with pytest.raises(ValueError):
        detect_stream(model, {}, 0, interval_s=90)
    with pytest.raises(ValueError):
        detect_stream(model, {}, 0, interval_s=0)


def test_stream_skips_unknown_kpi(caplog):
    known = KpiId("Homer", "CpuIdlePct")
    unknown = KpiId("Homer", "Mystery")
    model = BaselineModel(baselines={known: flat_baseline(known, 0.0, 1.0)}, edges=())
    ts = 60 * np.arange(5, dtype=np.int64)
    series = {unknown: TimeSeries(unknown, ts, np.full(5, 99.0))}
    with caplog.at_level(logging.WARNING):
        events = detect_stream(model, series, 0)
    assert events == []
    assert "no baseline" in caplog.text


def test_stream_coverage_rule():
    kpi = KpiId("Homer", "CpuIdlePct")
    model = BaselineModel(baselines={kpi: flat_baseline(kpi, 0.0, 1.0)}, edges=())
    # two of the expected five samples: below half coverage, stays silent
    # even though the values are far outside the band
    sparse = TimeSeries(kpi, [0, 60], [50.0, 50.0])
    assert detect_stream(model, {kpi: sparse}, 0) == []
    # three of five is enough
    dense = TimeSeries(kpi, [0, 60, 120], [50.0, 50.0, 50.0])
    events = detect_stream(model, {kpi: dense}, 0)
    assert len(events) == 1 and events[0].score == pytest.approx(50.0)


def test_stream_keeps_worst_verdict_per_effect():
    kx1, kx2, ky = KpiId("A", "x1"), KpiId("A", "x2"), KpiId("B", "y")
    baselines = {
        kx1: flat_baseline(kx1, 0.0, 1000.0),
        kx2: flat_baseline(kx2, 0.0, 1000.0),
        ky: flat_baseline(ky, 1.0, 1000.0),
    }
    # identical regressions, different residual scales -> the second edge
    # scores the same deviation twice as high
    shared = dict(weight=0.99, lag_order=1, coefficients=(0.0, 0.0, 1.0))
    edges = (
        GrangerEdge(cause=kx1, effect=ky, residual_std=1.0, **shared),
        GrangerEdge(cause=kx2, effect=ky, residual_std=0.5, **shared),
    )
    model = BaselineModel(baselines=baselines, edges=edges)
    ts = 60 * np.arange(15, dtype=np.int64)
    series = {
        kx1: TimeSeries(kx1, ts, np.zeros(15)),
        kx2: TimeSeries(kx2, ts, np.zeros(15)),
        ky: TimeSeries(ky, ts, np.ones(15)),
    }
    events = detect_stream(model, series, 0, tau=0.5)
    multivariate = [e for e in events if e.kind is AnomalyKind.MULTIVARIATE]
    # the first interval lacks a full lag history; the later two each carry
    # exactly one verdict for the effect KPI, at the worse of the two scores
    assert [e.interval_start for e in multivariate] == [300, 600]
    for event in multivariate:
        assert event.kpi == ky
        assert event.score == pytest.approx(2.0)


def test_stream_results_are_sorted():
    kpi_a, kpi_b = KpiId("A", "m"), KpiId("B", "m")
    model = BaselineModel(
        baselines={kpi_a: flat_baseline(kpi_a, 0.0, 1.0), kpi_b: flat_baseline(kpi_b, 0.0, 1.0)},
        edges=(),
    )
    ts = 60 * np.arange(10, dtype=np.int64)
    series = {
        kpi_b: TimeSeries(kpi_b, ts, np.full(10, 9.0)),
        kpi_a: TimeSeries(kpi_a, ts, np.full(10, 9.0)),
    }
    events = detect_stream(model, series, 0)
    assert events == sorted(events)
    assert {e.kpi for e in events} == {kpi_a, kpi_b}


# ---------------------------------------------------------------------------
# log round trip


def test_anomaly_log_round_trip(tmp_path):
    events = [
        AnomalyEvent(0, KpiId("Homer", "CpuIdlePct"), AnomalyKind.UNIVARIATE, 3.5),
        AnomalyEvent(300, KpiId("Sprout", "MemUsedPct"), AnomalyKind.MULTIVARIATE, 7.25),
    ]
    path = tmp_path / "anomalies.csv"
    write_anomaly_log(events, path)
    assert read_anomaly_log(path) == events
    write_anomaly_log([], path)
    assert read_anomaly_log(path) == []


def test_anomaly_log_rejects_bad_header(tmp_path):
    path = tmp_path / "anomalies.csv"
    path.write_text("interval,resource,metric,kind,score\n")
    with pytest.raises(CsvParseError):
        read_anomaly_log(path)


def test_event_validation():
    kpi = KpiId("Homer", "CpuIdlePct")
    with pytest.raises(ValueError):
        AnomalyEvent(0, kpi, AnomalyKind.UNIVARIATE, -1.0)
    with pytest.raises(ValueError):
        AnomalyEvent(0, kpi, AnomalyKind.UNIVARIATE, float("nan"))


# ---------------------------------------------------------------------------
# detector noise floor on clean traffic


def test_fault_free_event_rate_stays_below_two_percent(suite_data):
    """On nominal fault-free runs the detectors may flag at most 2% of the
    (KPI x interval) slots."""
    checked = 0
    for rec in suite_data.runs:
        if rec.manifest.fault is not None or "dev" in rec.manifest.run_id:
            continue
        manifest = rec.manifest
        n_intervals = (manifest.end - manifest.start) // 300
        slots = len(suite_data.baseline.kpis) * n_intervals
        rate = len(rec.events) / slots
        assert rate <= 0.02, f"{manifest.run_id}: {rate:.4f} of {slots} slots flagged"
        checked += 1
    assert checked >= 3
