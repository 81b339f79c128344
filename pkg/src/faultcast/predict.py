"""Online failure prediction: the alert state machine and earliness measures."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

from .baseline import BaselineModel
from .core import (
    INTERVAL_S,
    AnomalousKpi,
    AnomalyKind,
    FailureClass,
    KpiId,
    OrderingError,
    TimeSeries,
    format_timestamp,
)
from .detect import AnomalyEvent, detect_stream
from .io import RunManifest
from .signature import SignatureModel

DEFAULT_CONFIDENCE = 0.9
DEFAULT_STREAK = 4

ALERT_LOG_HEADER = ["raised_at", "kind", "fault_type", "resource", "confidence", "evidence_count"]


class AlertKind(str, Enum):
    GENERAL = "General"
    FAILURE_SPECIFIC = "FailureSpecific"


@dataclass(frozen=True)
class Alert:
    """A prediction raised online.

    General alerts say "something non-nominal is building up" and carry no
    class; failure-specific alerts name the (fault type, resource) pair and
    are only raised at or above the confidence threshold.
    """

    kind: AlertKind
    raised_at: int
    failure_class: Optional[FailureClass]
    confidence: float
    evidence: frozenset

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.kind is AlertKind.FAILURE_SPECIFIC:
            if self.failure_class is None or self.failure_class.is_normal:
                raise ValueError("failure-specific alerts must carry a non-Normal class")


@dataclass(frozen=True)
class PredictorState:
    """Immutable predictor state threaded through :func:`step`.

    The buffer holds (interval_start, events) pairs still inside the sliding
    window; the streak counts consecutive intervals whose top class stayed the
    same at or above the confidence threshold.
    """

    window_min: int
    interval_s: int = INTERVAL_S
    buffer: Tuple[Tuple[int, Tuple[AnomalyEvent, ...]], ...] = ()
    last_interval: Optional[int] = None
    streak_class: Optional[FailureClass] = None
    streak_len: int = 0
    active_class: Optional[FailureClass] = None
    fs_fired: bool = False

    def window_anomalies(self) -> frozenset:
        first_seen: Dict[Tuple[KpiId, AnomalyKind], int] = {}
        for interval_start, events in self.buffer:
            for event in events:
                key = (event.kpi, event.kind)
                seen = first_seen.get(key)
                if seen is None or event.interval_start < seen:
                    first_seen[key] = event.interval_start
        return frozenset(
            AnomalousKpi(kpi, kind, seen) for (kpi, kind), seen in first_seen.items()
        )


def new_state(window_min: int = 90, interval_s: int = INTERVAL_S) -> PredictorState:
    if window_min <= 0 or interval_s <= 0:
        raise ValueError("window length and interval must be positive")
    return PredictorState(window_min=window_min, interval_s=interval_s)


def step(
    state: PredictorState,
    interval_start: int,
    events: Sequence[AnomalyEvent],
    signature: SignatureModel,
    *,
    confidence_threshold: float = DEFAULT_CONFIDENCE,
    streak_needed: int = DEFAULT_STREAK,
) -> Tuple[PredictorState, Optional[Alert]]:
    """Consume one collection interval's anomaly events.

    Pure: returns the successor state and at most one alert.  A General alert
    fires when the window's top class turns non-Normal (or switches to a new
    class, which restarts the lifecycle); a FailureSpecific alert fires once
    per streak after ``streak_needed`` consecutive intervals of the same class
    at or above ``confidence_threshold``.  All-Normal input never alerts.
    """
    if state.last_interval is not None and interval_start <= state.last_interval:
        raise OrderingError(
            f"interval {format_timestamp(interval_start)} is not after "
            f"{format_timestamp(state.last_interval)}"
        )
    window_s = state.window_min * 60
    window_end = interval_start + state.interval_s
    window_start = window_end - window_s
    buffer = tuple(
        (start, evs) for start, evs in state.buffer if start >= window_start
    ) + ((interval_start, tuple(events)),)

    interim = replace(state, buffer=buffer, last_interval=interval_start)
    anomalies = interim.window_anomalies()
    dist = signature.classify_window(anomalies)
    top_class, top_p = dist.top()

    raised_at = window_end
    alert: Optional[Alert] = None

    if top_class.is_normal:
        return (
            replace(
                interim,
                streak_class=None,
                streak_len=0,
                active_class=None,
                fs_fired=False,
            ),
            None,
        )

    # streak bookkeeping: reset on class change or low confidence
    if top_p >= confidence_threshold:
        if state.streak_class == top_class:
            streak_class, streak_len = top_class, state.streak_len + 1
            fs_fired = state.fs_fired
        else:
            streak_class, streak_len, fs_fired = top_class, 1, False
    else:
        streak_class, streak_len, fs_fired = None, 0, False

    active_class = state.active_class
    if active_class != top_class:
        # lifecycle (re)starts with a General alert for the new class context
        alert = Alert(
            kind=AlertKind.GENERAL,
            raised_at=raised_at,
            failure_class=None,
            confidence=top_p,
            evidence=anomalies,
        )
        active_class = top_class
    elif streak_len >= streak_needed and not fs_fired:
        alert = Alert(
            kind=AlertKind.FAILURE_SPECIFIC,
            raised_at=raised_at,
            failure_class=top_class,
            confidence=top_p,
            evidence=anomalies,
        )
        fs_fired = True

    return (
        replace(
            interim,
            streak_class=streak_class,
            streak_len=streak_len,
            active_class=active_class,
            fs_fired=fs_fired,
        ),
        alert,
    )


def run_predictor(
    baseline: BaselineModel,
    signature: SignatureModel,
    series_map: Dict[KpiId, TimeSeries],
    run_start: int,
    run_end: int,
    *,
    interval_s: int = INTERVAL_S,
    tau: float = 3.0,
    confidence_threshold: float = DEFAULT_CONFIDENCE,
    streak_needed: int = DEFAULT_STREAK,
) -> List[Alert]:
    """Detect anomalies over a run and replay them through the predictor."""
    events = detect_stream(baseline, series_map, run_start, interval_s=interval_s, tau=tau)
    by_interval: Dict[int, List[AnomalyEvent]] = {}
    for event in events:
        by_interval.setdefault(event.interval_start, []).append(event)
    state = new_state(signature.window_min, interval_s)
    alerts: List[Alert] = []
    start = run_start
    while start < run_end:
        state, alert = step(
            state,
            start,
            by_interval.get(start, ()),
            signature,
            confidence_threshold=confidence_threshold,
            streak_needed=streak_needed,
        )
        if alert is not None:
            alerts.append(alert)
        start += interval_s
    return alerts


# ---------------------------------------------------------------------------
# earliness


@dataclass(frozen=True)
class EarlinessReport:
    """Time-to-prediction and time-to-failure measures for one faulty run.

    Times are in seconds.  A measure is None when the corresponding alert was
    never raised; the time-to-failure measures are None with
    ``failure_observed`` False when no failure landed inside the horizon (and
    render as "> horizon").  Alerts raised before the fault became active do
    not produce negative times; they are tallied in ``false_alarms``.
    """

    ttgp_s: Optional[int]
    ttfsp_s: Optional[int]
    ttf_gp_s: Optional[int]
    ttf_fsp_s: Optional[int]
    failure_observed: bool
    horizon_s: int
    false_alarms: int

    @staticmethod
    def _minutes(seconds: Optional[int]) -> str:
        return f"{seconds / 60:.0f} mins"

    def render_ttgp(self) -> str:
        return "none" if self.ttgp_s is None else self._minutes(self.ttgp_s)

    def render_ttfsp(self) -> str:
        return "none" if self.ttfsp_s is None else self._minutes(self.ttfsp_s)

    def _render_ttf(self, value: Optional[int], alerted: bool) -> str:
        if not alerted:
            return "none"
        if not self.failure_observed:
            return f"> {self.horizon_s // 60} mins"
        return self._minutes(value)

    def render_ttf_gp(self) -> str:
        return self._render_ttf(self.ttf_gp_s, self.ttgp_s is not None)

    def render_ttf_fsp(self) -> str:
        return self._render_ttf(self.ttf_fsp_s, self.ttfsp_s is not None)


def measure_earliness(
    alerts: Sequence[Alert], manifest: RunManifest, *, horizon_s: Optional[int] = None
) -> EarlinessReport:
    """Compare the alert stream against a faulty run's ground truth.

    TTGP/TTFSP measure injection-to-alert delay for the first General and
    FailureSpecific alert at or after the fault became active; TTF measures
    alert-to-failure lead time when the run failed inside the horizon.
    """
    if manifest.fault is None:
        raise ValueError(f"run {manifest.run_id} seeded no fault; earliness is undefined")
    injection = manifest.fault.injection_time
    if horizon_s is None:
        horizon_s = manifest.end - manifest.start

    false_alarms = sum(1 for a in alerts if a.raised_at < injection)
    first_gp = next(
        (a for a in alerts if a.kind is AlertKind.GENERAL and a.raised_at >= injection), None
    )
    first_fsp = next(
        (
            a
            for a in alerts
            if a.kind is AlertKind.FAILURE_SPECIFIC and a.raised_at >= injection
        ),
        None,
    )
    failure = manifest.failure_time
    ttgp = None if first_gp is None else first_gp.raised_at - injection
    ttfsp = None if first_fsp is None else first_fsp.raised_at - injection
    ttf_gp = None
    ttf_fsp = None
    if failure is not None:
        if first_gp is not None:
            ttf_gp = failure - first_gp.raised_at
        if first_fsp is not None:
            ttf_fsp = failure - first_fsp.raised_at
    return EarlinessReport(
        ttgp_s=ttgp,
        ttfsp_s=ttfsp,
        ttf_gp_s=ttf_gp,
        ttf_fsp_s=ttf_fsp,
        failure_observed=failure is not None,
        horizon_s=horizon_s,
        false_alarms=false_alarms,
    )


# ---------------------------------------------------------------------------
# the alert log


def write_alert_log(alerts: Sequence[Alert], target: Union[str, os.PathLike, TextIO]) -> None:
    """Write alerts as CSV: raised_at,kind,fault_type,resource,confidence,evidence_count."""
    if isinstance(target, (str, os.PathLike)):
        stream = open(target, "w", encoding="utf-8", newline="")
        owned = True
    else:
        stream, owned = target, False
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(ALERT_LOG_HEADER)
        for alert in alerts:
            cls = alert.failure_class
            writer.writerow(
                [
                    format_timestamp(alert.raised_at),
                    alert.kind.value,
                    "" if cls is None else cls.fault_type.value,
                    "" if cls is None else cls.resource,
                    repr(alert.confidence),
                    len(alert.evidence),
                ]
            )
    finally:
        if owned:
            stream.close()
