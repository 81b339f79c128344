"""File formats: the KPI sample CSV and the JSON run manifest."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Dict, Optional, TextIO, Union

from .core import (
    CsvParseError,
    DuplicateSampleError,
    FaultType,
    KpiId,
    SchemaVersionError,
    TimeSeries,
    format_timestamp,
    parse_timestamp,
)

CSV_HEADER = ["timestamp", "resource", "metric", "value"]

MANIFEST_KIND = "faultcast-run-manifest"
MANIFEST_SCHEMA_VERSION = 1


def _open_text(path_or_stream, mode: str):
    if isinstance(path_or_stream, (str, os.PathLike)):
        return open(path_or_stream, mode, encoding="utf-8", newline=""), True
    return path_or_stream, False


def ingest_csv(source: Union[str, os.PathLike, TextIO]) -> Dict[KpiId, TimeSeries]:
    """Read a KPI sample CSV into a map KpiId -> TimeSeries.

    The header must be exactly ``timestamp,resource,metric,value``.  Rows may
    arrive in any order; samples are sorted per KPI.  Malformed rows raise
    :class:`CsvParseError` with the offending line number, a repeated
    (timestamp, KPI) pair raises :class:`DuplicateSampleError`.
    """
    stream, owned = _open_text(source, "r")
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise CsvParseError(1, f"expected header {','.join(CSV_HEADER)!r}, got {header!r}")
        rows: Dict[KpiId, list] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CsvParseError(line_no, f"expected 4 fields, got {len(row)}")
            ts_text, resource, metric, value_text = row
            try:
                ts = parse_timestamp(ts_text)
            except ValueError:
                raise CsvParseError(line_no, f"bad timestamp {ts_text!r}") from None
            try:
                kpi = KpiId(resource, metric)
            except ValueError as exc:
                raise CsvParseError(line_no, str(exc)) from None
            try:
                value = float(value_text)
            except ValueError:
                raise CsvParseError(line_no, f"bad value {value_text!r}") from None
            if not math.isfinite(value):
                raise CsvParseError(line_no, f"non-finite value {value_text!r}")
            rows.setdefault(kpi, []).append((ts, value, line_no))
        result: Dict[KpiId, TimeSeries] = {}
        for kpi, triples in rows.items():
            triples.sort(key=lambda t: (t[0], t[2]))
            for a, b in zip(triples, triples[1:]):
                if a[0] == b[0]:
                    raise DuplicateSampleError(
                        b[2], f"duplicate sample for {kpi} at {format_timestamp(b[0])}"
                    )
            result[kpi] = TimeSeries(kpi, [t[0] for t in triples], [t[1] for t in triples])
        return result
    finally:
        if owned:
            stream.close()


def write_csv(series_map: Dict[KpiId, TimeSeries], target: Union[str, os.PathLike, TextIO]) -> None:
    """Serialize a KPI map to CSV, grouped by KPI in sorted order.

    The output re-ingests to an equal map and is byte-stable for equal input.
    """
    stream, owned = _open_text(target, "w")
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for kpi in sorted(series_map):
            series = series_map[kpi]
            for ts, value in zip(series.timestamps, series.values):
                writer.writerow(
                    [format_timestamp(int(ts)), kpi.resource, kpi.metric, repr(float(value))]
                )
    finally:
        if owned:
            stream.close()


def csv_to_string(series_map: Dict[KpiId, TimeSeries]) -> str:
    buf = io.StringIO()
    write_csv(series_map, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# run manifests


@dataclass(frozen=True)
class InjectedFault:
    """The fault a run was seeded with.  ``injection_time`` is the instant the
    fault first became active (for intermittent activation this is the first
    active interval, not the nominal start)."""

    fault_type: FaultType
    resource: str
    pattern: str
    injection_time: int


@dataclass(frozen=True)
class RunManifest:
    """Ground truth for one run: identity, time range, seeded fault, failure."""

    run_id: str
    start: int
    end: int
    fault: Optional[InjectedFault] = None
    failure_time: Optional[int] = None

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("run end must be after start")
        if not self.run_id:
            raise ValueError("run_id must be non-empty")

    def to_dict(self) -> dict:
        fault = None
        if self.fault is not None:
            fault = {
                "fault_type": self.fault.fault_type.value,
                "resource": self.fault.resource,
                "pattern": self.fault.pattern,
                "injection_time": format_timestamp(self.fault.injection_time),
            }
        return {
            "kind": MANIFEST_KIND,
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "run_id": self.run_id,
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "fault": fault,
            "failure_time": (
                None if self.failure_time is None else format_timestamp(self.failure_time)
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        if data.get("kind") != MANIFEST_KIND:
            raise SchemaVersionError(f"not a run manifest: kind={data.get('kind')!r}")
        if data.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported manifest schema_version {data.get('schema_version')!r}"
            )
        fault = None
        if data.get("fault") is not None:
            f = data["fault"]
            fault = InjectedFault(
                fault_type=FaultType(f["fault_type"]),
                resource=f["resource"],
                pattern=f["pattern"],
                injection_time=parse_timestamp(f["injection_time"]),
            )
        failure = data.get("failure_time")
        return cls(
            run_id=data["run_id"],
            start=parse_timestamp(data["start"]),
            end=parse_timestamp(data["end"]),
            fault=fault,
            failure_time=None if failure is None else parse_timestamp(failure),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
