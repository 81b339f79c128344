"""Evaluation harness: builds a simulated suite and answers four questions.

RQ1  how the sliding-window length and the classifier family affect window
     classification, under seeded stratified cross-validation;
RQ2  per-class and micro effectiveness of the default configuration;
RQ3  whether fault-free runs with large random workload deviations stay
     classified as Normal;
RQ4  how early alerts precede the eventual failure, per fault type and
     activation pattern.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .baseline import BaselineModel, fit_baseline_model
from .core import (
    DAY_S,
    FailureClass,
    FaultType,
    KpiId,
    NORMAL_CLASS,
    SYSTEM_RESOURCE,
    SchemaVersionError,
    TimeSeries,
    WindowSample,
    format_timestamp,
    hour_of_week,
    parse_timestamp,
    slide_windows,
)
from .detect import AnomalyEvent, detect_stream
from .io import RunManifest
from .metrics import Contingency, EffectivenessMetrics, metrics, micro_contingency
from .predict import EarlinessReport, measure_earliness, run_predictor
from .sim import (
    FaultSpec,
    Pattern,
    Topology,
    WorkloadModel,
    default_topology,
    gen_run,
)
from .signature import (
    SignatureModel,
    Vocabulary,
    cross_validate,
    train_signature,
    windowize_events,
)

logger = logging.getLogger(__name__)

SUITE_KIND = "faultcast-suite"
SUITE_SCHEMA_VERSION = 1

_HOST_FAULTS = (
    FaultType.PACKET_LOSS,
    FaultType.PACKET_LATENCY,
    FaultType.PACKET_CORRUPTION,
    FaultType.MEMORY_LEAK,
    FaultType.CPU_HOG,
)


@dataclass(frozen=True)
class SuiteConfig:
    """Everything that determines a suite: topology-independent knobs only."""

    training_start: int = parse_timestamp("2026-01-05T00:00:00Z")  # a Monday
    training_days: int = 28
    run_duration_min: int = 180
    injection_min: int = 15
    run_hour: int = 10  # start hour of the faulty and clean runs
    quiet_hour: int = 22  # start hour of the random-deviation runs
    fault_targets: Tuple[str, ...] = ("Sprout", "Homer")
    window_min: int = 90
    step_min: int = 5
    folds: int = 10
    k_sigma: float = 3.0
    lag_order: int = 3
    alpha: float = 0.01
    prefilter_r: float = 0.2
    tau: float = 3.0
    seed: int = 2026
    allow_short_training: bool = False
    workload: WorkloadModel = field(default_factory=WorkloadModel)

    @property
    def training_end(self) -> int:
        return self.training_start + self.training_days * DAY_S

    def to_dict(self) -> dict:
        return {
            "kind": SUITE_KIND,
            "schema_version": SUITE_SCHEMA_VERSION,
            "training_start": format_timestamp(self.training_start),
            "training_days": self.training_days,
            "run_duration_min": self.run_duration_min,
            "injection_min": self.injection_min,
            "run_hour": self.run_hour,
            "quiet_hour": self.quiet_hour,
            "fault_targets": list(self.fault_targets),
            "window_min": self.window_min,
            "step_min": self.step_min,
            "folds": self.folds,
            "k_sigma": self.k_sigma,
            "lag_order": self.lag_order,
            "alpha": self.alpha,
            "prefilter_r": self.prefilter_r,
            "tau": self.tau,
            "seed": self.seed,
            "allow_short_training": self.allow_short_training,
            "workload": self.workload.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteConfig":
        if data.get("kind") != SUITE_KIND:
            raise SchemaVersionError(f"not a suite config: kind={data.get('kind')!r}")
        if data.get("schema_version") != SUITE_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported suite schema_version {data.get('schema_version')!r}"
            )
        kwargs = {k: v for k, v in data.items() if k not in ("kind", "schema_version")}
        kwargs["training_start"] = parse_timestamp(kwargs["training_start"])
        kwargs["fault_targets"] = tuple(kwargs.get("fault_targets", ("Sprout", "Homer")))
        if "workload" in kwargs:
            kwargs["workload"] = WorkloadModel.from_dict(kwargs["workload"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class RunSpec:
    """One run to generate: its fault (if any), schedule and seed."""

    run_id: str
    start: int
    duration_s: int
    seed: int
    fault: Optional[FaultSpec] = None
    deviation: float = 0.0


@dataclass(frozen=True)
class RunRecord:
    """A generated run reduced to what the classifiers need."""

    manifest: RunManifest
    events: Tuple[AnomalyEvent, ...]


@dataclass
class SuiteData:
    """A built suite: the offline models plus the detected run pool."""

    config: SuiteConfig
    topology: Topology
    baseline: BaselineModel
    vocab: Vocabulary
    runs: List[RunRecord]
    signature: SignatureModel


def _weekday_on_or_after(ts: int) -> int:
    """Midnight of the first Monday-to-Friday day at or after ``ts``."""
    day = (ts // DAY_S) * DAY_S
    while hour_of_week(day) // 24 >= 5:
        day += DAY_S
    return day


def run_day(config: SuiteConfig, index: int) -> int:
    """Scheduling helper: runs cycle over the five weekdays after training."""
    day = _weekday_on_or_after(config.training_end)
    for _ in range(index % 5):
        day = _weekday_on_or_after(day + DAY_S)
    return day


def failure_class_of(manifest: RunManifest) -> FailureClass:
    if manifest.fault is None:
        return NORMAL_CLASS
    return FailureClass(manifest.fault.fault_type, manifest.fault.resource)


def window_label(manifest: RunManifest, start: int, end: int) -> FailureClass:
    """A window carries the run's fault class once it reaches the injection:
    fault iff the window end is at or after the fault became active."""
    if manifest.fault is None or end < manifest.fault.injection_time:
        return NORMAL_CLASS
    return failure_class_of(manifest)


def default_run_specs(config: SuiteConfig) -> List[RunSpec]:
    """The bundled run pool: every host fault on each target VM under all
    three activation patterns, the workload fault, and six passing runs (two
    of them with deliberate random workload deviation, so that healthy load
    swings are part of the Normal training signature)."""
    specs: List[RunSpec] = []
    duration_s = config.run_duration_min * 60

    def day(i: int) -> int:
        return run_day(config, i)

    def make_fault(fault_type: FaultType, resource: str, pattern: Pattern, start: int) -> FaultSpec:
        return FaultSpec(
            fault_type=fault_type,
            resource=resource,
            pattern=pattern,
            injection_time=start + config.injection_min * 60,
        )

    idx = 0
    for fault_type in _HOST_FAULTS:
        for resource in config.fault_targets:
            for pattern in Pattern:
                start = day(idx) + config.run_hour * 3600
                run_id = f"{fault_type.value}-{resource}-{pattern.value}".lower()
                specs.append(
                    RunSpec(
                        run_id=run_id,
                        start=start,
                        duration_s=duration_s,
                        seed=config.seed * 1009 + idx,
                        fault=make_fault(fault_type, resource, pattern, start),
                    )
                )
                idx += 1
    for pattern in Pattern:
        start = day(idx) + config.run_hour * 3600
        run_id = f"{FaultType.EXCESSIVE_WORKLOAD.value}-{pattern.value}".lower()
        specs.append(
            RunSpec(
                run_id=run_id,
                start=start,
                duration_s=duration_s,
                seed=config.seed * 1009 + idx,
                fault=make_fault(FaultType.EXCESSIVE_WORKLOAD, SYSTEM_RESOURCE, pattern, start),
            )
        )
        idx += 1

    passing = (
        ("passing-1", config.run_hour, 0.0),
        ("passing-2", config.run_hour, 0.0),
        ("passing-3", config.quiet_hour, 0.0),
        ("passing-dev-1", config.run_hour, 0.5),
        ("passing-dev-2", config.quiet_hour, 0.5),
        ("passing-dev-3", config.quiet_hour, 0.5),
    )
    for run_id, hour, deviation in passing:
        specs.append(
            RunSpec(
                run_id=run_id,
                start=day(idx) + hour * 3600,
                duration_s=duration_s,
                seed=config.seed * 1009 + idx,
                deviation=deviation,
            )
        )
        idx += 1
    return specs


def build_training(config: SuiteConfig, topology: Topology) -> Dict[KpiId, TimeSeries]:
    series, _ = gen_run(
        topology,
        config.workload,
        None,
        config.training_start,
        config.training_days * DAY_S,
        seed=config.seed,
        run_id="training",
    )
    return series


def detect_run(
    config: SuiteConfig, topology: Topology, baseline: BaselineModel, spec: RunSpec
) -> RunRecord:
    series, manifest = gen_run(
        topology,
        config.workload,
        spec.fault,
        spec.start,
        spec.duration_s,
        spec.seed,
        run_id=spec.run_id,
        workload_deviation=spec.deviation,
    )
    events = detect_stream(baseline, series, spec.start, tau=config.tau)
    return RunRecord(manifest=manifest, events=tuple(events))


def assemble_windows(
    runs: Sequence[RunRecord], l_min: int, step_min: int
) -> List[WindowSample]:
    """Labeled sliding windows over every run in the pool."""
    samples: List[WindowSample] = []
    for rec in runs:
        windows = slide_windows(rec.manifest.start, rec.manifest.end, l_min, step_min)

        def label_fn(start: int, end: int, manifest=rec.manifest) -> FailureClass:
            return window_label(manifest, start, end)

        samples.extend(windowize_events(rec.events, windows, label_fn))
    return samples


def build_suite(config: SuiteConfig, topology: Optional[Topology] = None) -> SuiteData:
    """Generate training data, fit the offline models, run detection over the
    bundled run pool, and train the default signature classifier."""
    topology = topology or default_topology()
    logger.info("suite: generating %d days of training data", config.training_days)
    training = build_training(config, topology)
    baseline = fit_baseline_model(
        training,
        k_sigma=config.k_sigma,
        lag_order=config.lag_order,
        alpha=config.alpha,
        prefilter_r=config.prefilter_r,
        allow_short=config.allow_short_training,
    )
    logger.info("suite: baseline over %d KPIs, %d causal edges", len(baseline.baselines), len(baseline.edges))
    vocab = Vocabulary(baseline.baselines.keys(), split_kinds=False)
    runs = []
    for spec in default_run_specs(config):
        runs.append(detect_run(config, topology, baseline, spec))
    pool = assemble_windows(runs, config.window_min, config.step_min)
    signature = train_signature(pool, vocab, "tree", config.window_min)
    logger.info("suite: %d runs, %d labeled windows", len(runs), len(pool))
    return SuiteData(
        config=config,
        topology=topology,
        baseline=baseline,
        vocab=vocab,
        runs=runs,
        signature=signature,
    )


# ---------------------------------------------------------------------------
# RQ1: window length and classifier family


@dataclass(frozen=True)
class Rq1Row:
    window_min: int
    algorithm: str
    n_windows: int
    windows_per_run: int  # sliding count, offset zero included
    windows_per_run_later: int  # the variant that counts only strictly later offsets
    micro: EffectivenessMetrics
    alarm_rate: Optional[float]  # share of truly-Normal windows classified faulty


def _alarm_rate(per_class: Dict[FailureClass, Contingency]) -> Optional[float]:
    cont = per_class.get(NORMAL_CLASS)
    if cont is None or cont.tp + cont.fn == 0:
        return None
    return cont.fn / (cont.tp + cont.fn)


def run_rq1(
    data: SuiteData,
    lengths: Sequence[int] = (60, 90, 120),
    algorithms: Sequence[str] = ("tree", "nb"),
) -> List[Rq1Row]:
    config = data.config
    rows: List[Rq1Row] = []
    duration = config.run_duration_min
    for l_min in lengths:
        samples = assemble_windows(data.runs, l_min, config.step_min)
        per_run = (duration - l_min) // config.step_min + 1
        for algorithm in algorithms:
            cv = cross_validate(
                samples, data.vocab, k=config.folds, seed=config.seed, algorithm=algorithm
            )
            rows.append(
                Rq1Row(
                    window_min=l_min,
                    algorithm=algorithm,
                    n_windows=len(samples),
                    windows_per_run=per_run,
                    windows_per_run_later=per_run - 1,
                    micro=metrics(micro_contingency(cv.per_class)),
                    alarm_rate=_alarm_rate(cv.per_class),
                )
            )
    return rows


def rq1_f_gap(rows: Sequence[Rq1Row], window_min: int, algorithm: str = "tree") -> float:
    """How far the given window length's micro-F sits below the best one."""
    scores = {
        (r.window_min, r.algorithm): r.micro.f_measure
        for r in rows
        if r.micro.f_measure is not None
    }
    best = max(v for (_, algo), v in scores.items() if algo == algorithm)
    return best - scores[(window_min, algorithm)]


def render_rq1(rows: Sequence[Rq1Row]) -> str:
    lines = [
        "RQ1: window length / classifier comparison (stratified CV)",
        f"{'window':>7} {'algo':>5} {'windows':>8} {'per-run':>8} {'accuracy':>9} "
        f"{'micro-F':>9} {'alarms':>7}",
    ]
    for r in rows:
        acc = "--" if r.micro.accuracy is None else f"{100 * r.micro.accuracy:8.3f}%"
        f = "--" if r.micro.f_measure is None else f"{100 * r.micro.f_measure:8.3f}%"
        alarms = "--" if r.alarm_rate is None else f"{100 * r.alarm_rate:6.2f}%"
        lines.append(
            f"{r.window_min:>7} {r.algorithm:>5} {r.n_windows:>8} {r.windows_per_run:>8} {acc} {f} {alarms}"
        )
    if rows:
        r = rows[0]
        lines.append(
            f"(a {r.window_min}-min window sliding by 5 gives {r.windows_per_run} windows "
            f"per run counting the start itself, {r.windows_per_run_later} counting only later offsets)"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# RQ2: per-class effectiveness of the default configuration


@dataclass(frozen=True)
class Rq2Report:
    per_class: Dict[FailureClass, Contingency]
    micro: EffectivenessMetrics
    alarm_rate: Optional[float]
    n_windows: int
    n_correct: int


def run_rq2(data: SuiteData, algorithm: str = "tree") -> Rq2Report:
    config = data.config
    samples = assemble_windows(data.runs, config.window_min, config.step_min)
    cv = cross_validate(
        samples, data.vocab, k=config.folds, seed=config.seed, algorithm=algorithm
    )
    return Rq2Report(
        per_class=cv.per_class,
        micro=metrics(micro_contingency(cv.per_class)),
        alarm_rate=_alarm_rate(cv.per_class),
        n_windows=len(samples),
        n_correct=cv.n_correct,
    )


def render_rq2(report: Rq2Report) -> str:
    header = f"{'class':<34} {'prec':>7} {'recall':>7} {'F':>7} {'acc':>7} {'FPR':>7}"
    lines = [
        "RQ2: per-class effectiveness, default configuration "
        f"({report.n_correct}/{report.n_windows} windows correct)",
        header,
    ]
    for cls in sorted(report.per_class):
        lines.append(metrics(report.per_class[cls]).render(cls.label()))
    lines.append(report.micro.render("micro"))
    if report.alarm_rate is not None:
        lines.append(f"false-alarm rate on Normal windows: {100 * report.alarm_rate:.3f}%")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# RQ3: fault-free runs under random workload deviation


@dataclass(frozen=True)
class Rq3Run:
    run_id: str
    deviation: float
    n_windows: int
    n_normal: int

    @property
    def fraction_normal(self) -> float:
        return self.n_normal / self.n_windows if self.n_windows else 1.0


def run_rq3(
    data: SuiteData,
    deviations: Sequence[float] = (0.4, 1.0),
    runs_per_deviation: int = 2,
    duration_min: int = 120,
) -> List[Rq3Run]:
    """Classify windows of fresh fault-free runs whose call rate deviates
    randomly per five-minute block, scheduled in a low-traffic slot."""
    config = data.config
    results: List[Rq3Run] = []
    idx = 0
    for deviation in deviations:
        for i in range(runs_per_deviation):
            start = run_day(config, idx) + config.quiet_hour * 3600
            run_id = f"random{int(round(100 * deviation))}-{i + 1}"
            series, manifest = gen_run(
                data.topology,
                config.workload,
                None,
                start,
                duration_min * 60,
                seed=config.seed * 7177 + idx,
                run_id=run_id,
                workload_deviation=deviation,
            )
            events = detect_stream(data.baseline, series, start, tau=config.tau)
            windows = slide_windows(start, start + duration_min * 60, config.window_min, config.step_min)
            samples = windowize_events(events, windows)
            n_normal = sum(
                1
                for s in samples
                if data.signature.classify_window(s.anomalies).top()[0] == NORMAL_CLASS
            )
            results.append(
                Rq3Run(
                    run_id=run_id,
                    deviation=deviation,
                    n_windows=len(samples),
                    n_normal=n_normal,
                )
            )
            idx += 1
    return results


def rq3_overall_fraction(rows: Sequence[Rq3Run]) -> float:
    total = sum(r.n_windows for r in rows)
    normal = sum(r.n_normal for r in rows)
    return normal / total if total else 1.0


def render_rq3(rows: Sequence[Rq3Run]) -> str:
    lines = [
        "RQ3: fault-free runs under random workload deviation",
        f"{'run':<16} {'deviation':>9} {'windows':>8} {'Normal':>7} {'fraction':>9}",
    ]
    for r in rows:
        lines.append(
            f"{r.run_id:<16} {100 * r.deviation:>8.0f}% {r.n_windows:>8} "
            f"{r.n_normal:>7} {100 * r.fraction_normal:>8.2f}%"
        )
    lines.append(f"overall: {100 * rq3_overall_fraction(rows):.2f}% of windows classified Normal")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# RQ4: prediction earliness


@dataclass(frozen=True)
class Rq4Row:
    run_id: str
    fault_type: FaultType
    pattern: Pattern
    seed: int
    report: EarlinessReport


def run_rq4(
    data: SuiteData,
    seeds_per_combo: int = 2,
    duration_min: int = 180,
    target: str = "Sprout",
) -> List[Rq4Row]:
    """Replay the online predictor over fresh faulty runs and measure how
    early it warns relative to the eventual failure."""
    config = data.config
    rows: List[Rq4Row] = []
    idx = 0
    for fault_type in _HOST_FAULTS + (FaultType.EXCESSIVE_WORKLOAD,):
        resource = SYSTEM_RESOURCE if fault_type is FaultType.EXCESSIVE_WORKLOAD else target
        for pattern in Pattern:
            for i in range(seeds_per_combo):
                start = run_day(config, idx) + config.run_hour * 3600
                seed = config.seed * 31013 + idx
                fault = FaultSpec(
                    fault_type=fault_type,
                    resource=resource,
                    pattern=pattern,
                    injection_time=start + config.injection_min * 60,
                )
                run_id = f"rq4-{fault_type.value}-{pattern.value}-{i + 1}".lower()
                series, manifest = gen_run(
                    data.topology,
                    config.workload,
                    fault,
                    start,
                    duration_min * 60,
                    seed,
                    run_id=run_id,
                )
                alerts = run_predictor(
                    data.baseline,
                    data.signature,
                    series,
                    start,
                    start + duration_min * 60,
                    tau=config.tau,
                )
                report = measure_earliness(alerts, manifest)
                rows.append(
                    Rq4Row(
                        run_id=run_id,
                        fault_type=fault_type,
                        pattern=pattern,
                        seed=seed,
                        report=report,
                    )
                )
                idx += 1
    return rows


def render_rq4(rows: Sequence[Rq4Row]) -> str:
    lines = [
        "RQ4: prediction earliness (per run)",
        f"{'fault':<20} {'pattern':<12} {'TTGP':>9} {'TTFSP':>9} "
        f"{'TTF(GP)':>10} {'TTF(FSP)':>10} {'false':>6}",
    ]
    for r in rows:
        rep = r.report
        lines.append(
            f"{r.fault_type.value:<20} {r.pattern.value:<12} {rep.render_ttgp():>9} "
            f"{rep.render_ttfsp():>9} {rep.render_ttf_gp():>10} {rep.render_ttf_fsp():>10} "
            f"{rep.false_alarms:>6}"
        )
    return "\n".join(lines)
