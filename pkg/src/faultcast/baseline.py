"""Offline training: per-KPI seasonal baselines and the Granger causality graph."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from .core import (
    HOURS_PER_WEEK,
    MIN_TRAINING_SPAN_S,
    CADENCE_S,
    InsufficientTrainingError,
    KpiId,
    SchemaVersionError,
    TimeSeries,
    hour_of_week,
)

logger = logging.getLogger(__name__)

BASELINE_KIND = "faultcast-baseline"
BASELINE_SCHEMA_VERSION = 1

#: Relative and absolute floors applied to bucket standard deviations.
STD_FLOOR_REL = 1e-9
STD_FLOOR_ABS = 1e-12

DEFAULT_K_SIGMA = 3.0
DEFAULT_LAG_ORDER = 3
DEFAULT_ALPHA = 0.01
DEFAULT_PREFILTER_R = 0.2


# ---------------------------------------------------------------------------
# univariate seasonal baselines


@dataclass(frozen=True)
class UnivariateBaseline:
    """Hour-of-week mean/std buckets plus a k-sigma tolerance band."""

    kpi: KpiId
    bucket_means: np.ndarray
    bucket_stds: np.ndarray
    k_sigma: float
    std_floor: float
    global_mean: float
    global_std: float

    def __post_init__(self):
        if self.bucket_means.shape != (HOURS_PER_WEEK,):
            raise ValueError("bucket_means must have 168 entries")
        if self.bucket_stds.shape != (HOURS_PER_WEEK,):
            raise ValueError("bucket_stds must have 168 entries")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be positive")
        if np.any(self.bucket_stds < self.std_floor):
            raise ValueError("bucket stds must respect the std floor")

    def expected(self, ts) -> "float | np.ndarray":
        """Predicted value at a timestamp: the mean of its hour-of-week bucket."""
        out = self.bucket_means[hour_of_week(ts)]
        return float(out) if np.ndim(out) == 0 else out

    def band(self, ts) -> Tuple[float, float]:
        """The (low, high) tolerance band at a timestamp."""
        bucket = hour_of_week(ts)
        mean = self.bucket_means[bucket]
        spread = self.k_sigma * self.bucket_stds[bucket]
        return mean - spread, mean + spread

    def zscores(self, timestamps, values) -> np.ndarray:
        """|value - expected| / bucket std, element-wise."""
        bucket = hour_of_week(np.asarray(timestamps))
        return np.abs(np.asarray(values, dtype=float) - self.bucket_means[bucket]) / (
            self.bucket_stds[bucket]
        )


def fit_univariate(
    series: TimeSeries,
    k_sigma: float = DEFAULT_K_SIGMA,
    *,
    allow_short: bool = False,
) -> UnivariateBaseline:
    """Fit hour-of-week buckets over a training series.

    Requires the series to span at least two full weeks (the last sample is
    credited with one cadence interval) unless ``allow_short`` is set.
    Buckets with fewer than two samples inherit the global mean/std; every
    stored std is clamped up to the floor max(1e-9 * value range, 1e-12).
    """
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    span = series.span_s + CADENCE_S
    if span < MIN_TRAINING_SPAN_S and not allow_short:
        raise InsufficientTrainingError(
            f"training series for {series.kpi} spans {span / 86400:.2f} days; "
            f"at least {MIN_TRAINING_SPAN_S // 86400} are required"
        )
    values = series.values
    buckets = hour_of_week(series.timestamps)
    std_floor = max(STD_FLOOR_REL * float(values.max() - values.min()), STD_FLOOR_ABS)

    counts = np.bincount(buckets, minlength=HOURS_PER_WEEK)
    sums = np.bincount(buckets, weights=values, minlength=HOURS_PER_WEEK)
    sq_sums = np.bincount(buckets, weights=values * values, minlength=HOURS_PER_WEEK)

    global_mean = float(values.mean())
    global_std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    global_std = max(global_std, std_floor)

    means = np.full(HOURS_PER_WEEK, global_mean)
    stds = np.full(HOURS_PER_WEEK, global_std)
    filled = counts >= 2
    with np.errstate(invalid="ignore", divide="ignore"):
        bucket_mean = sums[filled] / counts[filled]
        # unbiased variance from the raw moments; clip tiny negatives from rounding
        var = (sq_sums[filled] - counts[filled] * bucket_mean**2) / (counts[filled] - 1)
    means[filled] = bucket_mean
    stds[filled] = np.sqrt(np.clip(var, 0.0, None))
    stds = np.maximum(stds, std_floor)
    means.setflags(write=False)
    stds.setflags(write=False)
    return UnivariateBaseline(
        kpi=series.kpi,
        bucket_means=means,
        bucket_stds=stds,
        k_sigma=float(k_sigma),
        std_floor=float(std_floor),
        global_mean=global_mean,
        global_std=global_std,
    )


# ---------------------------------------------------------------------------
# Granger causality


@dataclass(frozen=True)
class GrangerResult:
    """Outcome of one causality test of cause x against effect y.

    ``coefficients`` belong to the unrestricted regression and are ordered
    intercept, then the effect's own lags 1..p, then the cause's lags 1..p.
    A ``degenerate`` result (singular design, e.g. constant series) carries
    p_value 1 and is not an error.
    """

    f_stat: float
    p_value: float
    lag_order: int
    n_obs: int
    rss_restricted: float
    rss_unrestricted: float
    coefficients: Tuple[float, ...]
    residual_std: float
    degenerate: bool = False


def _lag_design(y: np.ndarray, x: Optional[np.ndarray], p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Build (design, target) for the lag-p autoregression of y, optionally
    augmented with x's lags.  Columns: intercept, y lags 1..p[, x lags 1..p]."""
    n = len(y)
    target = y[p:]
    cols = [np.ones(n - p)]
    for i in range(1, p + 1):
        cols.append(y[p - i : n - i])
    if x is not None:
        for i in range(1, p + 1):
            cols.append(x[p - i : n - i])
    return np.column_stack(cols), target


def _ols_rss(design: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float, int]:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return coef, float(resid @ resid), int(rank)


def granger_fit(x_values, y_values, p: int = DEFAULT_LAG_ORDER) -> GrangerResult:
    """Test whether x's history improves one-step prediction of y.

    Fits the restricted autoregression of y on its own p lags and the
    unrestricted one adding x's p lags, then compares residual sums of squares
    with an F test on (p, T - 2p - 1) degrees of freedom, T being the number
    of regression rows.
    """
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    if p <= 0:
        raise ValueError("lag order must be positive")
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = len(y)
    if n < 4 * p + 8:
        raise ValueError(f"need at least {4 * p + 8} aligned samples, got {n}")

    t_obs = n - p
    df_denom = t_obs - (2 * p + 1)
    design_r, target = _lag_design(y, None, p)
    design_u, _ = _lag_design(y, x, p)

    coef_r, rss_r, rank_r = _ols_rss(design_r, target)
    coef_u, rss_u, rank_u = _ols_rss(design_u, target)

    degenerate_coeffs = tuple(float(c) for c in coef_u)
    if rank_r < design_r.shape[1] or rank_u < design_u.shape[1]:
        return GrangerResult(
            f_stat=0.0,
            p_value=1.0,
            lag_order=p,
            n_obs=t_obs,
            rss_restricted=rss_r,
            rss_unrestricted=rss_u,
            coefficients=degenerate_coeffs,
            residual_std=math.sqrt(max(rss_u, 0.0) / df_denom) if df_denom > 0 else 0.0,
            degenerate=True,
        )

    # nested models: the unrestricted fit can only reduce the RSS
    rss_u = min(rss_u, rss_r)
    diff = max(rss_r - rss_u, 0.0)
    residual_std = math.sqrt(rss_u / df_denom)
    if rss_u <= 0.0:
        f_stat = math.inf
        p_value = 0.0
    else:
        f_stat = (diff / p) / (rss_u / df_denom)
        p_value = float(stats.f.sf(f_stat, p, df_denom))
    return GrangerResult(
        f_stat=float(f_stat),
        p_value=p_value,
        lag_order=p,
        n_obs=t_obs,
        rss_restricted=rss_r,
        rss_unrestricted=rss_u,
        coefficients=tuple(float(c) for c in coef_u),
        residual_std=residual_std,
    )


def granger_test(x: TimeSeries, y: TimeSeries, p: int = DEFAULT_LAG_ORDER) -> Tuple[float, float]:
    """(F statistic, p-value) for 'x causes y'.  Series must share timestamps."""
    if not np.array_equal(x.timestamps, y.timestamps):
        raise ValueError("granger_test requires series aligned on identical timestamps")
    result = granger_fit(x.values, y.values, p)
    return result.f_stat, result.p_value


@dataclass(frozen=True)
class GrangerEdge:
    """A causal edge cause -> effect kept for multivariate detection."""

    cause: KpiId
    effect: KpiId
    weight: float
    lag_order: int
    coefficients: Tuple[float, ...]
    residual_std: float

    def __post_init__(self):
        if self.cause == self.effect:
            raise ValueError("an edge may not loop onto its own KPI")
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError("edge weight must lie in [0, 1]")
        if len(self.coefficients) != 2 * self.lag_order + 1:
            raise ValueError("expected 2p + 1 regression coefficients")
        if self.residual_std <= 0:
            raise ValueError("residual_std must be positive")


def _aligned_values(a: TimeSeries, b: TimeSeries) -> Tuple[np.ndarray, np.ndarray]:
    common, ia, ib = np.intersect1d(a.timestamps, b.timestamps, return_indices=True)
    return a.values[ia], b.values[ib]


def build_graph(
    training: Dict[KpiId, TimeSeries],
    p: int = DEFAULT_LAG_ORDER,
    alpha: float = DEFAULT_ALPHA,
    prefilter_r: float = DEFAULT_PREFILTER_R,
) -> List[GrangerEdge]:
    """Assemble the causality graph over every ordered KPI pair.

    Pairs whose absolute Pearson correlation falls below ``prefilter_r`` are
    skipped (set it to 0 to disable the prefilter).  Degenerate fits and pairs
    with too little aligned history are skipped with a log entry.  An edge is
    kept when the test's p-value beats ``alpha``; its weight is 1 - p_value.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if prefilter_r < 0 or prefilter_r >= 1:
        raise ValueError("prefilter_r must lie in [0, 1)")
    kpis = sorted(training)
    edges: List[GrangerEdge] = []
    if len(kpis) < 2:
        return edges
    min_len = 4 * p + 8
    for cause in kpis:
        for effect in kpis:
            if cause == effect:
                continue
            x, y = _aligned_values(training[cause], training[effect])
            if len(x) < min_len:
                logger.info("graph: %s -> %s skipped (only %d aligned samples)", cause, effect, len(x))
                continue
            x_sd = x.std()
            y_sd = y.std()
            if x_sd == 0.0 or y_sd == 0.0:
                logger.info("graph: %s -> %s skipped (constant series)", cause, effect)
                continue
            if prefilter_r > 0.0:
                r = float(np.corrcoef(x, y)[0, 1])
                if abs(r) < prefilter_r:
                    continue
            result = granger_fit(x, y, p)
            if result.degenerate:
                logger.info("graph: %s -> %s degenerate fit skipped", cause, effect)
                continue
            if result.p_value < alpha:
                edges.append(
                    GrangerEdge(
                        cause=cause,
                        effect=effect,
                        weight=1.0 - result.p_value,
                        lag_order=p,
                        coefficients=result.coefficients,
                        residual_std=result.residual_std,
                    )
                )
    return edges


# ---------------------------------------------------------------------------
# the combined model


@dataclass(frozen=True)
class BaselineConfig:
    """Configuration echo stored alongside a trained model."""

    lag_order: int = DEFAULT_LAG_ORDER
    alpha: float = DEFAULT_ALPHA
    k_sigma: float = DEFAULT_K_SIGMA
    prefilter_r: float = DEFAULT_PREFILTER_R


@dataclass(frozen=True)
class BaselineModel:
    """Everything the online detector needs: per-KPI baselines plus the graph."""

    baselines: Dict[KpiId, UnivariateBaseline]
    edges: Tuple[GrangerEdge, ...]
    config: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        for edge in self.edges:
            for endpoint in (edge.cause, edge.effect):
                if endpoint not in self.baselines:
                    raise ValueError(f"edge endpoint {endpoint} has no baseline entry")

    @property
    def kpis(self) -> List[KpiId]:
        return sorted(self.baselines)

    def to_dict(self) -> dict:
        return {
            "kind": BASELINE_KIND,
            "schema_version": BASELINE_SCHEMA_VERSION,
            "config": {
                "lag_order": self.config.lag_order,
                "alpha": self.config.alpha,
                "k_sigma": self.config.k_sigma,
                "prefilter_r": self.config.prefilter_r,
            },
            "baselines": [
                {
                    "resource": b.kpi.resource,
                    "metric": b.kpi.metric,
                    "k_sigma": b.k_sigma,
                    "std_floor": b.std_floor,
                    "global_mean": b.global_mean,
                    "global_std": b.global_std,
                    "bucket_means": [float(v) for v in b.bucket_means],
                    "bucket_stds": [float(v) for v in b.bucket_stds],
                }
                for _, b in sorted(self.baselines.items())
            ],
            "edges": [
                {
                    "cause": [e.cause.resource, e.cause.metric],
                    "effect": [e.effect.resource, e.effect.metric],
                    "weight": e.weight,
                    "lag_order": e.lag_order,
                    "coefficients": list(e.coefficients),
                    "residual_std": e.residual_std,
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BaselineModel":
        if data.get("kind") != BASELINE_KIND:
            raise SchemaVersionError(f"not a baseline model: kind={data.get('kind')!r}")
        if data.get("schema_version") != BASELINE_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported baseline schema_version {data.get('schema_version')!r}"
            )
        cfg = data["config"]
        config = BaselineConfig(
            lag_order=int(cfg["lag_order"]),
            alpha=float(cfg["alpha"]),
            k_sigma=float(cfg["k_sigma"]),
            prefilter_r=float(cfg["prefilter_r"]),
        )
        baselines: Dict[KpiId, UnivariateBaseline] = {}
        for item in data["baselines"]:
            kpi = KpiId(item["resource"], item["metric"])
            means = np.asarray(item["bucket_means"], dtype=float)
            stds = np.asarray(item["bucket_stds"], dtype=float)
            means.setflags(write=False)
            stds.setflags(write=False)
            baselines[kpi] = UnivariateBaseline(
                kpi=kpi,
                bucket_means=means,
                bucket_stds=stds,
                k_sigma=float(item["k_sigma"]),
                std_floor=float(item["std_floor"]),
                global_mean=float(item["global_mean"]),
                global_std=float(item["global_std"]),
            )
        edges = tuple(
            GrangerEdge(
                cause=KpiId(*item["cause"]),
                effect=KpiId(*item["effect"]),
                weight=float(item["weight"]),
                lag_order=int(item["lag_order"]),
                coefficients=tuple(float(c) for c in item["coefficients"]),
                residual_std=float(item["residual_std"]),
            )
            for item in data["edges"]
        )
        return cls(baselines=baselines, edges=edges, config=config)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BaselineModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_baseline_model(
    training: Dict[KpiId, TimeSeries],
    *,
    k_sigma: float = DEFAULT_K_SIGMA,
    lag_order: int = DEFAULT_LAG_ORDER,
    alpha: float = DEFAULT_ALPHA,
    prefilter_r: float = DEFAULT_PREFILTER_R,
    allow_short: bool = False,
) -> BaselineModel:
    """Fit univariate baselines for every KPI and the causality graph on top."""
    if not training:
        raise ValueError("training data is empty")
    baselines = {
        kpi: fit_univariate(series, k_sigma, allow_short=allow_short)
        for kpi, series in training.items()
    }
    edges = tuple(build_graph(training, p=lag_order, alpha=alpha, prefilter_r=prefilter_r))
    config = BaselineConfig(
        lag_order=lag_order, alpha=alpha, k_sigma=k_sigma, prefilter_r=prefilter_r
    )
    return BaselineModel(baselines=baselines, edges=edges, config=config)
