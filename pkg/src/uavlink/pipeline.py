"""Detection pipeline: trace + positions in, verdicts/heat maps/vertex out.

Metric series are trace-derived and imputed per the registry; the distance
series for relation checks comes from the position log (the UAVs' own
navigation data), sampled at window centers and spline-smoothed by default.
Sensor-independent distance keeps idle-window imputation artifacts out of
the correlation tests.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .heatmap import HeatMap, LocalizationResult, heatmap_from_series, vertical_line_extract
from .metrics import MetricWindow, window_metrics
from .mobility import link_distance_series
from .preprocess import MetricSeries, descriptor_for, impute, spline_resample
from .relations import MrSpec, MrVerdict, default_mr_specs, evaluate_mr
from .simulate import TraceRecord, chain_links, record_time

METRIC_COLUMNS = [
    "rssi_dbm", "lqi", "sinr_db", "pcr", "sh_delay_s", "sh_jitter_s",
    "sh_throughput_bps", "sh_prr", "beta", "queue_drop_count",
]


@dataclass
class DetectParams:
    window_s: float = 1.0
    correlation: str = "spearman"
    window_len: int = 30
    step: int = 1
    tau: float = 0.5
    alpha: float = 0.05
    grace_s: float = 5.0
    max_lag: int = 5
    sentinel_factor: float = 10.0
    spline: bool = True
    spline_knot_s: float = 10.0
    localize_metric: str = "sh_prr"
    patch: int = 3
    warmup_rows: int = 10
    min_run: int = 12
    median_rows: int = 9
    include_aux: bool = True
    with_trend: bool = True
    parallel: int = 1

    def validate(self) -> None:
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if self.correlation not in ("spearman", "pearson"):
            raise ValueError("correlation must be spearman or pearson")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass
class DetectionResult:
    windows: list[MetricWindow]
    verdicts: list[MrVerdict]
    heatmap: HeatMap
    localization: LocalizationResult | None
    links: list[tuple[int, int]]
    series: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)


def window_count(records: list[TraceRecord], window_s: float, minimum_t: float = 0.0) -> int:
    t_end = minimum_t
    for r in records:
        t_end = max(t_end, record_time(r))
        if r.t_rx_end is not None:
            t_end = max(t_end, r.t_rx_end)
    return max(1, int(math.ceil(t_end / window_s - 1e-9)))


def build_metric_series(
    windows: list[MetricWindow],
    links: list[tuple[int, int]],
    sentinel_factor: float = 10.0,
) -> dict[tuple[tuple[int, int], str], MetricSeries]:
    """Imputed per-link series for every metric column."""
    by_link: dict[tuple[int, int], list[MetricWindow]] = {l: [] for l in links}
    for w in windows:
        by_link[(w.link_src, w.link_dst)].append(w)
    out = {}
    for link in links:
        rows = sorted(by_link[link], key=lambda w: w.t_start)
        times = np.array([w.t_start for w in rows])
        for col in METRIC_COLUMNS:
            raw = np.array(
                [np.nan if getattr(w, col) is None else float(getattr(w, col)) for w in rows]
            )
            series = MetricSeries(col, times, raw)
            out[(link, col)] = impute(series, descriptor_for(col), sentinel_factor)
    return out


def build_distance_series(
    position_times: np.ndarray,
    positions: np.ndarray,
    links: list[tuple[int, int]],
    n_windows: int,
    window_s: float,
    spline: bool = True,
    spline_knot_s: float = 10.0,
) -> dict[tuple[int, int], MetricSeries]:
    """Per-link distance sampled at window centers from the position log."""
    starts = np.arange(n_windows) * window_s
    centers = starts + window_s / 2.0
    out = {}
    for link in links:
        t, d = link_distance_series(position_times, positions, link[0], link[1])
        values = np.interp(centers, t, d)
        series = MetricSeries("distance_m", starts, values)
        if spline:
            series = spline_resample(series, spline_knot_s)
        out[link] = series
    return out


def run_detection(
    records: list[TraceRecord],
    position_times: np.ndarray,
    positions: np.ndarray,
    params: DetectParams,
    packet_bytes: int,
    queue_capacity: int | None = None,
    minimum_t: float = 0.0,
) -> DetectionResult:
    """Full detection pass over one trace."""
    params.validate()
    n_nodes = positions.shape[1]
    links = chain_links(n_nodes)
    n_windows = window_count(records, params.window_s, minimum_t)
    t_end = n_windows * params.window_s

    windows = window_metrics(
        records,
        params.window_s,
        packet_bytes=packet_bytes,
        links=links,
        t_end=t_end,
        queue_capacity=queue_capacity,
        max_lag=params.max_lag,
    )
    series = build_metric_series(windows, links, params.sentinel_factor)
    distances = build_distance_series(
        position_times,
        positions,
        links,
        n_windows,
        params.window_s,
        spline=params.spline,
        spline_knot_s=params.spline_knot_s,
    )

    specs = default_mr_specs(
        correlation_kind=params.correlation,
        threshold_tau=params.tau,
        alpha=params.alpha,
        window_len=params.window_len,
        step=params.step,
        include_aux=params.include_aux,
    )
    tasks = [(spec, link) for spec in specs for link in links]

    def run_task(task: tuple[MrSpec, tuple[int, int]]) -> list[MrVerdict]:
        spec, link = task
        return evaluate_mr(
            spec, series[(link, spec.metric)], distances[link], link, params.with_trend
        )

    if params.parallel > 1:
        with ThreadPoolExecutor(max_workers=params.parallel) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    verdicts = [v for chunk in results for v in chunk]

    loc_series = {link: series[(link, params.localize_metric)] for link in links}
    hm = heatmap_from_series(loc_series, links, params.window_s, params.localize_metric)
    if n_windows > params.warmup_rows and n_windows >= 5 and len(links) >= 3:
        localization = vertical_line_extract(
            hm,
            patch=params.patch,
            warmup_rows=params.warmup_rows,
            min_run=params.min_run,
            median_rows=params.median_rows,
        )
    else:
        localization = None  # not enough data to call anything
    return DetectionResult(
        windows=windows,
        verdicts=verdicts,
        heatmap=hm,
        localization=localization,
        links=links,
        series=series,
        distances=distances,
    )
