"""Metric typing registry, imputation, spline smoothing and series utilities.

The registry pins, for every metric, its measurement type/level and the
value that replaces missing observations. Infinity-valued replacements are
realized as a finite cap (sentinel_factor times the largest finite value in
the series, or 1 if the series has none) so rank statistics keep the
extreme ordering while product-moment statistics stay finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

POS_INF = math.inf


@dataclass(frozen=True)
class MetricDescriptor:
    name: str                 # registry name
    column: str               # MetricWindow field
    measurement_type: str     # numerical | categorical
    level: str                # ratio | interval | nominal
    imputation_value: float   # POS_INF means "finite cap sentinel"
    anomalous_corr_sign: int  # +1 / -1; 0 for the covariate itself
    differenced: bool = False
    auxiliary: bool = False


# The nine wireless metrics plus UAV distance; order matters for reports.
METRIC_REGISTRY: list[MetricDescriptor] = [
    MetricDescriptor("Phy-RSSI", "rssi_dbm", "numerical", "ratio", 0.0, +1),
    MetricDescriptor("Phy-LQI", "lqi", "numerical", "interval", 0.0, +1),
    MetricDescriptor("Phy-SNR", "sinr_db", "numerical", "ratio", 0.0, -1),
    MetricDescriptor("Phy-PCR", "pcr", "numerical", "ratio", 1.0, -1),
    MetricDescriptor("Mac-SH-Delay", "sh_delay_s", "numerical", "ratio", POS_INF, -1),
    MetricDescriptor("Mac-SH-Jitter", "sh_jitter_s", "numerical", "ratio", POS_INF, -1, differenced=True),
    MetricDescriptor("MAC-SH-Throughput", "sh_throughput_bps", "numerical", "ratio", 0.0, +1),
    MetricDescriptor("MAC-SH-PRR", "sh_prr", "numerical", "ratio", 0.0, +1),
    MetricDescriptor("MAC-β factor", "beta", "categorical", "nominal", 0.0, +1),
    MetricDescriptor("UAV-Distance", "distance_m", "numerical", "ratio", POS_INF, 0),
]

AUX_REGISTRY: list[MetricDescriptor] = [
    MetricDescriptor("Queue-Drop", "queue_drop_count", "numerical", "ratio", 0.0, -1, auxiliary=True),
    MetricDescriptor("Queue-Occupancy", "queue_occupancy", "numerical", "ratio", 0.0, -1, auxiliary=True),
    MetricDescriptor("Packets-Received", "packets_received", "numerical", "ratio", 0.0, +1, auxiliary=True),
]


def descriptor_for(column: str) -> MetricDescriptor:
    for d in METRIC_REGISTRY + AUX_REGISTRY:
        if d.column == column or d.name == column:
            return d
    raise ValueError(f"unknown metric {column!r}")


def registry_as_json() -> str:
    """The typing/imputation registry, serialized for documentation."""
    rows = [
        {
            "name": d.name,
            "column": d.column,
            "measurement_type": d.measurement_type,
            "level": d.level,
            "imputation": "+inf" if math.isinf(d.imputation_value) else d.imputation_value,
            "anomalous_corr_sign": d.anomalous_corr_sign,
            "differenced": d.differenced,
            "auxiliary": d.auxiliary,
        }
        for d in METRIC_REGISTRY + AUX_REGISTRY
    ]
    return json.dumps(rows, indent=2, ensure_ascii=False) + "\n"


@dataclass
class MetricSeries:
    """A metric sampled on a uniform time grid; NaN marks missing values."""

    metric: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if len(self.times) >= 2:
            steps = np.diff(self.times)
            if np.any(steps <= 0):
                raise ValueError("times must be strictly increasing")


def impute(series: MetricSeries, descriptor: MetricDescriptor, sentinel_factor: float = 10.0) -> MetricSeries:
    """Replace missing/non-finite entries per the imputation table."""
    if descriptor.column != series.metric and descriptor.name != series.metric:
        raise ValueError(
            f"descriptor {descriptor.name!r} does not match series {series.metric!r}"
        )
    values = series.values.copy()
    missing = ~np.isfinite(values)
    if not missing.any():
        return replace(series, values=values)
    if math.isinf(descriptor.imputation_value):
        finite = values[np.isfinite(values)]
        fill = sentinel_factor * float(np.max(finite)) if finite.size else 1.0
        if fill <= 0.0:
            fill = 1.0
    else:
        fill = descriptor.imputation_value
    values[missing] = fill
    return replace(series, values=values)


# -- natural cubic spline ----------------------------------------------------


class NaturalCubicSpline:
    """Interpolating natural cubic spline (zero curvature at both ends).

    Second derivatives at the knots come from the standard tridiagonal
    system, solved with the Thomas algorithm.
    """

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        y = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("times and values must be 1D and equal length")
        if len(t) < 3:
            raise ValueError("need at least 3 knots")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        self.t = t
        self.y = y
        self.m = self._second_derivatives(t, y)

    @staticmethod
    def _second_derivatives(t: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = len(t)
        h = np.diff(t)
        # tridiagonal for interior knots; natural ends are zero
        sub = np.zeros(n)
        diag = np.ones(n)
        sup = np.zeros(n)
        rhs = np.zeros(n)
        for i in range(1, n - 1):
            sub[i] = h[i - 1]
            diag[i] = 2.0 * (h[i - 1] + h[i])
            sup[i] = h[i]
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
        # Thomas forward sweep
        for i in range(1, n):
            w = sub[i] / diag[i - 1]
            diag[i] -= w * sup[i - 1]
            rhs[i] -= w * rhs[i - 1]
        m = np.zeros(n)
        m[-1] = rhs[-1] / diag[-1]
        for i in range(n - 2, -1, -1):
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i]
        return m

    def __call__(self, query):
        q = np.asarray(query, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(q)
        if np.any(q < self.t[0]) or np.any(q > self.t[-1]):
            raise ValueError("query times outside the knot range")
        idx = np.clip(np.searchsorted(self.t, q, side="right") - 1, 0, len(self.t) - 2)
        h = self.t[idx + 1] - self.t[idx]
        a = (self.t[idx + 1] - q) / h
        b = (q - self.t[idx]) / h
        out = (
            a * self.y[idx]
            + b * self.y[idx + 1]
            + ((a**3 - a) * self.m[idx] + (b**3 - b) * self.m[idx + 1]) * h * h / 6.0
        )
        return float(out[0]) if scalar else out


def cubic_spline_smooth(times, values, query_times) -> np.ndarray:
    """Natural-spline interpolation of (times, values) at query_times."""
    return NaturalCubicSpline(times, values)(query_times)


def spline_resample(series: MetricSeries, knot_spacing_s: float) -> MetricSeries:
    """Smooth a series by splining through sparse knots and re-evaluating.

    Knots are taken every knot_spacing_s along the grid (first and last
    samples always included); with fewer than 3 knots the series is
    returned unchanged.
    """
    if knot_spacing_s <= 0:
        raise ValueError("knot_spacing_s must be positive")
    t = series.times
    if len(t) < 3:
        return replace(series, values=series.values.copy())
    step = max(1, int(round(knot_spacing_s / (t[1] - t[0]))))
    idx = list(range(0, len(t), step))
    if idx[-1] != len(t) - 1:
        idx.append(len(t) - 1)
    if len(idx) < 3:
        return replace(series, values=series.values.copy())
    spline = NaturalCubicSpline(t[idx], series.values[idx])
    return replace(series, values=spline(t))


def difference(series: MetricSeries) -> MetricSeries:
    """First difference; the result is stamped on the later sample."""
    if len(series.values) < 2:
        raise ValueError("need at least 2 points to difference")
    return MetricSeries(
        metric=series.metric,
        times=series.times[1:],
        values=np.diff(series.values),
    )


def align(a: MetricSeries, b: MetricSeries) -> tuple[MetricSeries, MetricSeries]:
    """Restrict two same-spacing series to their common time range."""
    if len(a.times) < 2 or len(b.times) < 2:
        raise ValueError("series too short to align")
    da = a.times[1] - a.times[0]
    db = b.times[1] - b.times[0]
    if not math.isclose(da, db, rel_tol=1e-9):
        raise ValueError("series must share the same grid spacing")
    t0 = max(a.times[0], b.times[0])
    t1 = min(a.times[-1], b.times[-1])
    if t1 < t0 - 1e-12:
        raise ValueError("series do not overlap in time")
    ia = np.where((a.times >= t0 - 1e-9) & (a.times <= t1 + 1e-9))[0]
    ib = np.where((b.times >= t0 - 1e-9) & (b.times <= t1 + 1e-9))[0]
    n = min(len(ia), len(ib))
    ia, ib = ia[:n], ib[:n]
    if n == 0 or not np.allclose(a.times[ia], b.times[ib], atol=1e-6):
        raise ValueError("series grids do not line up")
    return (
        MetricSeries(a.metric, a.times[ia], a.values[ia]),
        MetricSeries(b.metric, b.times[ib], b.values[ib]),
    )
