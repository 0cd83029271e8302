"""Correlation kernels and the relation-checking engine.

Each relation pairs one link metric with inter-UAV distance and declares
the correlation sign that indicates an anomaly (e.g. received power moving
*with* distance contradicts propagation physics). A sliding window is
flagged as a violation only when the observed correlation carries the
anomalous sign, is strong (|r| >= tau) and significant (p <= alpha).
Windows with undefined correlation (a constant series) never violate.

A partial correlation trend statistic r(tx.z) - the metric's trend over
time with distance partialled out - is reported alongside every verdict
but does not gate violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .preprocess import MetricSeries, difference


# -- scalar kernels ----------------------------------------------------------


def _rankdata(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties shared."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _t_pvalue(r: float, dof: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * math.sqrt(dof / (1.0 - r * r))
    return 2.0 * float(stdtr(dof, -t))


def pearson(x, y) -> tuple[float, float] | None:
    """Product-moment correlation and its two-sided p-value (t, n-2 dof).

    Returns None when undefined (a constant input).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n != len(y):
        raise ValueError("vectors must have equal length")
    if n < 3:
        raise ValueError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    return r, _t_pvalue(r, n - 2)


def spearman(x, y) -> tuple[float, float] | None:
    """Rank correlation: pearson on average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("vectors must have equal length")
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    return pearson(_rankdata(x), _rankdata(y))


def partial_corr_trend(t, x, z, kind: str = "spearman") -> tuple[float, float] | None:
    """Trend of x over time t with covariate z partialled out, r(tx.z).

    r(tx.z) = (r_tx - r_tz * r_xz) / sqrt((1 - r_tz^2)(1 - r_xz^2)),
    p from the t-statistic with n-3 dof. None when any pairwise correlation
    is undefined or a covariate correlation is degenerate (|r| = 1).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    n = len(t)
    if not (n == len(x) == len(z)):
        raise ValueError("vectors must have equal length")
    if n < 4:
        raise ValueError("need at least 4 samples")
    kernel = spearman if kind == "spearman" else pearson
    c_tx = kernel(t, x)
    c_tz = kernel(t, z)
    c_xz = kernel(x, z)
    if c_tx is None or c_tz is None or c_xz is None:
        return None
    r_tx, r_tz, r_xz = c_tx[0], c_tz[0], c_xz[0]
    if abs(r_tz) >= 1.0 or abs(r_xz) >= 1.0:
        return None
    r = (r_tx - r_tz * r_xz) / math.sqrt((1.0 - r_tz**2) * (1.0 - r_xz**2))
    r = min(1.0, max(-1.0, r))
    return r, _t_pvalue(r, n - 3)


# -- vectorized sliding-window kernels ----------------------------------------


def _sliding(a: np.ndarray, length: int, step: int) -> np.ndarray:
    starts = np.arange(0, len(a) - length + 1, step)
    return a[starts[:, None] + np.arange(length)[None, :]], starts


def _rank_rows(m: np.ndarray) -> np.ndarray:
    """Average ranks along axis 1."""
    order = np.argsort(m, axis=1, kind="stable")
    sx = np.take_along_axis(m, order, axis=1)
    n = m.shape[1]
    idx = np.arange(n, dtype=float)
    ranks_sorted = np.empty_like(sx)
    for row in range(m.shape[0]):
        i = 0
        srow = sx[row]
        rrow = ranks_sorted[row]
        while i < n:
            j = i
            while j + 1 < n and srow[j + 1] == srow[i]:
                j += 1
            rrow[i : j + 1] = 0.5 * (idx[i] + idx[j]) + 1.0
            i = j + 1
    out = np.empty_like(m)
    np.put_along_axis(out, order, ranks_sorted, axis=1)
    return out


def _row_corr(mx: np.ndarray, my: np.ndarray) -> np.ndarray:
    """Row-wise pearson; NaN where undefined."""
    dx = mx - mx.mean(axis=1, keepdims=True)
    dy = my - my.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", dx, dx)
    syy = np.einsum("ij,ij->i", dy, dy)
    sxy = np.einsum("ij,ij->i", dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = sxy / np.sqrt(sxx * syy)
    r[(sxx == 0.0) | (syy == 0.0)] = np.nan
    return np.clip(r, -1.0, 1.0)


def _p_from_r(r: np.ndarray, dof: int) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.abs(r) * np.sqrt(dof / (1.0 - r * r))
    p = np.where(np.abs(r) >= 1.0, 0.0, 2.0 * stdtr(dof, -np.where(np.isnan(t), 0.0, t)))
    return np.where(np.isnan(r), np.nan, p)


# -- relation specs and evaluation --------------------------------------------


@dataclass(frozen=True)
class MrSpec:
    id: str
    metric: str               # MetricSeries column name
    anomalous_sign: int       # +1 or -1
    use_differences: bool = False
    correlation_kind: str = "spearman"
    threshold_tau: float = 0.5
    alpha: float = 0.05
    window_len: int = 30
    step: int = 1

    def __post_init__(self):
        if self.anomalous_sign not in (-1, +1):
            raise ValueError("anomalous_sign must be +1 or -1")
        if not 0.0 < self.threshold_tau <= 1.0:
            raise ValueError("threshold_tau must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.window_len < 5:
            raise ValueError("window_len must be >= 5")
        if self.step < 1:
            raise ValueError("step must be >= 1")


def default_mr_specs(
    correlation_kind: str = "spearman",
    threshold_tau: float = 0.5,
    alpha: float = 0.05,
    window_len: int = 30,
    step: int = 1,
    include_aux: bool = True,
) -> list[MrSpec]:
    """The nine standard relations plus the auxiliary queue-drop relation."""
    rows = [
        ("MR1", "rssi_dbm", +1, False),
        ("MR2", "lqi", +1, False),
        ("MR3", "sinr_db", -1, False),
        ("MR4", "pcr", -1, False),
        ("MR5", "sh_delay_s", -1, False),
        ("MR6", "sh_jitter_s", -1, True),
        ("MR7", "sh_throughput_bps", +1, False),
        ("MR8", "sh_prr", +1, False),
        ("MR9", "beta", +1, False),
    ]
    if include_aux:
        rows.append(("MRQ", "queue_drop_count", -1, False))
    return [
        MrSpec(
            id=mr,
            metric=col,
            anomalous_sign=sign,
            use_differences=diff,
            correlation_kind=correlation_kind,
            threshold_tau=threshold_tau,
            alpha=alpha,
            window_len=window_len,
            step=step,
        )
        for mr, col, sign, diff in rows
    ]


@dataclass
class MrVerdict:
    mr: str
    link: tuple[int, int]
    window_index: int
    t_start: float
    t_end: float
    r: float | None
    p: float | None
    violated: bool
    r_trend: float | None = None
    p_trend: float | None = None


def evaluate_mr(
    spec: MrSpec,
    metric: MetricSeries,
    distance: MetricSeries,
    link: tuple[int, int] = (0, 0),
    with_trend: bool = True,
) -> list[MrVerdict]:
    """Slide the relation over aligned metric/distance series."""
    if len(metric.times) != len(distance.times) or not np.allclose(
        metric.times, distance.times, atol=1e-6
    ):
        raise ValueError("metric and distance series must be aligned")
    needed = spec.window_len + (1 if spec.use_differences else 0)
    if len(metric.times) < needed:
        return []
    x_series, z_series = metric, distance
    if spec.use_differences:
        x_series = difference(x_series)
        z_series = difference(z_series)
    x = x_series.values
    z = z_series.values
    times = x_series.times
    n = len(x)
    if n < spec.window_len:
        return []

    wx, starts = _sliding(x, spec.window_len, spec.step)
    wz, _ = _sliding(z, spec.window_len, spec.step)
    wt, _ = _sliding(times, spec.window_len, spec.step)

    if spec.correlation_kind == "spearman":
        rx, rz = _rank_rows(wx), _rank_rows(wz)
        rt = _rank_rows(wt)
    elif spec.correlation_kind == "pearson":
        rx, rz, rt = wx, wz, wt
    else:
        raise ValueError(f"unknown correlation kind {spec.correlation_kind!r}")

    r_xz = _row_corr(rx, rz)
    p_xz = _p_from_r(r_xz, spec.window_len - 2)

    r_trend = p_trend = None
    if with_trend:
        r_tx = _row_corr(rt, rx)
        r_tz = _row_corr(rt, rz)
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = np.sqrt((1.0 - r_tz**2) * (1.0 - r_xz**2))
            r_trend = np.clip((r_tx - r_tz * r_xz) / denom, -1.0, 1.0)
        r_trend[np.abs(r_tz) >= 1.0] = np.nan
        r_trend[np.abs(r_xz) >= 1.0] = np.nan
        p_trend = _p_from_r(r_trend, spec.window_len - 3)

    dt = times[1] - times[0] if n >= 2 else 0.0
    verdicts = []
    for k, s in enumerate(starts):
        r = r_xz[k]
        defined = not np.isnan(r)
        violated = bool(
            defined
            and math.copysign(1.0, r) == spec.anomalous_sign
            and abs(r) >= spec.threshold_tau
            and p_xz[k] <= spec.alpha
        )
        verdicts.append(
            MrVerdict(
                mr=spec.id,
                link=link,
                window_index=int(s),
                t_start=float(wt[k, 0]),
                t_end=float(wt[k, -1] + dt),
                r=float(r) if defined else None,
                p=float(p_xz[k]) if defined else None,
                violated=violated,
                r_trend=float(r_trend[k])
                if with_trend and not np.isnan(r_trend[k])
                else None,
                p_trend=float(p_trend[k])
                if with_trend and not np.isnan(p_trend[k])
                else None,
            )
        )
    return verdicts


# -- scoring against ground truth ---------------------------------------------


@dataclass
class MrPerformance:
    mr: str
    precision: float | None
    recall: float | None
    mean_delay_s: float | None
    true_positives: int = 0
    false_positives: int = 0
    events_detected: int = 0
    events_total: int = 0


def rank_mrs(verdicts, truth_entries, grace_s: float = 5.0) -> list[MrPerformance]:
    """Score every relation against the ground-truth event log.

    A violating verdict is a true positive when its window overlaps
    [t_start, t_end + grace] of an event touching its link. Detection delay
    is the earliest violating window start minus the event start.
    """
    mr_ids = sorted({v.mr for v in verdicts})
    out = []
    for mr in mr_ids:
        violating = [v for v in verdicts if v.mr == mr and v.violated]
        detected = 0
        delays = []
        for entry in truth_entries:
            ev = entry.event
            links = {tuple(l) for l in entry.affected_links}
            hits = [
                v
                for v in violating
                if tuple(v.link) in links
                and v.t_end >= ev.t_start
                and v.t_start <= ev.t_end + grace_s
            ]
            if hits:
                detected += 1
                delays.append(min(v.t_start for v in hits) - ev.t_start)
        matched = set()
        for v in violating:
            for entry in truth_entries:
                ev = entry.event
                links = {tuple(l) for l in entry.affected_links}
                if (
                    tuple(v.link) in links
                    and v.t_end >= ev.t_start
                    and v.t_start <= ev.t_end + grace_s
                ):
                    matched.add(id(v))
                    break
        tp = len(matched)
        fp = len(violating) - tp
        n_events = len(truth_entries)
        out.append(
            MrPerformance(
                mr=mr,
                precision=tp / len(violating) if violating else None,
                recall=detected / n_events if n_events else None,
                mean_delay_s=sum(delays) / len(delays) if delays else None,
                true_positives=tp,
                false_positives=fp,
                events_detected=detected,
                events_total=n_events,
            )
        )

    def sort_key(perf: MrPerformance):
        recall = -1.0 if perf.recall is None else perf.recall
        delay = math.inf if perf.mean_delay_s is None else perf.mean_delay_s
        precision = -1.0 if perf.precision is None else perf.precision
        return (-recall, delay, -precision)

    return sorted(out, key=sort_key)
