"""Per-link, per-window aggregation of link-quality metrics.

Nine wireless metrics (RSSI, LQI, SINR, PCR, SH-Delay, SH-Jitter,
SH-Throughput, SH-PRR, beta) plus queue auxiliaries are computed from raw
trace records. Fields that cannot be measured in a window stay None here;
filling them is the preprocessing stage's job.

The beta burstiness factor compares the link's conditional packet delivery
function (CPDF) against an ideally independent link with the same PRR,
using mean-absolute-difference distances to the perfectly bursty CPDF:

    beta = (KW(I) - KW(E)) / KW(I),   clamped to [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

from .simulate import (
    OUTCOME_CORRUPTED,
    OUTCOME_DELIVERED,
    OUTCOME_DROPPED,
    OUTCOME_LOST,
    TraceRecord,
    record_time,
)

logger = logging.getLogger(__name__)


@dataclass
class MetricWindow:
    link_src: int
    link_dst: int
    t_start: float
    t_end: float
    rssi_dbm: float | None
    lqi: float | None
    sinr_db: float | None
    pcr: float | None
    sh_delay_s: float | None
    sh_jitter_s: float | None
    sh_throughput_bps: float | None
    sh_prr: float | None
    beta: float | None
    queue_drop_count: int
    queue_occupancy: float | None
    packets_received: int
    distance_m: float | None
    n_packets: int

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise ValueError("t_start must precede t_end")
        for name in ("pcr", "sh_prr", "queue_occupancy", "beta"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {value}")


METRIC_FIELDS = [
    f.name
    for f in fields(MetricWindow)
    if f.name not in ("link_src", "link_dst", "t_start", "t_end", "n_packets")
]


def cpdf(delivery: list[bool], max_lag: int) -> list[float] | None:
    """Conditional delivery probabilities indexed k = -max_lag..-1, 1..max_lag.

    Entry for k > 0 conditions on the k preceding attempts all succeeding;
    k < 0 on the |k| preceding attempts all failing. Conditions never
    observed fall back to the unconditional PRR.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    n = len(delivery)
    if n == 0:
        return None
    prr = sum(delivery) / n
    out = []
    for k in range(-max_lag, max_lag + 1):
        if k == 0:
            continue
        want = k > 0
        run = abs(k)
        hits = total = 0
        for i in range(run, n):
            if all(delivery[j] == want for j in range(i - run, i)):
                total += 1
                hits += delivery[i]
        out.append(hits / total if total else prr)
    return out


def kw_distance(a, b) -> float:
    """Mean absolute difference between two equal-length probability vectors."""
    if len(a) != len(b):
        raise ValueError("vectors must have equal length")
    if len(a) == 0:
        raise ValueError("vectors must be non-empty")
    return sum(abs(x - y) for x, y in zip(a, b)) / len(a)


def bursty_reference(max_lag: int) -> list[float]:
    """CPDF of the perfectly bursty link: never recovers, never degrades."""
    return [0.0] * max_lag + [1.0] * max_lag


def beta_factor(delivery: list[bool], max_lag: int = 5) -> float | None:
    """Burstiness in [0, 1]; None for degenerate all-success/all-failure input."""
    n = len(delivery)
    if n == 0:
        return None
    successes = sum(delivery)
    if successes == 0 or successes == n:
        return None
    measured = cpdf(delivery, max_lag)
    prr = successes / n
    ideal = [prr] * (2 * max_lag)
    ref = bursty_reference(max_lag)
    kw_i = kw_distance(ideal, ref)
    kw_e = kw_distance(measured, ref)
    beta = (kw_i - kw_e) / kw_i
    if not 0.0 <= beta <= 1.0:
        # finite samples can land outside; keep the documented range
        logger.debug("clamping beta %.4f into [0, 1] (n=%d)", beta, n)
    return min(1.0, max(0.0, beta))


def _attempt_outcomes(rec: TraceRecord) -> list[bool]:
    """Expand a record into its per-attempt success booleans, oldest first."""
    if rec.outcome == OUTCOME_DELIVERED:
        return [False] * rec.retries + [True]
    if rec.outcome in (OUTCOME_CORRUPTED, OUTCOME_LOST):
        return [False] * (rec.retries + 1)
    return []


def window_metrics(
    records: list[TraceRecord],
    window_s: float,
    *,
    packet_bytes: int,
    links: list[tuple[int, int]] | None = None,
    t_end: float | None = None,
    queue_capacity: int | None = None,
    max_lag: int = 5,
) -> list[MetricWindow]:
    """Aggregate trace records into a rectangular link x window grid.

    Records must be sorted by their window-assignment time. Every link gets
    a row for every window in [0, t_end); unmeasurable fields stay None.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    times = [record_time(r) for r in records]
    if any(t1 > t2 for t1, t2 in zip(times, times[1:])):
        raise ValueError("records must be sorted by time")

    if links is None:
        links = sorted({(r.link_src, r.link_dst) for r in records}, reverse=True)
    if t_end is None:
        t_end = max(times, default=0.0)
        for r in records:
            if r.t_rx_end is not None:
                t_end = max(t_end, r.t_rx_end)
    n_windows = max(1, int(math.ceil(t_end / window_s - 1e-9)))

    by_cell: dict[tuple[tuple[int, int], int], list[TraceRecord]] = {}
    for rec, t in zip(records, times):
        w = min(int(t / window_s), n_windows - 1)
        by_cell.setdefault(((rec.link_src, rec.link_dst), w), []).append(rec)

    pkt_bits = packet_bytes * 8
    out = []
    for link in links:
        for w in range(n_windows):
            cell = by_cell.get((link, w), [])
            out.append(
                _aggregate(link, w, window_s, cell, pkt_bits, queue_capacity, max_lag)
            )
    return out


def _aggregate(link, w, window_s, cell, pkt_bits, queue_capacity, max_lag) -> MetricWindow:
    transmitted = [r for r in cell if r.t_tx_start is not None]
    delivered = [r for r in cell if r.outcome == OUTCOME_DELIVERED]
    dropped = [r for r in cell if r.outcome == OUTCOME_DROPPED]

    corrupted_attempts = 0
    received_attempts = 0
    for r in transmitted:
        if r.outcome == OUTCOME_DELIVERED:
            corrupted_attempts += r.retries
            received_attempts += r.retries + 1
        elif r.outcome == OUTCOME_CORRUPTED:
            corrupted_attempts += r.retries + 1
            received_attempts += r.retries + 1

    def mean_of(values):
        vals = [v for v in values if v is not None]
        return sum(vals) / len(vals) if vals else None

    delays = [r.t_rx_end - r.t_enqueue for r in delivered]
    jitter = None
    if len(delays) >= 2:
        jitter = sum(abs(b - a) for a, b in zip(delays, delays[1:])) / (len(delays) - 1)

    delivery_vector: list[bool] = []
    for r in transmitted:
        delivery_vector.extend(_attempt_outcomes(r))

    occupancy = None
    if queue_capacity is not None and transmitted:
        waited = sum(r.t_tx_start - r.t_enqueue for r in transmitted)
        occupancy = min(1.0, waited / window_s / queue_capacity)

    return MetricWindow(
        link_src=link[0],
        link_dst=link[1],
        t_start=w * window_s,
        t_end=(w + 1) * window_s,
        rssi_dbm=mean_of(r.rssi_dbm for r in cell),
        lqi=mean_of(float(r.lqi) if r.lqi is not None else None for r in cell),
        sinr_db=mean_of(r.sinr_db for r in cell),
        pcr=corrupted_attempts / received_attempts if received_attempts else None,
        sh_delay_s=mean_of(delays) if delays else None,
        sh_jitter_s=jitter,
        sh_throughput_bps=len(delivered) * pkt_bits / window_s if transmitted else None,
        sh_prr=len(delivered) / len(transmitted) if transmitted else None,
        beta=beta_factor(delivery_vector, max_lag) if delivery_vector else None,
        queue_drop_count=len(dropped),
        queue_occupancy=occupancy,
        packets_received=len(delivered),
        distance_m=mean_of(r.distance_m for r in cell),
        n_packets=len(cell),
    )
