"""Discrete-event simulator for a linear UAV relay chain.

Topology: node n-1 (last UAV, on-off traffic source) -> ... -> node 0
(ground station, sink). Routing is fixed along the chain; every hop is a
half-duplex FIFO queue with retransmissions over the fading channel.
Scripted anomalies (total link failure, attenuation, queue overload) are
injected per node and logged as ground truth for scoring only - the
detector never reads them.

Everything is driven by one seed; a run is reproducible bit-for-bit.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    SPEED_OF_LIGHT,
    ChannelParams,
    dbm_to_mw,
    mean_received_power_dbm,
    measure_signal,
)
from .mobility import Bounds3, MobilityState, simulate_trajectories

ANOMALY_KINDS = ("total_failure", "attenuation", "overload")

OUTCOME_DELIVERED = "delivered"
OUTCOME_CORRUPTED = "corrupted"
OUTCOME_DROPPED = "dropped_queue"
OUTCOME_LOST = "lost_link"


@dataclass(frozen=True)
class AnomalyEvent:
    kind: str
    node: int
    t_start: float
    t_end: float
    magnitude: float = 0.0  # dB for attenuation, bps for overload

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass
class MobilityParams:
    memory_alpha: float = 0.85
    noise_sigma: float = 0.5
    sample_interval_s: float = 0.1
    bounds: Bounds3 = field(default_factory=Bounds3)
    node_spacing_m: float = 180.0


@dataclass
class ScenarioConfig:
    n_nodes: int = 4
    sim_duration_s: float = 300.0
    seed: int = 42
    # on-off source on the last node
    onoff_on_s: float = 1.5
    onoff_off_s: float = 0.75
    data_rate_bps: float = 10_000.0
    packet_bytes: int = 125
    # MAC
    link_rate_bps: float = 32_000.0
    queue_capacity: int = 6
    max_retries: int = 3
    d_input_s: float = 1e-4
    backoff_max_s: float = 5e-3
    cs_threshold_dbm: float = -92.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    anomalies: list[AnomalyEvent] = field(default_factory=list)

    def validate(self) -> None:
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if self.sim_duration_s <= 0:
            raise ValueError("sim_duration_s must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.packet_bytes <= 0 or self.data_rate_bps <= 0 or self.link_rate_bps <= 0:
            raise ValueError("rates and packet size must be positive")
        if self.onoff_on_s <= 0 or self.onoff_off_s <= 0:
            raise ValueError("on/off period means must be positive")
        for ev in self.anomalies:
            if ev.kind not in ANOMALY_KINDS:
                raise ValueError(f"unknown anomaly kind {ev.kind!r}")
            if not 0.0 <= ev.t_start < ev.t_end <= self.sim_duration_s:
                raise ValueError(
                    f"anomaly window [{ev.t_start}, {ev.t_end}] outside simulation horizon"
                )
            if not 0 <= ev.node < self.n_nodes:
                raise ValueError(f"anomaly node {ev.node} out of range")


@dataclass
class TraceRecord:
    """Terminal fate of one packet on one link."""

    link_src: int
    link_dst: int
    seq: int
    t_enqueue: float
    t_tx_start: float | None
    t_rx_end: float | None
    outcome: str
    rssi_dbm: float | None
    sinr_db: float | None
    lqi: int | None
    retries: int
    distance_m: float | None


@dataclass
class GroundTruthEntry:
    event: AnomalyEvent
    affected_links: list[tuple[int, int]]


@dataclass
class SimulationResult:
    records: list[TraceRecord]
    position_times: np.ndarray
    positions: np.ndarray  # (T, n_nodes, 3)
    ground_truth: list[GroundTruthEntry]
    config: ScenarioConfig


def chain_links(n_nodes: int) -> list[tuple[int, int]]:
    """Links ordered in traffic direction, source side first."""
    return [(i, i - 1) for i in range(n_nodes - 1, 0, -1)]


def affected_links(event: AnomalyEvent, n_nodes: int) -> list[tuple[int, int]]:
    """Links a scripted event degrades, in chain order.

    Adjacent links always; a total failure additionally starves every link
    downstream of the dead node (nothing flows past it).
    """
    links = chain_links(n_nodes)
    adjacent = {l for l in links if event.node in l}
    if event.kind == "total_failure":
        downstream = {(i, i - 1) for i in range(event.node, 0, -1) if i < n_nodes}
        adjacent |= {l for l in links if l in downstream}
    return [l for l in links if l in adjacent]


def initial_states(cfg: ScenarioConfig) -> list[MobilityState]:
    """Place the chain along the arena diagonal; node 0 is a fixed ground station."""
    mob = cfg.mobility
    lo = np.asarray(mob.bounds.lo, dtype=float)
    hi = np.asarray(mob.bounds.hi, dtype=float)
    step_xy = mob.node_spacing_m / math.sqrt(2.0)
    states = []
    for i in range(cfg.n_nodes):
        x = lo[0] + 60.0 + i * step_xy
        y = lo[1] + 60.0 + i * step_xy
        z = 0.0 if i == 0 else min(hi[2] - 20.0, 30.0 + 10.0 * i)
        x = min(x, hi[0] - 20.0)
        y = min(y, hi[1] - 20.0)
        ground = i == 0
        states.append(
            MobilityState(
                position=np.array([x, y, z]),
                velocity=np.zeros(3),
                mean_velocity=np.zeros(3),
                memory_alpha=mob.memory_alpha,
                noise_sigma=0.0 if ground else mob.noise_sigma,
                bounds=mob.bounds,
            )
        )
    return states


class _Packet:
    __slots__ = ("enqueue_t", "seq", "cross")

    def __init__(self, enqueue_t: float, seq: int, cross: bool):
        self.enqueue_t = enqueue_t
        self.seq = seq
        self.cross = cross


class _Sim:
    """Single-run event loop; owns all mutable state."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.n = cfg.n_nodes
        ss = np.random.SeedSequence(cfg.seed)
        mob_seed, src_seed, phy_seed = ss.spawn(3)
        self.src_rng = np.random.default_rng(src_seed)
        self.phy_rng = np.random.default_rng(phy_seed)

        margin = 30.0
        self.pos_times, self.positions = simulate_trajectories(
            initial_states(cfg),
            cfg.sim_duration_s + margin,
            cfg.mobility.sample_interval_s,
            np.random.default_rng(mob_seed),
        )

        self.pkt_bits = cfg.packet_bytes * 8
        self.d_tx = self.pkt_bits / cfg.link_rate_bps
        self.gen_interval = self.pkt_bits / cfg.data_rate_bps

        self.queues: list[list[_Packet]] = [[] for _ in range(self.n)]
        self.q_heads: list[int] = [0] * self.n
        self.busy = [False] * self.n
        # node -> (t_start, t_end, emits) of the transmission in flight
        self.active_tx: dict[int, tuple[float, float, bool]] = {}
        self.link_seq: dict[tuple[int, int], int] = {l: 0 for l in chain_links(self.n)}
        self.records: list[TraceRecord] = []
        self.source_on = False
        self.gen_pending = False

        self.heap: list[tuple[float, int, tuple]] = []
        self.counter = 0

    # -- event machinery ---------------------------------------------------

    def push(self, t: float, item: tuple) -> None:
        self.counter += 1
        heapq.heappush(self.heap, (t, self.counter, item))

    def run(self) -> None:
        cfg = self.cfg
        if math.isfinite(cfg.onoff_off_s):
            self.push(self.src_rng.exponential(cfg.onoff_off_s), ("toggle",))
        for ev in cfg.anomalies:
            if ev.kind == "overload" and ev.magnitude > 0:
                self.push(ev.t_start, ("xgen", ev))
        while self.heap:
            t, _, item = heapq.heappop(self.heap)
            kind = item[0]
            if kind == "toggle":
                self.on_toggle(t)
            elif kind == "gen":
                self.on_gen(t)
            elif kind == "xgen":
                self.on_xgen(t, item[1])
            elif kind == "svc":
                self.try_serve(item[1], t)
            elif kind == "attempt":
                self.on_attempt(t, *item[1:])
            elif kind == "txend":
                self.on_txend(t, *item[1:])

    # -- traffic sources ---------------------------------------------------

    def on_toggle(self, t: float) -> None:
        cfg = self.cfg
        if t >= cfg.sim_duration_s:
            self.source_on = False
            return
        self.source_on = not self.source_on
        mean = cfg.onoff_on_s if self.source_on else cfg.onoff_off_s
        if math.isfinite(mean):
            self.push(t + self.src_rng.exponential(mean), ("toggle",))
        if self.source_on and not self.gen_pending:
            self.gen_pending = True
            self.push(t, ("gen",))

    def on_gen(self, t: float) -> None:
        if not self.source_on or t >= self.cfg.sim_duration_s:
            self.gen_pending = False
            return
        self.offer(self.n - 1, t, cross=False)
        self.push(t + self.gen_interval, ("gen",))

    def on_xgen(self, t: float, ev: AnomalyEvent) -> None:
        if t >= ev.t_end or t >= self.cfg.sim_duration_s:
            return
        self.offer(ev.node, t, cross=True)
        self.push(t + self.pkt_bits / ev.magnitude, ("xgen", ev))

    # -- queueing ----------------------------------------------------------

    def offer(self, node: int, t: float, cross: bool) -> None:
        if node == 0:
            return  # sink consumes
        link = (node, node - 1)
        seq = self.link_seq[link]
        self.link_seq[link] = seq + 1
        q = self.queues[node]
        if len(q) - self.q_heads[node] >= self.cfg.queue_capacity:
            self.records.append(
                TraceRecord(
                    link_src=node,
                    link_dst=node - 1,
                    seq=seq,
                    t_enqueue=t,
                    t_tx_start=None,
                    t_rx_end=None,
                    outcome=OUTCOME_DROPPED,
                    rssi_dbm=None,
                    sinr_db=None,
                    lqi=None,
                    retries=0,
                    distance_m=None,
                )
            )
            return
        q.append(_Packet(t, seq, cross))
        if not self.busy[node]:
            self.push(t, ("svc", node))

    def try_serve(self, node: int, t: float) -> None:
        q = self.queues[node]
        head = self.q_heads[node]
        if self.busy[node] or head >= len(q):
            return
        pkt = q[head]
        self.q_heads[node] = head + 1
        if self.q_heads[node] > 64:  # amortized pop-front
            del q[: self.q_heads[node]]
            self.q_heads[node] = 0
        self.busy[node] = True
        self.push(t + self.backoff(), ("attempt", node, pkt, 0, None))

    def backoff(self) -> float:
        return self.phy_rng.uniform(0.0, self.cfg.backoff_max_s)

    # -- anomaly state -----------------------------------------------------

    def node_failed(self, node: int, t: float) -> bool:
        return any(
            ev.kind == "total_failure" and ev.node == node and ev.active(t)
            for ev in self.cfg.anomalies
        )

    def attenuation_db(self, src: int, dst: int, t: float) -> float:
        total = 0.0
        for ev in self.cfg.anomalies:
            if ev.kind == "attenuation" and ev.active(t) and ev.node in (src, dst):
                total += ev.magnitude
        return total

    # -- radio -------------------------------------------------------------

    def node_distance(self, a: int, b: int, t: float) -> float:
        pa = self._pos(a, t)
        pb = self._pos(b, t)
        return float(np.sqrt(np.sum((pa - pb) ** 2)))

    def _pos(self, node: int, t: float) -> np.ndarray:
        times = self.pos_times
        idx = min(int(t / self.cfg.mobility.sample_interval_s), len(times) - 2)
        frac = (t - times[idx]) / (times[idx + 1] - times[idx])
        frac = min(1.0, max(0.0, frac))
        return self.positions[idx, node] + frac * (
            self.positions[idx + 1, node] - self.positions[idx, node]
        )

    def channel_busy_until(self, node: int, t: float) -> float | None:
        """Latest end time of an audible foreign transmission, if any."""
        latest = None
        for other, (t0, t1, emits) in self.active_tx.items():
            if other == node or not emits or t1 <= t:
                continue
            heard = mean_received_power_dbm(
                max(self.node_distance(other, node, t), 1.0), self.cfg.channel
            )
            if heard >= self.cfg.cs_threshold_dbm:
                latest = t1 if latest is None else max(latest, t1)
        return latest

    def on_attempt(self, t: float, node: int, pkt: _Packet, attempt: int, _ctx) -> None:
        cfg = self.cfg
        sender_dead = self.node_failed(node, t)
        if not sender_dead:
            busy_until = self.channel_busy_until(node, t)
            if busy_until is not None:
                self.push(busy_until + self.backoff(), ("attempt", node, pkt, attempt, None))
                return
        dst = node - 1
        t_end = t + self.d_tx
        d = max(self.node_distance(node, dst, t), 1e-3)
        interference_mw = dbm_to_mw(cfg.channel.noise_floor_dbm)
        for other, (t0, t1, emits) in self.active_tx.items():
            if other == node or not emits or t1 <= t:
                continue
            od = max(self.node_distance(other, dst, t), 1.0)
            interference_mw += dbm_to_mw(mean_received_power_dbm(od, cfg.channel))
        sample = measure_signal(
            d, cfg.channel, self.phy_rng, interference_mw, self.attenuation_db(node, dst, t)
        )
        self.active_tx[node] = (t, t_end, not sender_dead)
        self.push(t_end, ("txend", node, pkt, attempt, (t, d, sample, sender_dead)))

    def on_txend(self, t: float, node: int, pkt: _Packet, attempt: int, ctx) -> None:
        cfg = self.cfg
        t_start, d, sample, sender_dead = ctx
        self.active_tx.pop(node, None)
        dst = node - 1

        failed_link = sender_dead or self.node_failed(dst, t_start)
        rx_overlap = False
        if not failed_link:
            tx = self.active_tx.get(dst)
            rx_overlap = tx is not None and tx[0] < t  # receiver talked over us
        ok = not failed_link and not rx_overlap and not sample.corrupted

        if not ok and attempt < cfg.max_retries:
            self.push(t + self.backoff(), ("attempt", node, pkt, attempt + 1, None))
            return

        if ok:
            t_rx_end = t + d / SPEED_OF_LIGHT + cfg.d_input_s
            self.records.append(
                TraceRecord(
                    link_src=node,
                    link_dst=dst,
                    seq=pkt.seq,
                    t_enqueue=pkt.enqueue_t,
                    t_tx_start=t_start,
                    t_rx_end=t_rx_end,
                    outcome=OUTCOME_DELIVERED,
                    rssi_dbm=sample.rssi_dbm,
                    sinr_db=sample.sinr_db,
                    lqi=sample.lqi,
                    retries=attempt,
                    distance_m=d,
                )
            )
            if dst >= 1 and not pkt.cross:
                self.offer(dst, t_rx_end, cross=False)
        else:
            outcome = OUTCOME_LOST if failed_link else OUTCOME_CORRUPTED
            measured = not failed_link  # a dead hop measures nothing
            self.records.append(
                TraceRecord(
                    link_src=node,
                    link_dst=dst,
                    seq=pkt.seq,
                    t_enqueue=pkt.enqueue_t,
                    t_tx_start=t_start,
                    t_rx_end=None,
                    outcome=outcome,
                    rssi_dbm=sample.rssi_dbm if measured else None,
                    sinr_db=sample.sinr_db if measured else None,
                    lqi=sample.lqi if measured else None,
                    retries=attempt,
                    distance_m=d,
                )
            )
        self.busy[node] = False
        self.push(t, ("svc", node))


def inject_anomaly(config: ScenarioConfig, event: AnomalyEvent) -> ScenarioConfig:
    """Return a copy of the scenario with one more scripted event."""
    if event.kind not in ANOMALY_KINDS:
        raise ValueError(f"unknown anomaly kind {event.kind!r}")
    if not 0.0 <= event.t_start < event.t_end <= config.sim_duration_s:
        raise ValueError("event window outside simulation horizon")
    return replace(config, anomalies=[*config.anomalies, event])


def run_simulation(config: ScenarioConfig) -> SimulationResult:
    """Execute one seeded scenario and return trace, positions and truth."""
    sim = _Sim(config)
    sim.run()
    sim.records.sort(key=lambda r: (record_time(r), r.link_src, r.seq))
    truth = [
        GroundTruthEntry(event=ev, affected_links=affected_links(ev, config.n_nodes))
        for ev in config.anomalies
    ]
    return SimulationResult(
        records=sim.records,
        position_times=sim.pos_times,
        positions=sim.positions,
        ground_truth=truth,
        config=config,
    )


def record_time(rec: TraceRecord) -> float:
    """Time that places a record in a metric window."""
    return rec.t_tx_start if rec.t_tx_start is not None else rec.t_enqueue
