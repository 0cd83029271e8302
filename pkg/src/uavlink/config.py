"""Scenario/detection configuration: TOML file parsing and defaults."""

from __future__ import annotations

import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ChannelParams
from .mobility import Bounds3
from .pipeline import DetectParams
from .simulate import AnomalyEvent, MobilityParams, ScenarioConfig

DEFAULT_CONFIG_TOML = """\
# uavlink scenario configuration
# One ground station (node 0) and UAV relays up a linear chain; the last
# node carries the on-off traffic source. All randomness derives from
# scenario.seed.

[scenario]
n_nodes = 4          # chain length including the ground station
duration_s = 300.0   # traffic generation horizon (queues drain afterwards)
seed = 42

[source]             # on-off application on the last node
on_s = 1.5           # mean of the exponential on period
off_s = 0.75         # mean of the exponential off period
data_rate_bps = 10000
packet_bytes = 125

[mac]
link_rate_bps = 32000
queue_capacity = 6   # packets per relay queue
max_retries = 3      # retransmissions before a packet counts as lost
input_delay_s = 0.0001
backoff_max_s = 0.005
cs_threshold_dbm = -92.0   # carrier-sense deferral threshold

[channel]
tx_power_dbm = 20.0
pl_exponent = 2.7
pl_ref_db = 40.0     # path loss at 1 m
rician_k = 1.0       # line-of-sight factor; inf disables fading
noise_floor_dbm = -101.0
per_midpoint_db = 7.0  # SINR at 50% packet corruption
per_slope = 0.8
lqi_min_db = 0.0
lqi_max_db = 30.0

[mobility]           # Gauss-Markov parameters for the UAVs (node 0 is fixed)
memory_alpha = 0.85
noise_sigma = 0.5    # m/s
sample_interval_s = 0.1
bounds_x = 500.0
bounds_y = 500.0
bounds_z = 100.0
node_spacing_m = 180.0

[detect]
window_s = 1.0       # metric aggregation window
correlation = "spearman"   # or "pearson"
window_len = 30      # sliding correlation window, in samples
step = 1
tau = 0.5            # violation needs |r| >= tau ...
alpha = 0.05         # ... and p <= alpha, with the anomalous sign
grace_s = 5.0        # scoring grace after an event ends
max_lag = 5          # CPDF depth for the burstiness factor
sentinel_factor = 10.0     # finite stand-in for infinite imputation values
spline = true        # smooth distance with a sparse-knot natural spline
spline_knot_s = 10.0
localize_metric = "sh_prr"
patch = 3            # rank/census neighborhood
warmup_rows = 10     # heat-map rows assumed anomaly-free
min_run = 12         # sustained rows required to call a vertical line
median_rows = 9      # temporal despeckle width

# Scripted anomalies; repeat the block for several events.
# kind: total_failure | attenuation | overload
# magnitude: dB for attenuation, bps for overload (ignored otherwise)
[[anomaly]]
kind = "total_failure"
node = 2
t_start = 100.0
t_end = 200.0
magnitude = 0.0
"""


class ConfigError(ValueError):
    pass


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _get(table: dict, key: str, default, section: str):
    value = table.get(key, default)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
        return value
    return value


def parse_config_text(text: str) -> tuple[ScenarioConfig, DetectParams]:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return scenario_from_dict(doc), detect_from_dict(doc)


def load_config(path) -> tuple[ScenarioConfig, DetectParams]:
    with open(path) as fh:
        return parse_config_text(fh.read())


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    sc = _section(doc, "scenario")
    src = _section(doc, "source")
    mac = _section(doc, "mac")
    ch = _section(doc, "channel")
    mob = _section(doc, "mobility")

    rician_k = _get(ch, "rician_k", 1.0, "channel")
    channel = ChannelParams(
        tx_power_dbm=_get(ch, "tx_power_dbm", 20.0, "channel"),
        pl_exponent=_get(ch, "pl_exponent", 2.7, "channel"),
        pl_ref_db=_get(ch, "pl_ref_db", 40.0, "channel"),
        rician_k=None if math.isinf(rician_k) else rician_k,
        noise_floor_dbm=_get(ch, "noise_floor_dbm", -101.0, "channel"),
        per_midpoint_db=_get(ch, "per_midpoint_db", 7.0, "channel"),
        per_slope=_get(ch, "per_slope", 0.8, "channel"),
        lqi_min_db=_get(ch, "lqi_min_db", 0.0, "channel"),
        lqi_max_db=_get(ch, "lqi_max_db", 30.0, "channel"),
    )
    mobility = MobilityParams(
        memory_alpha=_get(mob, "memory_alpha", 0.85, "mobility"),
        noise_sigma=_get(mob, "noise_sigma", 0.5, "mobility"),
        sample_interval_s=_get(mob, "sample_interval_s", 0.1, "mobility"),
        bounds=Bounds3(
            lo=(0.0, 0.0, 0.0),
            hi=(
                _get(mob, "bounds_x", 500.0, "mobility"),
                _get(mob, "bounds_y", 500.0, "mobility"),
                _get(mob, "bounds_z", 100.0, "mobility"),
            ),
        ),
        node_spacing_m=_get(mob, "node_spacing_m", 180.0, "mobility"),
    )
    anomalies = []
    for i, ev in enumerate(doc.get("anomaly", [])):
        if not isinstance(ev, dict):
            raise ConfigError(f"anomaly[{i}] must be a table")
        try:
            anomalies.append(
                AnomalyEvent(
                    kind=_get(ev, "kind", "", f"anomaly[{i}]"),
                    node=_get(ev, "node", 0, f"anomaly[{i}]"),
                    t_start=_get(ev, "t_start", 0.0, f"anomaly[{i}]"),
                    t_end=_get(ev, "t_end", 0.0, f"anomaly[{i}]"),
                    magnitude=_get(ev, "magnitude", 0.0, f"anomaly[{i}]"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"anomaly[{i}]: missing key {exc}") from exc

    config = ScenarioConfig(
        n_nodes=_get(sc, "n_nodes", 4, "scenario"),
        sim_duration_s=_get(sc, "duration_s", 300.0, "scenario"),
        seed=_get(sc, "seed", 42, "scenario"),
        onoff_on_s=_get(src, "on_s", 1.5, "source"),
        onoff_off_s=_get(src, "off_s", 0.75, "source"),
        data_rate_bps=_get(src, "data_rate_bps", 10_000.0, "source"),
        packet_bytes=_get(src, "packet_bytes", 125, "source"),
        link_rate_bps=_get(mac, "link_rate_bps", 32_000.0, "mac"),
        queue_capacity=_get(mac, "queue_capacity", 6, "mac"),
        max_retries=_get(mac, "max_retries", 3, "mac"),
        d_input_s=_get(mac, "input_delay_s", 1e-4, "mac"),
        backoff_max_s=_get(mac, "backoff_max_s", 5e-3, "mac"),
        cs_threshold_dbm=_get(mac, "cs_threshold_dbm", -92.0, "mac"),
        channel=channel,
        mobility=mobility,
        anomalies=anomalies,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def detect_from_dict(doc: dict) -> DetectParams:
    det = _section(doc, "detect")
    params = DetectParams(
        window_s=_get(det, "window_s", 1.0, "detect"),
        correlation=_get(det, "correlation", "spearman", "detect"),
        window_len=_get(det, "window_len", 30, "detect"),
        step=_get(det, "step", 1, "detect"),
        tau=_get(det, "tau", 0.5, "detect"),
        alpha=_get(det, "alpha", 0.05, "detect"),
        grace_s=_get(det, "grace_s", 5.0, "detect"),
        max_lag=_get(det, "max_lag", 5, "detect"),
        sentinel_factor=_get(det, "sentinel_factor", 10.0, "detect"),
        spline=_get(det, "spline", True, "detect"),
        spline_knot_s=_get(det, "spline_knot_s", 10.0, "detect"),
        localize_metric=_get(det, "localize_metric", "sh_prr", "detect"),
        patch=_get(det, "patch", 3, "detect"),
        warmup_rows=_get(det, "warmup_rows", 10, "detect"),
        min_run=_get(det, "min_run", 12, "detect"),
        median_rows=_get(det, "median_rows", 9, "detect"),
    )
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return params


def default_config() -> tuple[ScenarioConfig, DetectParams]:
    return parse_config_text(DEFAULT_CONFIG_TOML)
