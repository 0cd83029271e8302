"""Shared fixtures: expensive seeded runs are computed once per session."""

from __future__ import annotations

from dataclasses import replace

import pytest

from uavlink.config import default_config
from uavlink.pipeline import run_detection
from uavlink.relations import rank_mrs
from uavlink.simulate import AnomalyEvent, ScenarioConfig, run_simulation

# Seed batches for the statistical acceptance checks; the suite is fully
# deterministic given these.
FAILURE_SEEDS = list(range(1, 21))
CLEAN_SEEDS = list(range(1001, 1021))

DEFAULT_EVENT = AnomalyEvent("total_failure", 2, 100.0, 200.0)

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def failure_scenario(seed: int) -> ScenarioConfig:
    cfg, _ = default_config()
    return replace(cfg, seed=seed, anomalies=[DEFAULT_EVENT])


def clean_scenario(seed: int) -> ScenarioConfig:
    cfg, _ = default_config()
    return replace(cfg, seed=seed, anomalies=[])


def detect_run(config: ScenarioConfig):
    """Simulate one scenario and run the full detection pass."""
    _, params = default_config()
    result = run_simulation(config)
    detection = run_detection(
        result.records,
        result.position_times,
        result.positions,
        params,
        packet_bytes=config.packet_bytes,
        queue_capacity=config.queue_capacity,
        minimum_t=config.sim_duration_s,
    )
    return result, detection


@pytest.fixture(scope="session")
def default_run():
    """The shipped default scenario (seed 42, failure at node 2)."""
    cfg, _ = default_config()
    return detect_run(cfg)


@pytest.fixture(scope="session")
def failure_batch():
    """20 seeded failure runs with their relation rankings."""
    out = []
    for seed in FAILURE_SEEDS:
        result, detection = detect_run(failure_scenario(seed))
        perfs = {p.mr: p for p in rank_mrs(detection.verdicts, result.ground_truth, grace_s=5.0)}
        out.append((seed, result, detection, perfs))
    return out


@pytest.fixture(scope="session")
def clean_batch():
    """20 seeded anomaly-free runs."""
    out = []
    for seed in CLEAN_SEEDS:
        result, detection = detect_run(clean_scenario(seed))
        out.append((seed, result, detection))
    return out
