import math

import numpy as np
import pytest

from uavlink.mobility import (
    Bounds3,
    MobilityState,
    Position3,
    euclidean_distance,
    gm_step,
    link_distance_series,
    simulate_trajectories,
)


def make_state(**kw):
    base = dict(
        position=np.array([100.0, 100.0, 50.0]),
        velocity=np.zeros(3),
        mean_velocity=np.zeros(3),
        memory_alpha=0.85,
        noise_sigma=0.5,
        bounds=Bounds3(),
    )
    base.update(kw)
    return MobilityState(**base)


def test_alpha_one_freezes_velocity():
    state = make_state(velocity=np.array([1.0, 0.0, 0.0]), memory_alpha=1.0, noise_sigma=0.0)
    nxt = gm_step(state, 1.0, np.random.default_rng(0))
    assert np.allclose(nxt.velocity, [1.0, 0.0, 0.0])
    assert np.allclose(nxt.position - state.position, [1.0, 0.0, 0.0])


def test_alpha_zero_snaps_to_mean():
    state = make_state(mean_velocity=np.array([0.0, 0.0, 2.0]), memory_alpha=0.0, noise_sigma=0.0)
    nxt = gm_step(state, 1.0, np.random.default_rng(0))
    assert np.allclose(nxt.velocity, [0.0, 0.0, 2.0])


def test_stationary_mean_matches_mean_velocity():
    """Sample mean of the AR(1) velocity stays within 3 standard errors."""
    rng = np.random.default_rng(7)
    alpha, sigma = 0.85, 0.5
    mean_v = np.array([0.3, -0.2, 0.1])
    state = make_state(
        position=np.array([250.0, 250.0, 50.0]),
        mean_velocity=mean_v,
        memory_alpha=alpha,
        noise_sigma=sigma,
        bounds=Bounds3(hi=(10000.0, 10000.0, 10000.0), lo=(-10000.0, -10000.0, -10000.0)),
    )
    n = 1000
    vels = np.empty((n, 3))
    for k in range(n):
        state = gm_step(state, 0.1, rng)
        vels[k] = state.velocity
    # variance of the mean of an AR(1) sample inflates by (1+a)/(1-a)
    se = sigma * math.sqrt((1 + alpha) / (1 - alpha) / n)
    assert np.all(np.abs(vels.mean(axis=0) - mean_v) < 3.0 * se)


def test_gm_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        gm_step(make_state(), 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        gm_step(make_state(), -1.0, np.random.default_rng(0))


def test_state_validation():
    with pytest.raises(ValueError):
        make_state(memory_alpha=1.5)
    with pytest.raises(ValueError):
        make_state(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        Position3(1.0, math.nan, 0.0)


def test_reflection_keeps_position_inside_bounds():
    bounds = Bounds3(lo=(0.0, 0.0, 0.0), hi=(10.0, 10.0, 10.0))
    state = make_state(
        position=np.array([9.5, 5.0, 5.0]),
        velocity=np.array([4.0, 0.0, 0.0]),
        memory_alpha=1.0,
        noise_sigma=0.0,
        bounds=bounds,
    )
    rng = np.random.default_rng(0)
    for _ in range(50):
        state = gm_step(state, 1.0, rng)
        assert np.all(state.position >= 0.0) and np.all(state.position <= 10.0)


def test_euclidean_distance_examples():
    assert euclidean_distance(Position3(0, 0, 0), Position3(3, 4, 0)) == 5.0
    assert euclidean_distance(Position3(1, 2, 3), Position3(1, 2, 3)) == 0.0
    assert euclidean_distance(Position3(0, 0, 0), Position3(2, 3, 6)) == 7.0
    # symmetry
    a, b = Position3(1.5, -2.0, 9.0), Position3(0.0, 4.0, 1.0)
    assert euclidean_distance(a, b) == euclidean_distance(b, a)


def test_triangle_inequality():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c = rng.uniform(-100, 100, size=(3, 3))
        assert euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9


def test_trajectories_deterministic():
    states = [make_state(), make_state(position=np.array([10.0, 20.0, 30.0]))]
    t1, p1 = simulate_trajectories(states, 10.0, 0.1, np.random.default_rng(99))
    states2 = [make_state(), make_state(position=np.array([10.0, 20.0, 30.0]))]
    t2, p2 = simulate_trajectories(states2, 10.0, 0.1, np.random.default_rng(99))
    assert np.array_equal(p1, p2) and np.array_equal(t1, t2)


def test_velocity_lag1_autocorrelation_tracks_alpha():
    rng = np.random.default_rng(11)
    alpha = 0.7
    state = make_state(
        memory_alpha=alpha,
        noise_sigma=1.0,
        bounds=Bounds3(lo=(-1e9, -1e9, -1e9), hi=(1e9, 1e9, 1e9)),
    )
    n = 20_000
    vels = np.empty((n, 3))
    for k in range(n):
        state = gm_step(state, 0.1, rng)
        vels[k] = state.velocity
    for axis in range(3):
        v = vels[:, axis] - vels[:, axis].mean()
        rho = float(np.dot(v[:-1], v[1:]) / np.dot(v, v))
        assert abs(rho - alpha) < 0.05


def test_link_distance_series():
    times = np.array([0.0, 1.0])
    positions = np.zeros((2, 2, 3))
    positions[:, 1, 0] = [3.0, 4.0]
    t, d = link_distance_series(times, positions, 1, 0)
    assert np.allclose(d, [3.0, 4.0])
