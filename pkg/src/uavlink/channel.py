"""Log-distance path loss with Rician small-scale fading, plus the PHY
observables derived from it: received power, SINR, corruption odds, LQI.

The fading gain multiplies received power linearly and is normalized to
unit mean, so path loss alone fixes the average link budget. rician_k = 0
degenerates to Rayleigh; rician_k = None (or inf) disables fading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class SignalSample:
    """Receiver-side observation of one transmission attempt."""

    rssi_dbm: float
    sinr_linear: float
    lqi: int
    corrupted: bool

    def __post_init__(self):
        if not 0 <= self.lqi <= 255:
            raise ValueError("lqi must lie in [0, 255]")
        if self.sinr_linear < 0.0:
            raise ValueError("sinr_linear must be >= 0")

    @property
    def sinr_db(self) -> float:
        return 10.0 * math.log10(self.sinr_linear) if self.sinr_linear > 0 else -300.0


@dataclass(frozen=True)
class ChannelParams:
    tx_power_dbm: float = 20.0
    pl_exponent: float = 2.7
    pl_ref_db: float = 40.0          # loss at 1 m
    rician_k: float | None = 1.0     # None disables fading
    noise_floor_dbm: float = -101.0
    per_midpoint_db: float = 7.0     # SINR giving 50% corruption
    per_slope: float = 0.8           # logistic steepness, 1/dB
    lqi_min_db: float = 0.0
    lqi_max_db: float = 30.0

    def __post_init__(self):
        if self.pl_exponent <= 0.0:
            raise ValueError("pl_exponent must be > 0")
        if self.per_slope <= 0.0:
            raise ValueError("per_slope must be > 0")
        if self.rician_k is not None and self.rician_k < 0.0:
            raise ValueError("rician_k must be >= 0")
        if self.lqi_min_db >= self.lqi_max_db:
            raise ValueError("lqi_min_db must be < lqi_max_db")


def rician_power_gain(k: float | None, rng: np.random.Generator) -> float:
    """Draw a unit-mean linear power gain; k None/inf means no fading."""
    if k is None or math.isinf(k):
        return 1.0
    los = math.sqrt(k / (k + 1.0))
    sigma = math.sqrt(1.0 / (2.0 * (k + 1.0)))
    re = los + sigma * rng.standard_normal()
    im = sigma * rng.standard_normal()
    return re * re + im * im


def path_gain_db(d: float, params: ChannelParams, rng: np.random.Generator) -> float:
    """Total propagation loss in dB for one transmission at distance d."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    loss = params.pl_ref_db + 10.0 * params.pl_exponent * math.log10(d)
    gain = rician_power_gain(params.rician_k, rng)
    if gain > 0.0:
        loss -= 10.0 * math.log10(gain)
    else:
        loss = math.inf
    return loss


def received_power_dbm(
    d: float, params: ChannelParams, rng: np.random.Generator, extra_loss_db: float = 0.0
) -> float:
    """RSSI of one transmission after path loss, fading and extra attenuation."""
    return params.tx_power_dbm - path_gain_db(d, params, rng) - extra_loss_db


def mean_received_power_dbm(d: float, params: ChannelParams) -> float:
    """Fading-free received power; used for interference bookkeeping."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    return params.tx_power_dbm - params.pl_ref_db - 10.0 * params.pl_exponent * math.log10(d)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(mw)


def sinr(p_signal_mw: float, p_interference_plus_noise_mw: float) -> float:
    """Linear signal-to-interference-plus-noise ratio."""
    if p_interference_plus_noise_mw <= 0.0:
        raise ValueError("interference-plus-noise power must be positive")
    if p_signal_mw < 0.0:
        raise ValueError("signal power must be >= 0")
    return p_signal_mw / p_interference_plus_noise_mw


def corruption_prob(sinr_db: float, params: ChannelParams) -> float:
    """Packet corruption probability, logistic and decreasing in SINR."""
    x = params.per_slope * (sinr_db - params.per_midpoint_db)
    if x > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def lqi_from_sinr(sinr_db: float, lqi_min_db: float = 0.0, lqi_max_db: float = 30.0) -> int:
    """Clamp SINR linearly onto the 0..255 quality scale (round half-up)."""
    if lqi_min_db >= lqi_max_db:
        raise ValueError("lqi_min_db must be < lqi_max_db")
    frac = (sinr_db - lqi_min_db) / (lqi_max_db - lqi_min_db)
    frac = min(1.0, max(0.0, frac))
    return int(math.floor(255.0 * frac + 0.5))


def measure_signal(
    d: float,
    params: ChannelParams,
    rng: np.random.Generator,
    interference_plus_noise_mw: float,
    extra_loss_db: float = 0.0,
) -> SignalSample:
    """Realize one attempt: fading draw, SINR, LQI and the corruption coin."""
    rssi = received_power_dbm(d, params, rng, extra_loss_db)
    sinr_linear = sinr(dbm_to_mw(rssi), interference_plus_noise_mw)
    sinr_db = 10.0 * math.log10(sinr_linear) if sinr_linear > 0 else -300.0
    corrupted = rng.random() < corruption_prob(sinr_db, params)
    return SignalSample(
        rssi_dbm=rssi,
        sinr_linear=sinr_linear,
        lqi=lqi_from_sinr(sinr_db, params.lqi_min_db, params.lqi_max_db),
        corrupted=corrupted,
    )
