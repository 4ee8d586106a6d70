"""Channel model and downlink resource allocation.

Channel gain = log-distance path loss times a Rician small-scale fading
power. Rates follow the Shannon capacity of the per-device FDMA slice, and
bandwidth/power budgets are enforced by construction via proportional shares
of discrete levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simcore import DeviceState

__all__ = [
    "ChannelParams",
    "MobilityModel",
    "step_mobility",
    "channel_gain",
    "rician_fading_power",
    "shannon_rate",
    "transmission_delay",
    "allocate_budgets",
]

# -174 dBm/Hz thermal noise floor in W/Hz
DBM_PER_HZ_DEFAULT = -174.0


def dbm_per_hz_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    noise_psd: float = dbm_per_hz_to_watts(DBM_PER_HZ_DEFAULT)  # W/Hz
    bandwidth_budget: float = 20e9   # Hz, server-wide downlink budget
    power_budget: float = 15.0       # W
    pathloss_exponent: float = 3.5
    reference_distance: float = 1.0  # m
    reference_loss_db: float = 40.0
    rician_k: float = 3.0

    def __post_init__(self):
        if self.noise_psd <= 0:
            raise ValueError("noise PSD must be positive")
        if self.bandwidth_budget <= 0 or self.power_budget <= 0:
            raise ValueError("budgets must be positive")
        if not 2.0 <= self.pathloss_exponent <= 6.0:
            raise ValueError("pathloss exponent must lie in [2, 6]")
        if self.rician_k < 0:
            raise ValueError("rician K must be non-negative")


@dataclass(frozen=True)
class MobilityModel:
    """Random-waypoint motion inside a disc centred on the server."""

    area_radius: float = 150.0
    speed_range: tuple[float, float] = (1.0, 10.0)
    waypoint_pause: int = 2


def _random_point_in_disc(radius: float, rng: np.random.Generator) -> np.ndarray:
    r = radius * math.sqrt(rng.uniform())
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([r * math.cos(theta), r * math.sin(theta)])


def step_mobility(state: DeviceState, model: MobilityModel,
                  rng: np.random.Generator) -> np.ndarray:
    """Advance one round of random-waypoint motion and return the new
    position. Waypoint bookkeeping is kept on the device state; displacement
    per round never exceeds the sampled leg speed."""
    if state.pause_left > 0:
        state.pause_left -= 1
        return state.position
    if state.waypoint is None:
        state.waypoint = _random_point_in_disc(model.area_radius, rng)
        state.leg_speed = rng.uniform(model.speed_range[0], model.speed_range[1])
    delta = state.waypoint - state.position
    dist = float(np.linalg.norm(delta))
    if dist <= state.leg_speed:
        new_pos = state.waypoint
        state.waypoint = None
        state.pause_left = model.waypoint_pause
    else:
        new_pos = state.position + delta * (state.leg_speed / dist)
    state.position = new_pos
    return new_pos


def rician_fading_power(k: float, rng: np.random.Generator) -> float:
    """Squared magnitude of a unit-mean-power Rician fading coefficient.

    K -> inf degenerates to the deterministic line-of-sight value 1.
    """
    if math.isinf(k):
        return 1.0
    los = math.sqrt(k / (k + 1.0))
    sigma = math.sqrt(1.0 / (2.0 * (k + 1.0)))
    re = los + sigma * rng.standard_normal()
    im = sigma * rng.standard_normal()
    return re * re + im * im


def channel_gain(distance: float, params: ChannelParams,
                 rng: np.random.Generator) -> float:
    """Linear channel gain: path loss at ``distance`` times Rician fading."""
    d = max(distance, params.reference_distance)
    loss_db = params.reference_loss_db + 10.0 * params.pathloss_exponent * math.log10(
        d / params.reference_distance)
    return 10.0 ** (-loss_db / 10.0) * rician_fading_power(params.rician_k, rng)


def shannon_rate(bandwidth: float, power: float, gain: float,
                 noise_psd: float) -> float:
    """Achievable downlink rate in bit/s of one FDMA slice."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if power < 0 or gain < 0:
        raise ValueError("power and gain must be non-negative")
    snr = gain * power / (bandwidth * noise_psd)
    return bandwidth * math.log2(1.0 + snr)


def transmission_delay(selected: bool, changed: bool, emulator_bytes: float,
                       rate: float) -> float:
    """Seconds to push a changed emulator downlink; zero unless the device is
    selected and its emulator actually changed."""
    if not (selected and changed):
        return 0.0
    if rate <= 0:
        raise ValueError("cannot transmit a changed emulator at zero rate")
    return 8.0 * emulator_bytes / rate


def allocate_budgets(levels_bw, levels_pw, selection, params: ChannelParams):
    """Turn discrete per-device levels into absolute Hz/W allocations.

    Selected devices get budget * level / sum(levels over selected); the last
    selected share is defined as the remainder so the sequential sum equals
    the budget exactly. Unselected devices get zero.
    """
    selection = sorted(selection)
    if not selection:
        raise ValueError("cannot allocate budgets over an empty selection")
    levels_bw = np.asarray(levels_bw, dtype=float)
    levels_pw = np.asarray(levels_pw, dtype=float)
    n = len(levels_bw)
    if any(i < 0 or i >= n for i in selection):
        raise ValueError("selection index out of range")

    def split(levels, budget):
        sel_levels = levels[selection]
        if np.any(sel_levels <= 0):
            raise ValueError("levels must be positive for selected devices")
        total = float(sel_levels.sum())
        out = np.zeros(n)
        acc = 0.0
        for j, dev in enumerate(selection):
            if j == len(selection) - 1:
                out[dev] = budget - acc
            else:
                out[dev] = budget * levels[dev] / total
                acc += out[dev]
        return out

    return split(levels_bw, params.bandwidth_budget), split(levels_pw, params.power_budget)
