"""Reinforcement-learning environment around the federation world.

Observations hold per-device channel gain, remaining memory headroom and
exchange-count features plus the episode clock. Actions arrive as four
branch index groups (device selection, bandwidth levels, power levels,
retention grid indices) and rewards follow the weighted delay / perplexity /
exchange objective with large per-violation penalties for the memory and
exchange-cap constraints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .federation import ActionBundle, Device, FederationMode, World, run_round
from .simcore import (
    AdapterSpec,
    DeviceProfile,
    DeviceState,
    ModelSpec,
    PerplexitySurrogate,
)
from .wireless import (
    ChannelParams,
    MobilityModel,
    channel_gain,
    dbm_per_hz_to_watts,
)

__all__ = ["EnvParams", "RewardBreakdown", "ActionDecodeError", "AdaptiveFedEnv"]


class ActionDecodeError(ValueError):
    """Raised when raw branch outputs cannot form a valid joint action."""


@dataclass(frozen=True)
class EnvParams:
    """Everything one environment instance needs; defaults are the desk-scale
    experiment configuration."""

    # population and episode length
    n_devices: int = 10
    select_k: int = 5
    rounds: int = 100

    # foundation model structure
    total_params: int = 1_208_000_000
    total_bytes: int = 2_630_000_000
    layer_count: int = 24
    adapter_top_layers: int = 2
    adapter_bottom_layers: int = 2
    adapter_dim: int = 64

    # perplexity surrogate
    quad_a: float = 25.2
    quad_b: float = -43.1
    quad_c: float = 31.9
    lora_delta: float = -0.78
    p_init: float = 31.9
    convergence_rate: float = 0.08

    # device population
    compute_speed_range: tuple[float, float] = (3e11, 1.5e12)
    server_speed_factor: float = 10.0
    memory_capacity_range: tuple[float, float] = (2e9, 8e9)
    data_size_range: tuple[int, int] = (150, 350)
    server_data_fraction: float = 0.3
    local_epochs: int = 2
    adapter_pull: float = 0.1
    adapter_noise: float = 0.01

    # channel and mobility
    noise_dbm_per_hz: float = -174.0
    bandwidth_budget_range: tuple[float, float] = (7e9, 20e9)
    power_budget: float = 15.0
    pathloss_exponent: float = 3.5
    reference_distance: float = 1.0
    reference_loss_db: float = 40.0
    rician_k: float = 3.0
    area_radius: float = 55.0
    speed_range: tuple[float, float] = (1.0, 10.0)
    waypoint_pause: int = 2

    # action space
    retention_grid: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    levels: int = 4

    # reward shaping
    xi_p: float = 5.0
    xi_f: float = -10.0
    xi_s: float = 25.0
    kappa: float = -50.0
    mem_fraction_q: float = 2.0
    exchange_fraction_c: float = 5.0
    delay_floor: float = 1e-6

    mode: str = "fedpeat"

    @property
    def observation_dim(self) -> int:
        return 3 * self.n_devices + 1

    @property
    def exchange_cap(self) -> float:
        return self.rounds / self.exchange_fraction_c


@dataclass(frozen=True)
class RewardBreakdown:
    r_d: float
    r_p: float
    r_s: float
    penalty: float

    @property
    def total(self) -> float:
        return self.r_d + self.r_p + self.r_s + self.penalty


class AdaptiveFedEnv:
    """Single-threaded, deterministic-per-seed environment over T rounds."""

    def __init__(self, params: EnvParams | None = None):
        self.params = params or EnvParams()
        p = self.params
        self.mode = FederationMode(p.mode)
        self.model = ModelSpec(
            total_params=p.total_params,
            total_bytes=p.total_bytes,
            layer_count=p.layer_count,
            adapter_top_layers=p.adapter_top_layers,
            adapter_bottom_layers=p.adapter_bottom_layers,
        )
        self.surrogate = PerplexitySurrogate(
            a=p.quad_a, b=p.quad_b, c=p.quad_c, lora_delta=p.lora_delta,
            p_init=p.p_init, convergence_rate=p.convergence_rate)
        self.mobility = MobilityModel(
            area_radius=p.area_radius, speed_range=tuple(p.speed_range),
            waypoint_pause=p.waypoint_pause)
        self.world: World | None = None
        self.round_index = 0
        self.last_outcome = None
        self.trace_sink = None  # optional file-like, one JSON line per step

    # -- lifecycle -----------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        p = self.params
        rng = np.random.default_rng(seed)
        adapter_spec = AdapterSpec.for_model(
            self.model, weight_dim=p.adapter_dim,
            weights=rng.standard_normal(p.adapter_dim))

        devices = []
        total_data = 0
        for i in range(p.n_devices):
            profile = DeviceProfile(
                id=i,
                memory_capacity=rng.uniform(*p.memory_capacity_range),
                compute_speed=rng.uniform(*p.compute_speed_range),
                data_size=int(rng.integers(p.data_size_range[0],
                                           p.data_size_range[1] + 1)),
                is_server=False,
            )
            total_data += profile.data_size
            r = p.area_radius * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            state = DeviceState(
                position=np.array([r * math.cos(theta), r * math.sin(theta)]),
                perplexity=p.p_init)
            devices.append(Device(
                profile=profile, state=state,
                adapter=adapter_spec.weights.copy(),
                optimum=rng.standard_normal(p.adapter_dim)))

        # server holds server_data_fraction of all data and always trains
        frac = p.server_data_fraction
        server_profile = DeviceProfile(
            id=p.n_devices,
            memory_capacity=16 * p.memory_capacity_range[1],
            compute_speed=p.server_speed_factor * p.compute_speed_range[1],
            data_size=max(1, round(frac / (1.0 - frac) * total_data)),
            is_server=True,
        )
        server_state = DeviceState(position=np.zeros(2), perplexity=p.p_init,
                                   current_retention=1.0)
        server = Device(profile=server_profile, state=server_state,
                        adapter=adapter_spec.weights.copy(),
                        optimum=rng.standard_normal(p.adapter_dim))

        channel = ChannelParams(
            noise_psd=dbm_per_hz_to_watts(p.noise_dbm_per_hz),
            bandwidth_budget=rng.uniform(*p.bandwidth_budget_range),
            power_budget=p.power_budget,
            pathloss_exponent=p.pathloss_exponent,
            reference_distance=p.reference_distance,
            reference_loss_db=p.reference_loss_db,
            rician_k=p.rician_k,
        )

        gains = np.zeros(p.n_devices)
        world = World(
            model=self.model,
            adapter_spec=adapter_spec,
            surrogate=self.surrogate,
            channel=channel,
            mobility=self.mobility,
            server=server,
            devices=devices,
            global_adapter=adapter_spec.weights.copy(),
            gains=gains,
            rng=rng,
            epochs=p.local_epochs,
            adapter_pull=p.adapter_pull,
            adapter_noise=p.adapter_noise,
        )
        for i, dev in enumerate(devices):
            dist = float(np.hypot(*dev.state.position))
            gains[i] = channel_gain(dist, channel, rng)

        self.world = world
        self.round_index = 0
        self.last_outcome = None
        return self._observation()

    def step(self, action: ActionBundle):
        if self.world is None:
            raise RuntimeError("reset() must be called before step()")
        self._validate(action)
        p = self.params
        outcome = run_round(self.world, action, self.mode, self.round_index)
        self.last_outcome = outcome

        max_q = max(outcome.max_q, p.delay_floor)
        r_d = -p.xi_f * math.log(max_q) / p.rounds
        r_p = -p.xi_p * float(outcome.perplexities.mean()) / p.rounds
        r_s = -p.xi_s * float(outcome.exchanges_this_round.mean()) / p.rounds

        penalty = 0.0
        for dev_idx in action.selection:
            cap = self.world.devices[dev_idx].profile.memory_capacity
            if outcome.footprints[dev_idx] > cap / p.mem_fraction_q:
                penalty += p.kappa
        cap_exchanges = p.exchange_cap
        for dev in self.world.devices:
            if dev.state.exchange_count > cap_exchanges:
                penalty += p.kappa

        reward = RewardBreakdown(r_d=r_d, r_p=r_p, r_s=r_s, penalty=penalty)

        self.world.advance_channel()
        self.round_index += 1
        done = self.round_index >= p.rounds
        obs = self._observation()

        if self.trace_sink is not None:
            self.trace_sink.write(json.dumps({
                "round": outcome.round_index,
                "action": {
                    "selection": list(action.selection),
                    "bandwidth_levels": list(action.bandwidth_levels),
                    "power_levels": list(action.power_levels),
                    "retentions": list(action.retentions),
                },
                "reward": {"r_d": r_d, "r_p": r_p, "r_s": r_s,
                           "penalty": penalty, "total": reward.total},
                "max_q": outcome.max_q,
                "observation": [float(x) for x in obs],
            }) + "\n")

        return obs, reward, done

    # -- action decoding ----------------------------------------------

    def decode_branch_actions(self, selection_indices, bandwidth_indices,
                              power_indices, retention_indices) -> ActionBundle:
        """Map raw branch index groups onto a feasible joint action."""
        p = self.params
        sel = [int(i) for i in selection_indices]
        if len(sel) != p.select_k:
            raise ActionDecodeError(
                f"selection must pick {p.select_k} devices, got {len(sel)}")
        if len(set(sel)) != len(sel):
            raise ActionDecodeError("selection indices must be distinct")
        if any(i < 0 or i >= p.n_devices for i in sel):
            raise ActionDecodeError("selection index out of range")

        def levels(indices, what):
            idx = [int(i) for i in indices]
            if len(idx) != p.select_k:
                raise ActionDecodeError(f"{what} must supply one level per slot")
            if any(i < 0 or i >= p.levels for i in idx):
                raise ActionDecodeError(f"{what} index out of range")
            return tuple(i + 1 for i in idx)

        ret_idx = [int(i) for i in retention_indices]
        if len(ret_idx) != p.select_k:
            raise ActionDecodeError("retention must supply one index per slot")
        if any(i < 0 or i >= len(p.retention_grid) for i in ret_idx):
            raise ActionDecodeError("retention index out of range")

        return ActionBundle(
            selection=tuple(sel),
            bandwidth_levels=levels(bandwidth_indices, "bandwidth"),
            power_levels=levels(power_indices, "power"),
            retentions=tuple(p.retention_grid[i] for i in ret_idx),
        )

    # -- helpers -------------------------------------------------------

    def _validate(self, action: ActionBundle):
        p = self.params
        if len(action.selection) != p.select_k:
            raise ActionDecodeError("wrong selection size")
        if any(i < 0 or i >= p.n_devices for i in action.selection):
            raise ActionDecodeError("selection index out of range")
        for lv in (action.bandwidth_levels, action.power_levels):
            if any(not 1 <= v <= p.levels for v in lv):
                raise ActionDecodeError("level out of range")
        grid = set(p.retention_grid)
        if self.mode is FederationMode.FEDPEAT and any(
                r not in grid for r in action.retentions):
            raise ActionDecodeError("retention not on the configured grid")

    def _observation(self) -> np.ndarray:
        p = self.params
        world = self.world
        obs = np.empty(p.observation_dim)
        n = p.n_devices
        mem_norm = p.memory_capacity_range[1]
        for i, dev in enumerate(world.devices):
            gain_db = 10.0 * math.log10(max(world.gains[i], 1e-30))
            obs[i] = gain_db / 100.0
            # available capacity; a new emulator replaces the old one, so the
            # memory constraint depends on capacity, not current holdings
            obs[n + i] = dev.profile.memory_capacity / mem_norm
            obs[2 * n + i] = dev.state.exchange_count / p.rounds
        obs[3 * n] = self.round_index / p.rounds
        return obs
