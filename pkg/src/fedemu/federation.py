"""Round structure of the collaborative tuning loop.

One round: the orchestrator's decoded action picks devices, compressed-model
retentions and downlink resource levels; changed emulators are shipped,
selected devices (plus the server, which always trains on its own data) tune
their adapters locally, and the server aggregates adapters weighted by data
size. Three federation modes cover per-device compression, a pinned full
frozen backbone, and full-model federated tuning.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .simcore import (
    AdapterSpec,
    DeviceProfile,
    DeviceState,
    EmulatorSpec,
    ModelSpec,
    PerplexitySurrogate,
    compute_delay,
    emulator_from_retention,
    final_perplexity,
    memory_footprint,
    perplexity_step,
)
from .wireless import (
    ChannelParams,
    MobilityModel,
    allocate_budgets,
    channel_gain,
    shannon_rate,
    step_mobility,
    transmission_delay,
)

__all__ = [
    "FederationMode",
    "ActionBundle",
    "Device",
    "World",
    "RoundOutcome",
    "disseminate",
    "local_tuning",
    "aggregate_adapters",
    "run_round",
]


class FederationMode(str, enum.Enum):
    FEDPEAT = "fedpeat"   # controller picks per-device retention
    FEDPEFT = "fedpeft"   # full frozen backbone, adapters only
    FEDFT = "fedft"       # full model shipped and trained every round


@dataclass(frozen=True)
class ActionBundle:
    """Decoded joint action for one round.

    ``selection`` holds K distinct device indices; the level/retention tuples
    are aligned with the selection order.
    """

    selection: tuple[int, ...]
    bandwidth_levels: tuple[int, ...]
    power_levels: tuple[int, ...]
    retentions: tuple[float, ...]

    def __post_init__(self):
        k = len(self.selection)
        if len(set(self.selection)) != k:
            raise ValueError("selection indices must be distinct")
        if not (len(self.bandwidth_levels) == len(self.power_levels)
                == len(self.retentions) == k):
            raise ValueError("per-selected fields must match selection length")


@dataclass
class Device:
    profile: DeviceProfile
    state: DeviceState
    adapter: np.ndarray
    optimum: np.ndarray  # synthetic local optimum the adapter drifts toward


@dataclass
class World:
    """Everything one simulated deployment owns. Deterministic per rng."""

    model: ModelSpec
    adapter_spec: AdapterSpec
    surrogate: PerplexitySurrogate
    channel: ChannelParams
    mobility: MobilityModel
    server: Device
    devices: list[Device]
    global_adapter: np.ndarray
    gains: np.ndarray
    rng: np.random.Generator
    epochs: int = 2
    adapter_pull: float = 0.1
    adapter_noise: float = 0.01
    _emulator_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def emulator(self, retention: float) -> EmulatorSpec:
        spec = self._emulator_cache.get(retention)
        if spec is None:
            spec = emulator_from_retention(self.model, self.adapter_spec, retention)
            self._emulator_cache[retention] = spec
        return spec

    def full_model_emulator(self) -> EmulatorSpec:
        """Pseudo-emulator used in full-model mode: backbone plus adapter
        together span the entire model."""
        spec = self._emulator_cache.get("full")
        if spec is None:
            spec = EmulatorSpec(
                retention=1.0,
                layer_count=self.model.layer_count,
                params=self.model.total_params - self.adapter_spec.params,
                bytes=self.model.total_bytes - self.adapter_spec.bytes,
            )
            self._emulator_cache["full"] = spec
        return spec

    def advance_channel(self):
        """Move devices one mobility step and resample fading."""
        for i, dev in enumerate(self.devices):
            pos = step_mobility(dev.state, self.mobility, self.rng)
            dist = float(np.hypot(pos[0], pos[1]))
            self.gains[i] = channel_gain(dist, self.channel, self.rng)


@dataclass
class DisseminationResult:
    changed: bool
    emulator: EmulatorSpec
    payload_bytes: float  # downlink cost if changed


@dataclass
class RoundOutcome:
    round_index: int
    mode: FederationMode
    selection: tuple[int, ...]
    q: np.ndarray                 # per-device round time, 0 for unselected
    server_q: float
    perplexities: np.ndarray      # post-tuning, stale for unselected
    server_perplexity: float
    exchanges_this_round: np.ndarray
    payload_bytes: np.ndarray
    footprints: np.ndarray        # assigned memory per selected device
    aggregated_adapter: np.ndarray
    rates: np.ndarray

    @property
    def max_q(self) -> float:
        sel = list(self.selection)
        worst = self.server_q
        if sel:
            worst = max(worst, float(self.q[sel].max()))
        return worst

    def to_json_row(self) -> str:
        return json.dumps({
            "round": self.round_index,
            "mode": self.mode.value,
            "selection": list(self.selection),
            "q": [round(float(x), 9) for x in self.q],
            "server_q": round(self.server_q, 9),
            "perplexities": [round(float(x), 6) for x in self.perplexities],
            "server_perplexity": round(self.server_perplexity, 6),
            "exchanges": [int(x) for x in self.exchanges_this_round],
            "payload_bytes": [float(x) for x in self.payload_bytes],
        })


def disseminate(world: World, retentions: dict[int, float],
                mode: FederationMode) -> dict[int, DisseminationResult]:
    """Assign emulators for the round and flag which devices need a downlink
    transfer. Exchange counts and assigned memory are updated here."""
    out: dict[int, DisseminationResult] = {}
    for idx, retention in retentions.items():
        dev = world.devices[idx]
        if mode is FederationMode.FEDFT:
            emulator = world.full_model_emulator()
            changed = True
            payload = float(world.model.total_bytes)
        else:
            emulator = world.emulator(retention)
            changed = dev.state.current_retention != retention
            payload = float(emulator.bytes)
        if changed:
            dev.state.exchange_count += 1
            dev.state.current_retention = retention
            dev.state.memory_used = memory_footprint(emulator, world.adapter_spec)
        out[idx] = DisseminationResult(changed, emulator, payload)
    return out


def local_tuning(device: Device, emulator: EmulatorSpec, adapter: np.ndarray,
                 epochs: int, rng: np.random.Generator, *,
                 surrogate: PerplexitySurrogate, retention: float,
                 pull: float = 0.1, noise: float = 0.01):
    """Synthetic local tuning: the adapter drifts toward the device's local
    optimum with seeded noise, and perplexity decays toward the surrogate's
    final value for the assigned retention."""
    adapter = np.asarray(adapter, dtype=float).copy()
    for _ in range(epochs):
        adapter += pull * (device.optimum - adapter)
        if noise > 0:
            adapter += noise * rng.standard_normal(adapter.shape)
    if epochs > 0:
        target = final_perplexity(surrogate, retention)
        new_p = perplexity_step(device.state, True, target,
                                surrogate.convergence_rate)
    else:
        new_p = device.state.perplexity
    return adapter, new_p


def aggregate_adapters(adapters, data_sizes) -> np.ndarray:
    """Data-size weighted mean of participant adapters."""
    if len(adapters) == 0 or len(adapters) != len(data_sizes):
        raise ValueError("adapters and data sizes must be non-empty and aligned")
    dim = len(adapters[0])
    if any(len(a) != dim for a in adapters):
        raise ValueError("adapter dimension mismatch")
    total = float(sum(data_sizes))
    if total <= 0:
        raise ValueError("total data size must be positive")
    acc = np.zeros(dim)
    for a, w in zip(adapters, data_sizes):
        acc += float(w) * np.asarray(a, dtype=float)
    return acc / total


def run_round(world: World, actions: ActionBundle, mode: FederationMode,
              round_index: int = 0) -> RoundOutcome:
    """Execute one round: dissemination, downlink transfers, local tuning on
    the selected devices plus the server, then adapter aggregation."""
    n = world.n_devices
    selection = actions.selection

    if mode is FederationMode.FEDPEAT:
        retentions = dict(zip(selection, actions.retentions))
    else:
        retentions = {i: 1.0 for i in selection}

    results = disseminate(world, retentions, mode)

    if selection:
        levels_bw = np.zeros(n)
        levels_pw = np.zeros(n)
        for i, dev_idx in enumerate(selection):
            levels_bw[dev_idx] = actions.bandwidth_levels[i]
            levels_pw[dev_idx] = actions.power_levels[i]
        bw_hz, pw_w = allocate_budgets(levels_bw, levels_pw, selection,
                                       world.channel)
    else:
        bw_hz = pw_w = np.zeros(n)

    q = np.zeros(n)
    rates = np.zeros(n)
    payloads = np.zeros(n)
    footprints = np.zeros(n)
    exchanges = np.zeros(n, dtype=int)
    tuned = []

    for dev_idx in selection:
        dev = world.devices[dev_idx]
        res = results[dev_idx]
        rates[dev_idx] = shannon_rate(bw_hz[dev_idx], pw_w[dev_idx],
                                      world.gains[dev_idx], world.channel.noise_psd)
        d_trans = transmission_delay(True, res.changed, res.payload_bytes,
                                     rates[dev_idx])
        d_comp = compute_delay(dev.profile, res.emulator, world.adapter_spec,
                               world.epochs)
        adapter, new_p = local_tuning(
            dev, res.emulator, world.global_adapter, world.epochs, world.rng,
            surrogate=world.surrogate, retention=retentions[dev_idx],
            pull=world.adapter_pull, noise=world.adapter_noise)
        dev.adapter = adapter
        dev.state.perplexity = new_p
        q[dev_idx] = d_comp + d_trans
        payloads[dev_idx] = res.payload_bytes if res.changed else 0.0
        footprints[dev_idx] = dev.state.memory_used
        exchanges[dev_idx] = int(res.changed)
        tuned.append((adapter, dev.profile.data_size))

    # Server trains every round on its own shard; no downlink to itself.
    server_emulator = (world.full_model_emulator() if mode is FederationMode.FEDFT
                       else world.emulator(1.0))
    server_q = compute_delay(world.server.profile, server_emulator,
                             world.adapter_spec, world.epochs)
    server_adapter, server_p = local_tuning(
        world.server, server_emulator, world.global_adapter, world.epochs,
        world.rng, surrogate=world.surrogate, retention=1.0,
        pull=world.adapter_pull, noise=world.adapter_noise)
    world.server.adapter = server_adapter
    world.server.state.perplexity = server_p
    tuned.append((server_adapter, world.server.profile.data_size))

    world.global_adapter = aggregate_adapters(
        [a for a, _ in tuned], [w for _, w in tuned])

    return RoundOutcome(
        round_index=round_index,
        mode=mode,
        selection=selection,
        q=q,
        server_q=server_q,
        perplexities=np.array([d.state.perplexity for d in world.devices]),
        server_perplexity=server_p,
        exchanges_this_round=exchanges,
        payload_bytes=payloads,
        footprints=footprints,
        aggregated_adapter=world.global_adapter,
        rates=rates,
    )
