"""Domain types and analytic surrogates for model sizes, memory and compute.

Everything here is a pure function over value types. The foundation model is
never instantiated; only its size/layer structure is tracked, and fine-tuning
quality is carried by a quadratic perplexity surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelSpec",
    "AdapterSpec",
    "EmulatorSpec",
    "PerplexitySurrogate",
    "DeviceProfile",
    "DeviceState",
    "emulator_from_retention",
    "final_perplexity",
    "perplexity_step",
    "compute_delay",
    "memory_footprint",
]


@dataclass(frozen=True)
class ModelSpec:
    """Size/structure of the foundation model being orchestrated."""

    total_params: int
    total_bytes: int
    layer_count: int
    adapter_top_layers: int
    adapter_bottom_layers: int

    def __post_init__(self):
        if self.total_params <= 0 or self.total_bytes <= 0:
            raise ValueError("model params and bytes must be positive")
        if self.adapter_top_layers + self.adapter_bottom_layers >= self.layer_count:
            raise ValueError("adapter layers must leave at least one backbone layer")

    @property
    def adapter_layer_count(self) -> int:
        return self.adapter_top_layers + self.adapter_bottom_layers

    @property
    def droppable_layers(self) -> int:
        """Backbone layers available to the compressed stand-in."""
        return self.layer_count - self.adapter_layer_count


@dataclass(frozen=True)
class AdapterSpec:
    """The small trainable block; the only weights exchanged and aggregated.

    ``weights`` is a synthetic parameter vector used solely to make the
    aggregation rule operate on real numbers.
    """

    layer_count: int
    params: int
    bytes: int
    weights: np.ndarray = field(repr=False)

    @staticmethod
    def for_model(model: ModelSpec, weight_dim: int = 64,
                  weights: np.ndarray | None = None) -> "AdapterSpec":
        layers = model.adapter_layer_count
        frac = layers / model.layer_count
        if weights is None:
            weights = np.zeros(weight_dim)
        return AdapterSpec(
            layer_count=layers,
            params=round(frac * model.total_params),
            bytes=round(frac * model.total_bytes),
            weights=np.asarray(weights, dtype=float),
        )


@dataclass(frozen=True)
class EmulatorSpec:
    """Frozen compressed stand-in for the backbone, parameterized by the
    fraction of droppable layers kept."""

    retention: float
    layer_count: int
    params: int
    bytes: int


@dataclass(frozen=True)
class PerplexitySurrogate:
    """Quadratic map from layer retention to final achievable perplexity.

    final value = a*r^2 + b*r + c + lora_delta. ``p_init`` is where device
    perplexities start; ``convergence_rate`` is the per-participation decay
    toward the final value.
    """

    a: float = 25.2
    b: float = -43.1
    c: float = 31.9
    lora_delta: float = -0.78
    p_init: float = 31.9
    convergence_rate: float = 0.08


@dataclass(frozen=True)
class DeviceProfile:
    """Static per-device capabilities."""

    id: int
    memory_capacity: float  # bytes
    compute_speed: float    # params processed per second
    data_size: int          # training samples held locally
    is_server: bool = False

    def __post_init__(self):
        if min(self.memory_capacity, self.compute_speed, self.data_size) <= 0:
            raise ValueError("capacity, speed and data size must be positive")


@dataclass
class DeviceState:
    """Evolving per-round state of one device.

    ``waypoint``/``pause_left``/``leg_speed`` are random-waypoint mobility
    bookkeeping; ``current_retention`` is None before the first assignment.
    """

    position: np.ndarray
    current_retention: float | None = None
    perplexity: float = 31.9
    exchange_count: int = 0
    memory_used: float = 0.0
    waypoint: np.ndarray | None = None
    pause_left: int = 0
    leg_speed: float = 0.0


def emulator_from_retention(model: ModelSpec, adapter: AdapterSpec,
                            retention: float) -> EmulatorSpec:
    """Build the compressed backbone obtained by keeping ``retention`` of the
    droppable layers (floor-clamped to one layer)."""
    if not 0.0 < retention <= 1.0:
        raise ValueError(f"retention must be in (0, 1], got {retention}")
    layers = max(1, round(retention * (model.layer_count - adapter.layer_count)))
    frac = layers / model.layer_count
    return EmulatorSpec(
        retention=retention,
        layer_count=layers,
        params=round(frac * model.total_params),
        bytes=round(frac * model.total_bytes),
    )


def final_perplexity(s: PerplexitySurrogate, retention: float) -> float:
    """Perplexity the surrogate converges to at a given retention ratio."""
    if not 0.0 < retention <= 1.0:
        raise ValueError(f"retention must be in (0, 1], got {retention}")
    return s.a * retention ** 2 + s.b * retention + s.c + s.lora_delta


def perplexity_step(state: DeviceState, participated: bool, target: float,
                    rate: float) -> float:
    """One-round perplexity update: exponential approach to ``target`` when
    the device participated, otherwise unchanged."""
    if target <= 0:
        raise ValueError("target perplexity must be positive")
    if not participated:
        return state.perplexity
    return target + (state.perplexity - target) * (1.0 - rate)


def compute_delay(profile: DeviceProfile, emulator: EmulatorSpec,
                  adapter: AdapterSpec, epochs: int) -> float:
    """Local fine-tuning time: epochs x samples x trainable+frozen params,
    divided by the device's processing speed."""
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    work = epochs * profile.data_size * (emulator.params + adapter.params)
    return work / profile.compute_speed


def memory_footprint(emulator: EmulatorSpec, adapter: AdapterSpec) -> float:
    """Bytes a device must hold to run local tuning."""
    return emulator.bytes + adapter.bytes
