"""Seedable simulator of federated emulator-assisted fine-tuning over a
wireless network, driven by a branch-chained PPO controller."""

__version__ = "0.1.0"

from .env import AdaptiveFedEnv, EnvParams, RewardBreakdown
from .federation import ActionBundle, FederationMode

__all__ = [
    "AdaptiveFedEnv",
    "EnvParams",
    "RewardBreakdown",
    "ActionBundle",
    "FederationMode",
    "__version__",
]
