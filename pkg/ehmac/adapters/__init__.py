"""Policy adapters exposing every decision rule through one interface."""

from .policies import (
    GreedyPolicy,
    MdpPolicy,
    NnPolicy,
    OfflineReplayPolicy,
    Policy,
    ZeroPolicy,
)

__all__ = ["Policy", "ZeroPolicy", "MdpPolicy", "GreedyPolicy", "NnPolicy", "OfflineReplayPolicy"]
