"""
Service layer for the toolkit.

Each service owns one decision rule or workflow (MDP tables, offline
solves, greedy decisions, training, simulation) for a fixed configuration.
"""

from ..registry import services

__all__ = ["services"]
