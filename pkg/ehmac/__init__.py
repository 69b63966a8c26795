"""
Energy-Harvesting MAC toolkit

Version-update scheduling for energy-harvesting users on a multiple-access
channel: optimal MDP policies, an offline convex oracle, a learned
imitation policy, a greedy baseline and a Monte Carlo harness.
"""

__version__ = "0.1.0"
__author__ = "EHMAC Team"
