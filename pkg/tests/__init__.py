"""
Tests for the Energy-Harvesting MAC toolkit.
"""
