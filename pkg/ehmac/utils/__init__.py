"""
Utility functions for the toolkit.
"""
