"""
Test data factories for the toolkit tests.

This module provides factories for creating test data objects,
reducing code duplication in tests and improving maintainability.
"""
