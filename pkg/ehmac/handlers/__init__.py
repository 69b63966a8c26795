"""
Command-line handlers package.
"""

from . import commands

__all__ = ["commands"]
