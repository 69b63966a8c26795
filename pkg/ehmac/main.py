"""Backward compatible entry point exposing the CLI and its handlers."""

import sys

from .app import main  # noqa: F401
from .handlers import commands  # noqa: F401

__all__ = ["main", "commands"]

if __name__ == "__main__":
    sys.exit(main())
