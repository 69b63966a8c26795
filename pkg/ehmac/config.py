"""
Environment configuration for the toolkit.

Values here come from the process environment (optionally a ``.env`` file)
and set defaults for the CLI; experiment parameters live in TOML files read
by ``utils/config_loader.py``.
"""

import os

from dotenv import load_dotenv

from .constants import Logging

load_dotenv()

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("LOG_FILE", Logging.DEFAULT_LOG_FILE)

# Execution; unset means the experiment file decides
_workers = os.getenv("EHMAC_WORKERS", "")
WORKERS = int(_workers) if _workers else None

# Files
CONFIG_FILE = os.getenv("EHMAC_CONFIG", "")
OUTPUT_DIR = os.getenv("EHMAC_OUTPUT_DIR", "results")
