"""
Logging for the entry points. Library modules only create loggers.
"""
import logging
import os
import sys
from typing import Optional

LOG_LEVEL_ENV = "HVDFLOW_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s %(message)s"


def configure_logging(level: Optional[str] = None) -> int:
    """Log to stderr at ``level`` (else $HVDFLOW_LOG_LEVEL, else INFO)."""
    name = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level '{name}'")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)
    return numeric
