"""
Logging setup: JSON records by default, the classic text layout on request.
"""

import logging
import os
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from brwtie_lab.config import LoggingConfig

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FIELDS = "%(asctime)s %(name)s %(levelname)s %(message)s"


def configure_logging(
    level: Optional[str] = None, fmt: Optional[str] = None
) -> logging.Logger:
    """
    Install a single stderr handler on the root logger.

    Args:
        level: Logging level name (defaults to LoggingConfig.LOG_LEVEL)
        fmt: "json" or "text" (defaults to LoggingConfig.LOG_FORMAT)

    Returns:
        The configured root logger
    """
    level = (
        level or os.getenv(LoggingConfig.LEVEL_ENV_VAR, LoggingConfig.LOG_LEVEL)
    ).upper()
    fmt = (
        fmt or os.getenv(LoggingConfig.FORMAT_ENV_VAR, LoggingConfig.LOG_FORMAT)
    ).lower()

    handler = logging.StreamHandler(sys.stderr)
    if fmt == "text":
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))
    else:
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FIELDS))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)
    return root
