"""
heston-degen centralized logging with loguru.

- Console output goes to stderr so CSV written to stdout stays parseable.
- Two log files: heston_degen.log (all logs) & heston_degen_error.log (errors only).
- HESTON_DEGEN_LOG_LEVEL sets the console level; HESTON_DEGEN_NO_FILE_LOGS=1
  keeps only the console handler.
"""

import os
import sys

from loguru import logger

from src.utils.heston_constants import APP_LOG_DIR

_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")

FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {process} | {name}:{function}:{line} - {message}"


def console_level() -> str:
    level = os.environ.get("HESTON_DEGEN_LOG_LEVEL", "INFO").strip().upper()
    return level if level in _LEVELS else "INFO"


# Separate configs for each handler
CONSOLE_CONFIG = {
    "sink": sys.stderr,
    "level": console_level(),
    "format": "<level>{level: <8}</level> | {message}",
    "colorize": True,
}

ALL_LOGS_CONFIG = {
    "sink": APP_LOG_DIR / "heston_degen.log",
    "level": "DEBUG",
    "format": FILE_FORMAT,
    "rotation": "10 MB",
    "retention": "14 days",
    "compression": "zip",
    "enqueue": True,
}

ERROR_LOGS_CONFIG = {
    **ALL_LOGS_CONFIG,
    "sink": APP_LOG_DIR / "heston_degen_error.log",
    "level": "ERROR",
    "rotation": "5 MB",
    "retention": "30 days",
    "backtrace": True,
}


def file_logs_enabled() -> bool:
    return os.environ.get("HESTON_DEGEN_NO_FILE_LOGS", "").strip().lower() not in {"1", "true", "yes"}


def init_logger() -> None:
    """Replace loguru's default handler with the console and (optionally) file handlers."""
    logger.remove()
    logger.add(**CONSOLE_CONFIG)
    if file_logs_enabled():
        logger.add(**ALL_LOGS_CONFIG)
        logger.add(**ERROR_LOGS_CONFIG)
    logger.debug(f"heston-degen logger initialized (console level {CONSOLE_CONFIG['level']}, logs in {APP_LOG_DIR})")


init_logger()

__all__ = ["logger"]
