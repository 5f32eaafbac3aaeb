"""Logging configuration for the workbench."""

import logging
import os
import sys
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _default_level() -> int:
    name = os.environ.get('GLASSBENCH_LOG_LEVEL')
    if name is None:
        try:
            from django.conf import settings
            name = settings.WORKBENCH.get('LOG_LEVEL', 'INFO') if settings.configured else 'INFO'
        except (ImportError, AttributeError):
            name = 'INFO'
    return logging.getLevelName(name.upper()) if isinstance(name, str) else logging.INFO


def setup_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """Set up a logger with consistent formatting.

    Args:
        name: Name of the logger
        level: Optional logging level (defaults to GLASSBENCH_LOG_LEVEL, then INFO)

    Returns:
        logging.Logger: Configured logger
    """
    if level is None:
        level = _default_level()
        if not isinstance(level, int):
            level = logging.INFO

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid duplicate handlers
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)

    return logger


logger = setup_logger('glass_workbench')
