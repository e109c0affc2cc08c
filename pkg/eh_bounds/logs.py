"""Logging helpers for eh-bounds.

Loggers live under the ``EHBounds`` namespace and are rendered by a single
rich handler on stderr, so stdout and output files stay untouched.
"""

import logging
import os
from typing import Optional, Union

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER_NAME = "EHBounds"
LOG_LEVEL_ENV = "EH_BOUNDS_LOG_LEVEL"


def get_logger(name: str) -> logging.Logger:
    """Get a logger nested under the EHBounds namespace.

    Args:
        name: Usually ``__name__`` of the calling module

    Returns:
        A configured logger
    """
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def configure_logging(level: Optional[Union[int, str]] = None) -> None:
    """Install the rich handler on the EHBounds logger.

    Args:
        level: Log level; falls back to ``EH_BOUNDS_LOG_LEVEL`` or WARNING
    """
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV, "WARNING")
    if isinstance(level, str):
        level = level.upper()

    root = logging.getLogger(ROOT_LOGGER_NAME)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = RichHandler(
        console=Console(stderr=True),
        rich_tracebacks=True,
        show_path=False,
    )
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
