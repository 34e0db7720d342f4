"""
Logging Configuration for EnKBF-NMPC

Provides centralized logging configuration and utilities for the package.
"""

import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILE_NAME = "enkbf_nmpc.log"


def setup_logging(
    level: int = logging.INFO, log_dir: Optional[Union[str, Path]] = None
) -> None:
    """
    Set up logging configuration for EnKBF-NMPC.

    Args:
        level: Logging level (default: INFO)
        log_dir: Directory receiving ``enkbf_nmpc.log``; console only if None
    """
    handlers = [logging.StreamHandler()]
    try:
        if log_dir is not None:
            log_path = Path(log_dir)
            log_path.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_path / LOG_FILE_NAME))

        logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)

        logger = logging.getLogger("enkbf_nmpc")
        logger.debug("Logging system initialized")

    except Exception as e:
        # Fallback to console logging if the log file cannot be created
        logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
        logger = logging.getLogger("enkbf_nmpc")
        logger.error("Failed to set up file logging: %s", e)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Name of the module/component

    Returns:
        Logger instance
    """
    return logging.getLogger(f"enkbf_nmpc.{name}")
