import logging
import sys
from typing import Optional

from config.settings import settings
from utils.errors import ConfigError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def get_log_level(level_str: str, strict: bool = False) -> int:
    """Map a level name to its logging constant; unknown names mean INFO unless strict"""
    name = level_str.strip().upper()
    if name in LEVELS:
        return getattr(logging, name)
    if strict:
        raise ConfigError(f"unknown log level '{level_str}', expected one of {', '.join(LEVELS)}",
                          level=level_str)
    return logging.INFO


def _apply_level(logger: logging.Logger, level: int):
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


def setup_logger(name: str = __name__) -> logging.Logger:
    logger = logging.getLogger(name)
    if not logger.handlers:
        # stdout carries CSV and tables
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False
    _apply_level(logger, get_log_level(settings.log_level))
    return logger


def update_log_level(level_str: Optional[str] = None):
    """Retune every existing logger to level_str, or to the settings level when omitted"""
    if level_str:
        level = get_log_level(level_str, strict=True)
        settings.log_level = logging.getLevelName(level)
    else:
        level = get_log_level(settings.log_level)

    logging.getLogger().setLevel(level)
    for logger in list(logging.root.manager.loggerDict.values()):
        if isinstance(logger, logging.Logger):
            _apply_level(logger, level)
