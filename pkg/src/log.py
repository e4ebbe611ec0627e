"""
Logging setup - one stderr handler emitting `level,frame,message` lines
"""
import logging
import sys

LOG_FORMAT = "%(levelname)s,%(frame)s,%(message)s"
ROOT_LOGGER = "gaze"


class _FrameFilter(logging.Filter):
    """Fills in the frame field for records logged without one"""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "frame"):
            record.frame = "-"
        return True


def configure_logging(level: str = "INFO") -> logging.Logger:
    """
    Install the stderr handler on the package logger

    Args:
        level: Logging level name

    Returns:
        The package root logger
    """
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(level.upper())

    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.addFilter(_FrameFilter())
    logger.addHandler(handler)
    logger.propagate = False

    return logger


def get_logger(name: str) -> logging.Logger:
    """Child logger under the package root"""
    logger = logging.getLogger(f"{ROOT_LOGGER}.{name}")
    if not any(isinstance(f, _FrameFilter) for f in logger.filters):
        logger.addFilter(_FrameFilter())
    return logger
