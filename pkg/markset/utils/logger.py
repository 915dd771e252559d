import logging
from pathlib import Path
from typing import Optional, Union

LOG_FILE = "markset.log"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
CONSOLE_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def setup_logger(
    name: str,
    log_level: Union[int, str] = logging.INFO,
    log_dir: Optional[Path] = None,
) -> logging.Logger:
    """Attach a file handler (``<log_dir>/markset.log``) and a console handler to ``name``.

    Calling it again only updates the level, so experiments run back to back
    in one process share a single pair of handlers.
    """
    if isinstance(log_level, str):
        level = logging.getLevelName(log_level.upper())
        if not isinstance(level, int):
            raise ValueError(f"unknown log level {log_level!r}")
        log_level = level

    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(log_level)
        return logger

    log_dir = Path(log_dir) if log_dir is not None else Path("logs")
    log_dir.mkdir(parents=True, exist_ok=True)
    for handler, fmt in (
        (logging.FileHandler(log_dir / LOG_FILE), FILE_FORMAT),
        (logging.StreamHandler(), CONSOLE_FORMAT),
    ):
        handler.setLevel(log_level)
        handler.setFormatter(logging.Formatter(fmt))
        logger.addHandler(handler)
    return logger
