# fraclab/core/logger.py
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

try:
    from rich.logging import RichHandler

    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False

try:
    import colorlog

    COLORLOG_AVAILABLE = True
except ImportError:
    COLORLOG_AVAILABLE = False

DEFAULT_LOG_FORMAT = "%(asctime)s [%(levelname)-8s] %(name)-28s: %(message)s"
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_FILE_NAME = "fraclab.log"


class LoggerProxy:
    """
    Lazy logger accessor so numerics modules can declare a logger at import time
    without touching handler configuration.
    Usage: log = LoggerProxy(__name__)
    """

    def __init__(self, name: str):
        self._name = name
        self._logger: logging.Logger | None = None

    def _get_logger(self) -> logging.Logger:
        if self._logger is None:
            self._logger = logging.getLogger(self._name)
        return self._logger

    def __getattr__(self, item: str) -> Any:
        return getattr(self._get_logger(), item)


def _console_handler(console: str, log_format: str, date_format: str) -> logging.Handler:
    if console == "rich" and RICH_AVAILABLE:
        return RichHandler(rich_tracebacks=True, markup=False, show_time=False, show_path=False)
    handler = logging.StreamHandler(sys.stderr)
    if console in ("rich", "color") and COLORLOG_AVAILABLE:
        handler.setFormatter(
            colorlog.ColoredFormatter("%(log_color)s" + log_format, datefmt=date_format)
        )
    else:
        handler.setFormatter(logging.Formatter(log_format, date_format))
    return handler


def setup_logging(
    config: dict[str, Any], verbose: bool = False, log_dir: Path | None = None
) -> None:
    """
    Configure root logging for a CLI invocation.

    Args:
        config: Experiment configuration; only the ``logging`` section is read.
        verbose: Force DEBUG regardless of the configured level.
        log_dir: Directory for the rotating log file (the run's output directory).
    """
    logging_config = config.get("logging", {})

    level_str = "DEBUG" if verbose else str(logging_config.get("level", "INFO")).upper()
    level = getattr(logging, level_str, logging.INFO)

    log_format = logging_config.get("format", DEFAULT_LOG_FORMAT)
    date_format = logging_config.get("date_format", DEFAULT_DATE_FORMAT)
    console = logging_config.get("console", "rich")

    handlers: list[logging.Handler] = [_console_handler(console, log_format, date_format)]

    file_logging = bool(logging_config.get("log_to_file", False)) and log_dir is not None
    if file_logging and log_dir is not None:
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_dir / LOG_FILE_NAME, maxBytes=5 * 1024 * 1024, backupCount=5
            )
            file_handler.setFormatter(logging.Formatter(log_format, date_format))
            handlers.append(file_handler)
        except OSError as e:
            print(f"ERROR: Could not set up file logging at {log_dir}: {e}", file=sys.stderr)
            file_logging = False

    root_logger = logging.getLogger()
    if root_logger.hasHandlers():
        root_logger.handlers.clear()

    logging.basicConfig(level=level, format=log_format, datefmt=date_format, handlers=handlers)

    LoggerProxy(__name__).debug(
        "Logging initialized. Level: %s. Console: %s. File logging: %s",
        level_str,
        console,
        file_logging,
    )
