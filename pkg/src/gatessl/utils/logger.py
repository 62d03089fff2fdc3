"""Logging for gatessl: rich console output plus an optional per-run log file."""

import logging
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.traceback import install

install(show_locals=False)

# Shared by log records, tables and summary lines.
console = Console()

LOGGER_NAME = "gatessl"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Logger:
    """Class-level facade over the ``gatessl`` logger."""

    _logger: Optional[logging.Logger] = None
    _debug_mode: bool = False

    @classmethod
    def setup_logger(cls, debug: bool = False, log_file: Optional[Path] = None) -> None:
        """(Re)attach the console handler; DEBUG level and source paths when ``debug``."""
        cls._debug_mode = debug
        level = logging.DEBUG if debug else logging.INFO

        logger = logging.getLogger(LOGGER_NAME)
        logger.setLevel(level)
        logger.handlers.clear()
        logger.propagate = False

        handler = RichHandler(
            console=console,
            show_path=debug,
            rich_tracebacks=True,
            tracebacks_show_locals=debug,
        )
        handler.setLevel(level)
        logger.addHandler(handler)
        cls._logger = logger

        if log_file:
            cls.add_file_handler(log_file)

    @classmethod
    def add_file_handler(cls, log_file: Path) -> None:
        """Mirror records into ``log_file`` (train.log of a run directory)."""
        logger = cls._get()
        log_file = Path(log_file).absolute()
        log_file.parent.mkdir(parents=True, exist_ok=True)
        if any(isinstance(h, logging.FileHandler) and Path(h.baseFilename) == log_file for h in logger.handlers):
            return
        handler = logging.FileHandler(log_file, encoding="utf-8")
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(handler)

    @classmethod
    def remove_file_handlers(cls) -> None:
        logger = cls._get()
        for handler in [h for h in logger.handlers if isinstance(h, logging.FileHandler)]:
            logger.removeHandler(handler)
            handler.close()

    @classmethod
    def _get(cls) -> logging.Logger:
        if cls._logger is None:
            cls.setup_logger()
        return cls._logger

    @classmethod
    def is_debug(cls) -> bool:
        return cls._debug_mode

    @classmethod
    def debug(cls, message: str, *args, **kwargs):
        cls._get().debug(message, *args, **kwargs)

    @classmethod
    def info(cls, message: str, *args, **kwargs):
        cls._get().info(message, *args, **kwargs)

    @classmethod
    def warning(cls, message: str, *args, **kwargs):
        cls._get().warning(message, *args, **kwargs)

    @classmethod
    def error(cls, message: str, *args, **kwargs):
        cls._get().error(message, *args, **kwargs)

    @classmethod
    def exception(cls, message: str, *args, **kwargs):
        """Error record with the active traceback."""
        cls._get().exception(message, *args, **kwargs)

    @classmethod
    def success(cls, message: str):
        console.print(f"✅ {message}", style="green")

    @classmethod
    def print(cls, message: str, style: Optional[str] = None):
        """Plain console output (summary lines), bypassing log formatting."""
        console.print(message, style=style)
