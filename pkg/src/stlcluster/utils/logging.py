"""Structured logging configuration for stlcluster.

Modules log through ``get_logger(__name__)`` and attach stage, seed and other
run details with ``extra={"context": {...}}``. The console shows them as
``key=value`` pairs after the message; JSON output keeps them as an object.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any

UTC = timezone.utc  # datetime.UTC alias is 3.11+

ROOT_LOGGER_NAME = "stlcluster"


def _jsonable(value: Any) -> Any:
    # Tensors and numpy arrays/scalars both expose tolist()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def _context(record: logging.LogRecord) -> dict[str, Any]:
    context = getattr(record, "context", None)
    return context if isinstance(context, dict) else {}


class JSONFormatter(logging.Formatter):
    """One JSON object per record; the context dict is emitted as is."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.now(UTC).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        context = _context(record)
        if context:
            entry["context"] = context
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=_jsonable)


class ContextFormatter(logging.Formatter):
    """Human-readable lines with the record context appended.

    Example:
        12:01:07 INFO    stlcluster.simulation.pipeline: cluster: done [stage=cluster seed=0]
    """

    def __init__(self) -> None:
        super().__init__("%(asctime)s %(levelname)-7s %(name)s: %(message)s", datefmt="%H:%M:%S")

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        context = _context(record)
        if not context:
            return line
        pairs = " ".join(f"{key}={value}" for key, value in context.items())
        return f"{line} [{pairs}]"


def setup_logging(
    level: str = "INFO",
    json_format: bool = False,
    log_file: str | None = None,
) -> logging.Logger:
    """Configure the package logger, replacing handlers of earlier calls.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR)
        json_format: Emit console records as JSON lines
        log_file: Optional path; the file always receives JSON lines

    Returns:
        The ``stlcluster`` logger
    """
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(getattr(logging, level.upper()))
    logger.handlers.clear()

    # stderr keeps stdout free for command results
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(JSONFormatter() if json_format else ContextFormatter())
    logger.addHandler(console)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(JSONFormatter())
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str | None = None) -> logging.Logger:
    """Package logger, or the child for ``name`` (prefixed when outside the package)."""
    if name is None or name == ROOT_LOGGER_NAME:
        return logging.getLogger(ROOT_LOGGER_NAME)
    if name.startswith(ROOT_LOGGER_NAME + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
