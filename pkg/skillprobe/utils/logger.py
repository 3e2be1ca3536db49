"""Logging utilities for skillprobe."""

import json
import logging
import logging.handlers
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional


def _env_enabled(name: str, default: bool = True) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() not in {"0", "false", "off", "no"}


def _env_positive_int(name: str, default: int) -> int:
    try:
        return max(1, int(os.getenv(name, default)))
    except ValueError:
        return max(1, default)


class ContextFilter(logging.Filter):
    """Inject the active run tag (experiment stage / config stem) into every record."""

    def filter(self, record: logging.LogRecord) -> bool:
        run_tag = os.getenv("SKILLPROBE_LOG_RUN_TAG", "global")
        setattr(record, "run_tag", run_tag)
        return True


class ColorFormatter(logging.Formatter):
    """Console formatter that colors the level name."""

    RESET = "\033[0m"
    LEVEL_COLORS = {
        "DEBUG": "\033[37m",
        "INFO": "\033[36m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[1;31m",
    }

    def format(self, record: logging.LogRecord) -> str:
        color = self.LEVEL_COLORS.get(record.levelname, "")
        return super().format(record).replace(record.levelname, f"{color}{record.levelname}{self.RESET}", 1)


class JSONFormatter(logging.Formatter):
    """One JSON object per record for the analysis log."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "timestamp": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "run": getattr(record, "run_tag", "global"),
            "module": record.module,
            "message": record.getMessage(),
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


class SkillProbeLogger:
    """Singleton logger service for skillprobe.

    File logs go to ``SKILLPROBE_LOG_DIR`` when set, else ``$SKILLPROBE_OUT/logs``, else ``./logs``
    under the project root. The CLI moves them into the experiment directory once it is known.
    """

    _instance = None
    _loggers: Dict[str, logging.Logger] = {}
    FORMAT = "%(asctime)s - %(name)s - [run:%(run_tag)s] - %(levelname)s - %(message)s"
    DATEFMT = "%Y-%m-%d %H:%M:%S"

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        pinned = os.getenv("SKILLPROBE_LOG_DIR")
        out_dir = os.getenv("SKILLPROBE_OUT")
        if pinned:
            self.log_dir = Path(pinned)
        elif out_dir:
            self.log_dir = Path(out_dir) / "logs"
        else:
            self.log_dir = Path(__file__).resolve().parents[2] / "logs"
        self._initialized = True

    def _file_handler(self, file_name: str, level: int, formatter: logging.Formatter) -> logging.Handler:
        self.log_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.handlers.RotatingFileHandler(
            self.log_dir / file_name,
            maxBytes=_env_positive_int("SKILLPROBE_LOG_MAX_MB", default=5) * 1024 * 1024,
            backupCount=_env_positive_int("SKILLPROBE_LOG_BACKUP_COUNT", default=3),
            encoding="utf-8",
        )
        handler.setLevel(level)
        handler.setFormatter(formatter)
        return handler

    def get_logger(
        self,
        name: str,
        log_file: Optional[str] = None,
        level: int = logging.INFO,
        json_format: bool = False,
    ) -> logging.Logger:
        """Get or create a logger with a console handler and, unless disabled, a rotating file."""
        if name in self._loggers:
            return self._loggers[name]

        effective_level = getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), level)
        logger = logging.getLogger(name)
        logger.setLevel(effective_level)
        logger.propagate = False
        logger.handlers.clear()
        logger.filters.clear()
        logger.addFilter(ContextFilter())

        console_cls = ColorFormatter if _env_enabled("SKILLPROBE_LOG_COLOR") else logging.Formatter
        console = logging.StreamHandler()
        console.setLevel(effective_level)
        console.setFormatter(console_cls(fmt=self.FORMAT, datefmt=self.DATEFMT))
        logger.addHandler(console)

        if log_file and _env_enabled("SKILLPROBE_LOG_TO_FILE"):
            formatter = JSONFormatter() if json_format else logging.Formatter(fmt=self.FORMAT, datefmt=self.DATEFMT)
            logger.addHandler(self._file_handler(log_file, effective_level, formatter))

        self._loggers[name] = logger
        return logger

    def use_log_dir(self, log_dir: Path) -> None:
        """Reopen every file handler under ``log_dir`` unless SKILLPROBE_LOG_DIR pins the location."""
        if os.getenv("SKILLPROBE_LOG_DIR") or Path(log_dir) == self.log_dir:
            return
        self.log_dir = Path(log_dir)
        for logger in self._loggers.values():
            for handler in list(logger.handlers):
                if isinstance(handler, logging.handlers.RotatingFileHandler):
                    logger.removeHandler(handler)
                    handler.close()
                    logger.addHandler(self._file_handler(Path(handler.baseFilename).name, handler.level, handler.formatter))

    def get_pipeline_logger(self) -> logging.Logger:
        """Logger for CLI stages and the experiment manifest."""
        return self.get_logger("skillprobe.pipeline", "pipeline.log")

    def get_training_logger(self) -> logging.Logger:
        """Logger for pre-training and all tuning regimes."""
        return self.get_logger("skillprobe.training", "training.log")

    def get_analysis_logger(self) -> logging.Logger:
        """Logger for neuron finding and analysis in JSON format."""
        return self.get_logger("skillprobe.analysis", "analysis.json", json_format=True)


# Singleton instance
logger_service = SkillProbeLogger()
