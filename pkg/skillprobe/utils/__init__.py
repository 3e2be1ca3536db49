"""Shared utilities: logging service and worker sizing."""

from skillprobe.utils.logger import logger_service
from skillprobe.utils.workers import resolve_worker_count, run_ordered

__all__ = ["logger_service", "resolve_worker_count", "run_ordered"]
