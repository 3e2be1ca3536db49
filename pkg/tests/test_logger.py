"""Tests for the logger service: named loggers, JSON records and log-directory moves."""

import json
import logging
import logging.handlers

from skillprobe.utils.logger import JSONFormatter, SkillProbeLogger, logger_service


def _file_handlers(logger):
    return [h for h in logger.handlers if isinstance(h, logging.handlers.RotatingFileHandler)]


class TestLoggerService:
    def test_singleton(self):
        assert SkillProbeLogger() is logger_service

    def test_named_loggers_are_cached(self):
        pipeline = logger_service.get_pipeline_logger()
        assert pipeline is logger_service.get_pipeline_logger()
        assert pipeline.name == "skillprobe.pipeline"
        assert logger_service.get_training_logger().name == "skillprobe.training"
        assert logger_service.get_analysis_logger().name == "skillprobe.analysis"
        assert not pipeline.propagate

    def test_only_used_getters_remain(self):
        getters = sorted(name for name in dir(SkillProbeLogger) if name.startswith("get_") and name.endswith("_logger"))
        assert getters == ["get_analysis_logger", "get_pipeline_logger", "get_training_logger"]

    def test_use_log_dir_reopens_file_handlers(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SKILLPROBE_LOG_DIR", raising=False)
        monkeypatch.setenv("SKILLPROBE_LOG_TO_FILE", "1")
        monkeypatch.setattr(logger_service, "_loggers", {})
        monkeypatch.setattr(logger_service, "log_dir", tmp_path / "first")
        logger = logger_service.get_logger("skillprobe.test_moves", "moves.json", json_format=True)
        assert [h.baseFilename for h in _file_handlers(logger)] == [str(tmp_path / "first" / "moves.json")]

        logger_service.use_log_dir(tmp_path / "second")
        handlers = _file_handlers(logger)
        assert [h.baseFilename for h in handlers] == [str(tmp_path / "second" / "moves.json")]
        assert isinstance(handlers[0].formatter, JSONFormatter)
        logger.info("moved")
        handlers[0].close()
        assert json.loads((tmp_path / "second" / "moves.json").read_text(encoding="utf-8"))["message"] == "moved"


def test_json_formatter_writes_one_object():
    record = logging.LogRecord("skillprobe.analysis", logging.WARNING, __file__, 10, "task=%s", ("polarity_a",), None)
    record.run_tag = "tiny"
    entry = json.loads(JSONFormatter().format(record))
    assert entry["message"] == "task=polarity_a"
    assert entry["level"] == "WARNING"
    assert entry["run"] == "tiny"
