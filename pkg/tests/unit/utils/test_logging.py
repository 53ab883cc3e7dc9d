"""Unit tests for structured logging."""

import json
import logging

import torch

from stlcluster.utils.logging import ContextFormatter, JSONFormatter, get_logger, setup_logging


def _record(**extra):
    record = logging.LogRecord(
        "stlcluster.pipeline", logging.INFO, "pipeline.py", 10, "done", (), None
    )
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_should_format_record_as_json_with_context():
    output = json.loads(JSONFormatter().format(_record(context={"stage": "cluster", "seed": 0})))

    assert output["level"] == "INFO"
    assert output["message"] == "done"
    assert output["context"] == {"stage": "cluster", "seed": 0}
    assert output["timestamp"].endswith("Z")


def test_should_omit_context_when_absent():
    output = json.loads(JSONFormatter().format(_record()))

    assert "context" not in output


def test_should_nest_module_loggers_under_package():
    assert get_logger("stlcluster.algorithms.policy").name == "stlcluster.algorithms.policy"
    assert get_logger("tests").name == "stlcluster.tests"
    assert get_logger().name == "stlcluster"


def test_should_configure_level_and_single_console_handler():
    logger = setup_logging("DEBUG", json_format=True)
    setup_logging("DEBUG", json_format=True)

    assert logger.level == logging.DEBUG
    assert len(logger.handlers) == 1
    assert isinstance(logger.handlers[0].formatter, JSONFormatter)
    setup_logging("WARNING")


def test_should_write_json_lines_to_log_file(tmp_path):
    path = tmp_path / "run.log"
    logger = setup_logging("INFO", log_file=str(path))

    get_logger("stlcluster.pipeline").info("stage done", extra={"context": {"stage": "report"}})
    for handler in logger.handlers:
        handler.flush()

    line = json.loads(path.read_text().splitlines()[-1])
    assert line["context"] == {"stage": "report"}
    for handler in logger.handlers:
        handler.close()
    setup_logging("WARNING")


def test_should_serialize_tensor_values_in_context():
    record = _record(context={"robustness": torch.tensor([0.5, -1.0], dtype=torch.float64)})

    output = json.loads(JSONFormatter().format(record))

    assert output["context"]["robustness"] == [0.5, -1.0]


def test_should_append_context_pairs_to_console_line():
    line = ContextFormatter().format(_record(context={"stage": "cluster", "seed": 3}))

    assert line.endswith("stlcluster.pipeline: done [stage=cluster seed=3]")
    assert ContextFormatter().format(_record()).endswith("stlcluster.pipeline: done")
