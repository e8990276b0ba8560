import logging
import sys
import threading
import time

import numpy as np
import pytest
from concurrent_log_handler import ConcurrentRotatingFileHandler

from app.models.ConfigModels import BatchSpec, ModelConfig, RunConfig
from app.utils.concurrency import ordered_map, resolve_workers, spawn_seeds
from app.utils.exceptions import ConfigError, MalformedDataError
from app.utils.file_utils import FileUtils, read_jsonl, read_numeric_csv
from app.utils.logging_utils import configure_logging


def test_run_config_from_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("model:\n  hidden_dim: 32\n  num_heads: 4\nbatch:\n  batch_size: 8\n", encoding="utf-8")
    config = RunConfig.from_yaml(str(path))
    assert config.model.hidden_dim == 32
    assert config.batch.batch_size == 8
    assert config.inference.beam_size == 32


def test_run_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(str(tmp_path / "missing.yaml"))
    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("optimiser:\n  lr: 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(str(unknown))
    invalid = tmp_path / "invalid.yaml"
    invalid.write_text("model:\n  hidden_dim: 30\n  num_heads: 4\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(str(invalid))
    listing = tmp_path / "listing.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(str(listing))


def test_with_seed_reaches_every_seeded_section():
    config = RunConfig().with_seed(99)
    assert {config.generator.seed, config.training.seed, config.inference.seed, config.gp.seed} == {99}
    assert config.snapshot()["generator"]["seed"] == 99


def test_interval_and_model_validation():
    with pytest.raises(ValueError):
        BatchSpec(constant_range=(5.0, 1.0))
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=40)
    with pytest.raises(ValueError):
        ModelConfig(dim_x=4)


def test_ordered_map_keeps_input_order():
    def slow_square(value):
        time.sleep(0.001 * (10 - value))
        return value * value, threading.get_ident()

    results = ordered_map(slow_square, range(10), workers=4)
    assert [value for value, _ in results] == [value * value for value in range(10)]
    assert ordered_map(lambda value: value, [], workers=3) == []


def test_resolve_workers():
    assert resolve_workers(3) == 3
    assert resolve_workers() >= 1
    with pytest.raises(ConfigError):
        resolve_workers(0)


def test_spawned_seeds_are_reproducible():
    assert spawn_seeds(np.random.default_rng(1), 5) == spawn_seeds(np.random.default_rng(1), 5)
    assert len(set(spawn_seeds(np.random.default_rng(1), 50))) == 50


def test_file_utils_stays_inside_the_output_dir(tmp_path):
    file_utils = FileUtils(str(tmp_path))
    path = file_utils.write_csv("rows.csv", ("a", "b"), [(1, 2.5)])
    assert open(path, encoding="utf-8").read().splitlines() == ["a,b", "1,2.5"]
    with pytest.raises(ValueError):
        file_utils.path("../escape.txt")


def test_read_jsonl_checks_the_header(tmp_path):
    path = tmp_path / "records.jsonl"
    path.write_text("# other v1\n{}\n", encoding="utf-8")
    with pytest.raises(MalformedDataError) as error:
        read_jsonl(str(path), "# nsr-pool v1")
    assert error.value.line_number == 1
    path.write_text('# nsr-pool v1\n{"a": 1}\n[1]\n', encoding="utf-8")
    with pytest.raises(MalformedDataError) as error:
        read_jsonl(str(path), "# nsr-pool v1")
    assert error.value.line_number == 3


def test_read_numeric_csv_reports_the_line(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x1,y\n1,2\n3,4\n5,abc\n", encoding="utf-8")
    with pytest.raises(MalformedDataError) as error:
        read_numeric_csv(str(path))
    assert error.value.line_number == 4
    assert error.value.exit_code == 2
    path.write_text("x1,y\n1,2\n3\n", encoding="utf-8")
    with pytest.raises(MalformedDataError) as error:
        read_numeric_csv(str(path))
    assert error.value.line_number == 3
    path.write_text("x1,y\n1,2\n", encoding="utf-8")
    assert read_numeric_csv(str(path)) == [[1.0, 2.0]]


def test_module_loggers_share_the_package_handlers(tmp_path):
    first = configure_logging("fitlog.inference.fitting", log_level=logging.INFO, log_dir=str(tmp_path),
                              log_file_prefix="run")
    second = configure_logging("fitlog.model.training", log_level=logging.INFO, log_dir=str(tmp_path),
                               log_file_prefix="run")
    owner = logging.getLogger("fitlog")
    try:
        assert first.handlers == [] and second.handlers == []
        assert [type(handler) for handler in owner.handlers] == [ConcurrentRotatingFileHandler, logging.StreamHandler]
        assert owner.handlers[1].stream is sys.stderr
        first.info("restart 0 converged")
        second.debug("hidden below INFO")
        for handler in owner.handlers:
            handler.flush()
        lines = (tmp_path / "run.log").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        assert "fitlog.inference.fitting - INFO - [MainThread] restart 0 converged" in lines[0]
    finally:
        for handler in list(owner.handlers):
            owner.removeHandler(handler)
            handler.close()


def test_logging_without_a_directory_writes_no_file(tmp_path):
    logger = configure_logging("nofilelog", log_dir=None, log_file_prefix="run")
    try:
        assert [type(handler) for handler in logger.handlers] == [logging.StreamHandler]
        assert list(tmp_path.iterdir()) == []
    finally:
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
