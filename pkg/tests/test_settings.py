import logging

import pytest

from config.settings import Settings
from utils.errors import ConfigError
from utils.logger import get_log_level, setup_logger, update_log_level


def test_yaml_overrides_defaults(tmp_path, monkeypatch):
    (tmp_path / "config.yaml").write_text(
        "quadrature:\n  box: [-5, 5]\n  qpoints: 12\ntraining:\n  iterations: 7\n  bogus: 1\n", encoding="utf-8")
    monkeypatch.setenv("CONFIG_PATH", str(tmp_path))
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("TPF_OUTPUT_DIR", raising=False)
    loaded = Settings()
    assert loaded.box == (-5.0, 5.0)
    assert loaded.qpoints == 12
    assert loaded.subintervals == 30
    assert loaded.training_defaults["iterations"] == 7
    assert "bogus" not in loaded.training_defaults
    assert loaded.training_defaults["penalty_beta"] == 200.0


def test_missing_file_falls_back(tmp_path, monkeypatch):
    monkeypatch.setenv("CONFIG_PATH", str(tmp_path / "absent"))
    loaded = Settings()
    assert loaded.box == (-10.0, 10.0)
    assert loaded.als_defaults["restarts"] == 16


def test_environment_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("CONFIG_PATH", str(tmp_path))
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("TPF_OUTPUT_DIR", str(tmp_path / "out"))
    loaded = Settings()
    assert loaded.log_level == "DEBUG"
    assert loaded.resolve_output_dir() == tmp_path / "out"
    assert (tmp_path / "out").is_dir()


def test_update_log_level():
    logger = setup_logger("tests.level")
    try:
        update_log_level("DEBUG")
        assert logger.level == logging.DEBUG
    finally:
        update_log_level("INFO")
    assert logger.level == logging.INFO


def test_unknown_level_rejected():
    with pytest.raises(ConfigError, match="unknown log level"):
        update_log_level("LOUD")


def test_unknown_level_in_settings_means_info():
    assert get_log_level("verbose") == logging.INFO
    assert get_log_level(" warning ") == logging.WARNING
