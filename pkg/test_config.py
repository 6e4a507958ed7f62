#!/usr/bin/env python3
"""
Unit tests for config.py, app_init.py and the execution parameters

Tests the configuration layer including:
- Environment-backed settings and their validation
- The settings singleton and its reset hook
- Logging initialization
- ExecutionConfig bounds, parsing and delivery bounds
- Fraction parsing and ConfigurationError locations
"""

import logging
import os
from fractions import Fraction
from unittest.mock import patch

import pytest

from app_init import initialize_app
from config import Settings, get_settings, load_settings, reset_settings
from utils.errors import ConfigurationError, SimulationError
from utils.model import ExecutionConfig, as_fraction, fraction_text


class TestSettings:
    """Test cases for the PCL_* environment settings."""

    @patch.dict(os.environ, {}, clear=True)
    def test_defaults(self):
        """Test every setting falls back to its default."""
        settings = load_settings()

        assert settings.log_level == "WARNING"
        assert settings.inner_loop_cap == 10000
        assert settings.search_cap == 20
        assert settings.trace_dir == "traces"
        assert settings.report_dir == "reports"
        assert settings.workers == 1

    @patch.dict(os.environ, {'PCL_LOG_LEVEL': 'debug', 'PCL_WORKERS': '4', 'PCL_SEARCH_CAP': '12',
                             'PCL_TRACE_DIR': '/tmp/traces'})
    def test_overrides(self):
        """Test environment values override the defaults."""
        settings = load_settings()

        assert settings.log_level == "DEBUG"
        assert settings.log_level_number == logging.DEBUG
        assert settings.workers == 4
        assert settings.search_cap == 12
        assert settings.trace_dir == "/tmp/traces"

    @patch.dict(os.environ, {'PCL_LOG_LEVEL': 'chatty'})
    def test_invalid_log_level(self):
        """Test an unknown log level is rejected."""
        with pytest.raises(ValueError, match="PCL_LOG_LEVEL"):
            load_settings()

    @pytest.mark.parametrize("value", ["0", "-3", "many"])
    def test_invalid_positive_int(self, value):
        """Test counts must be positive integers."""
        with patch.dict(os.environ, {'PCL_WORKERS': value}):
            with pytest.raises(ValueError, match="PCL_WORKERS must be a positive integer"):
                load_settings()

    @patch.dict(os.environ, {'PCL_INNER_LOOP_CAP': '  '})
    def test_blank_value_uses_default(self):
        """Test a blank variable counts as unset."""
        assert load_settings().inner_loop_cap == 10000

    def test_singleton_and_reset(self):
        """Test get_settings caches until reset_settings is called."""
        reset_settings()
        with patch.dict(os.environ, {'PCL_WORKERS': '3'}):
            first = get_settings()
            assert first.workers == 3
        assert get_settings() is first

        reset_settings()
        with patch.dict(os.environ, {'PCL_WORKERS': '5'}):
            assert get_settings().workers == 5
        reset_settings()


class TestInitializeApp:
    """Test cases for logging initialization."""

    def test_uses_settings_level(self, mocker):
        """Test the configured level reaches logging.basicConfig."""
        mock_basic = mocker.patch('app_init.logging.basicConfig')
        mocker.patch('app_init.get_settings', return_value=Settings(log_level="ERROR"))

        initialize_app()

        assert mock_basic.call_args.kwargs["level"] == logging.ERROR

    def test_explicit_level_wins(self, mocker):
        """Test an explicit level overrides PCL_LOG_LEVEL."""
        mock_basic = mocker.patch('app_init.logging.basicConfig')
        mocker.patch('app_init.get_settings', return_value=Settings(log_level="ERROR"))

        initialize_app("info")

        assert mock_basic.call_args.kwargs["level"] == logging.INFO


class TestExecutionConfig:
    """Test cases for ExecutionConfig."""

    def test_defaults(self):
        """Test the default configuration is synchronous with kappa 1."""
        cfg = ExecutionConfig()

        assert cfg.delta == 2
        assert cfg.kappa == Fraction(1)
        assert cfg.synchronous

    @pytest.mark.parametrize("kwargs, location", [
        ({"delta": 1}, "config.delta"),
        ({"kappa": 0}, "config.kappa"),
        ({"kappa": "3/2"}, "config.kappa"),
        ({"rho": "5/4"}, "config.rho"),
        ({"epsilon": 1.0}, "config.epsilon"),
        ({"r_max": 0}, "config.r_max"),
        ({"gst": -1}, "config.gst"),
        ({"gst": 50, "duration": 10}, "config.gst"),
        ({"duration": -1}, "config.duration"),
    ])
    def test_rejects_out_of_range(self, kwargs, location):
        """Test invalid parameters raise ConfigurationError naming the key."""
        with pytest.raises(ConfigurationError) as excinfo:
            ExecutionConfig(**kwargs)

        assert excinfo.value.location == location
        assert str(excinfo.value).startswith(location + ": ")

    def test_fraction_text_inputs(self):
        """Test kappa and rho accept 'num/den' text."""
        cfg = ExecutionConfig(kappa="1/2", rho="1/3")

        assert cfg.kappa == Fraction(1, 2)
        assert cfg.rho == Fraction(1, 3)

    def test_delivery_bound(self):
        """Test messages sent before GST are due delta after GST."""
        cfg = ExecutionConfig(delta=2, gst=10, duration=40)

        assert cfg.delivery_bound(3) == 12
        assert cfg.delivery_bound(15) == 17

    def test_from_dict_rejects_unknown_keys(self):
        """Test unknown configuration keys are reported."""
        with pytest.raises(ConfigurationError, match="unknown keys"):
            ExecutionConfig.from_dict({"delta": 2, "latency": 3})

    def test_dict_round_trip(self):
        """Test to_dict output rebuilds the same configuration."""
        cfg = ExecutionConfig(delta=4, duration=60, gst=8, kappa="2/3", seed=11)

        assert ExecutionConfig.from_dict(cfg.to_dict()) == cfg

    def test_with_seed(self):
        """Test with_seed changes only the seed."""
        cfg = ExecutionConfig(delta=3, duration=30)
        reseeded = cfg.with_seed(9)

        assert reseeded.seed == 9
        assert reseeded.delta == 3
        assert cfg.seed == 0


class TestFractions:
    """Test cases for as_fraction and fraction_text."""

    @pytest.mark.parametrize("value, expected", [
        ("1/3", Fraction(1, 3)),
        (" 2/4 ", Fraction(1, 2)),
        (1, Fraction(1)),
        (0.5, Fraction(1, 2)),
        (Fraction(2, 7), Fraction(2, 7)),
    ])
    def test_parses(self, value, expected):
        """Test supported spellings of a fraction."""
        assert as_fraction(value) == expected

    @pytest.mark.parametrize("value", [True, "one third", "1/0", None])
    def test_rejects(self, value):
        """Test unparsable values raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            as_fraction(value)

    def test_fraction_text(self):
        """Test fractions print as num/den."""
        assert fraction_text(Fraction(2, 6)) == "1/3"


class TestErrors:
    """Test cases for the error hierarchy."""

    def test_configuration_error_is_value_error(self):
        """Test ConfigurationError can be caught as ValueError and SimulationError."""
        error = ConfigurationError("bad value", "config.delta")

        assert isinstance(error, ValueError)
        assert isinstance(error, SimulationError)
        assert str(error) == "config.delta: bad value"

    def test_configuration_error_without_location(self):
        """Test the message is unchanged without a location."""
        assert str(ConfigurationError("bad value")) == "bad value"


if __name__ == "__main__":
    pytest.main([__file__])
