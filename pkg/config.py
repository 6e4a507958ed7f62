"""
Runtime Settings

Environment-backed settings for the simulator, the CLI and the report viewer.
Values are read once from the process environment (and a local .env file).

Optional environment variables:
- PCL_LOG_LEVEL: logging level name (default WARNING)
- PCL_INNER_LOOP_CAP: oracle-interaction iterations allowed per player and timeslot (default 10000)
- PCL_SEARCH_CAP: largest transaction set searched exhaustively (default 20)
- PCL_TRACE_DIR: directory for trace files (default traces)
- PCL_REPORT_DIR: directory for suite reports (default reports)
- PCL_WORKERS: worker processes used by the suite runner (default 1)
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    log_level: str = "WARNING"
    inner_loop_cap: int = 10000
    search_cap: int = 20
    trace_dir: str = "traces"
    report_dir: str = "reports"
    workers: int = 1

    @property
    def log_level_number(self) -> int:
        return getattr(logging, self.log_level)


def _positive_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be a positive integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be a positive integer, got {raw!r}")
    return value


def load_settings() -> Settings:
    """Build a Settings object from the environment, validating every value."""
    log_level = os.getenv("PCL_LOG_LEVEL", "WARNING").strip().upper()
    if log_level not in _LOG_LEVELS:
        raise ValueError(f"PCL_LOG_LEVEL must be one of {', '.join(_LOG_LEVELS)}, got {log_level!r}")
    return Settings(
        log_level=log_level,
        inner_loop_cap=_positive_int("PCL_INNER_LOOP_CAP", 10000),
        search_cap=_positive_int("PCL_SEARCH_CAP", 20),
        trace_dir=os.getenv("PCL_TRACE_DIR", "traces"),
        report_dir=os.getenv("PCL_REPORT_DIR", "reports"),
        workers=_positive_int("PCL_WORKERS", 1),
    )


_settings_instance: Optional[Settings] = None


def get_settings() -> Settings:
    """Get the global settings instance (singleton pattern)."""
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = load_settings()
    return _settings_instance


def reset_settings() -> None:
    """Forget the cached settings so the next call re-reads the environment."""
    global _settings_instance
    _settings_instance = None
