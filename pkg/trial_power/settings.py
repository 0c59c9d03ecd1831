"""Environment-driven runtime settings.

Values are read from the process environment, after ``load_dotenv()`` has
merged any ``.env`` file found next to the working directory.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()

__all__ = ["Settings", "get_settings", "configure_logging", "LOG_FORMAT"]

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class Settings:
    workers: int
    log_level: str
    quad_tol: float


def get_settings() -> Settings:
    """Read the current environment (not cached, so tests can monkeypatch it)."""
    workers = int(os.getenv("TRIAL_POWER_WORKERS", "1"))
    return Settings(
        workers=max(1, workers),
        log_level=os.getenv("TRIAL_POWER_LOG_LEVEL", "WARNING").upper(),
        quad_tol=float(os.getenv("TRIAL_POWER_QUAD_TOL", "1e-7")),
    )


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level, logging.WARNING)
    logging.basicConfig(level=level, format=LOG_FORMAT)
