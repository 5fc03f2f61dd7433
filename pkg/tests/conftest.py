"""Shared fixtures."""

import numpy as np
import pytest

from carleman_lab.config.settings import reset_settings
from carleman_lab.core.battery import battery_grid
from carleman_lab.core.grid import FractionalParams


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test sees default settings; env overrides are per test."""
    for name in ("THREADS", "OUTPUT_DIR", "LOG_LEVEL", "TAU0", "DEFAULT_GRID_SIZE",
                 "QUICK_GRID_SIZE", "SPECTRUM_NODES"):
        monkeypatch.delenv(f"CARLEMAN_LAB_{name}", raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def half_grid():
    """Standard box at s = 1/2, moderate resolution."""
    return battery_grid(FractionalParams(0.5), 97)
