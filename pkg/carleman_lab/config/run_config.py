"""
Run configuration for the command-line entry point.

A JSON config file mirrors every flag; flags given on the command line win.
"""

import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from carleman_lab.config.settings import get_settings
from carleman_lab.core.battery import Family
from carleman_lab.core.errors import ConfigurationError

logger = logging.getLogger(__name__)

Subcommand = Literal["spectrum", "extend", "carleman", "trace", "doubling", "verify"]

MIN_GRID_SIZE: dict[str, int] = {
    "spectrum": 0,
    "extend": 33,
    "carleman": 49,
    "trace": 33,
    "doubling": 49,
    "verify": 49,
}


class RunConfig(BaseModel):
    """Validated parameters of one CLI run."""

    subcommand: Subcommand
    s: list[float] = Field(default_factory=lambda: [0.5], description="Orders s in (0, 1)")
    tau: list[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0], description="Carleman parameters")
    k_max: int = Field(default=6, ge=0, le=12, description="Highest spectral index")
    k: int = Field(default=2, ge=0, le=6, description="Degree of the homogeneous family")
    grid_size: int | None = Field(default=None, description="Nodes per axis (default from settings)")
    radii: list[float] | None = Field(default=None, description="Radii for doubling ratios")
    family: Family = Field(default=Family.ANNULAR, description="Test-function family")
    seed: int = Field(default=0, ge=0, description="Seed for randomized families")
    out: Path | None = Field(default=None, description="Output directory (default from settings)")
    quick: bool = Field(default=False, description="Reduced resolution and battery")
    input: Path | None = Field(default=None, description="Boundary samples CSV for 'extend'")

    @field_validator("s")
    @classmethod
    def _check_s(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("at least one s is required")
        for s in values:
            if not 0.0 < s < 1.0:
                raise ValueError(f"s must lie in (0, 1), got {s}")
        return values

    @field_validator("radii")
    @classmethod
    def _check_radii(cls, values: list[float] | None) -> list[float] | None:
        if values is not None and any(r <= 0 for r in values):
            raise ValueError("radii must be positive")
        return values

    @model_validator(mode="after")
    def _check_against_settings(self) -> "RunConfig":
        settings = get_settings()
        for tau in self.tau:
            if tau < settings.tau0:
                raise ValueError(f"tau={tau} is below tau0={settings.tau0}")
        minimum = MIN_GRID_SIZE[self.subcommand]
        if self.grid_size is not None and self.grid_size < minimum:
            raise ValueError(f"'{self.subcommand}' needs grid_size >= {minimum}, got {self.grid_size}")
        return self

    @property
    def resolved_grid_size(self) -> int:
        settings = get_settings()
        if self.grid_size is not None:
            return self.grid_size
        return settings.quick_grid_size if self.quick else settings.default_grid_size

    @property
    def output_dir(self) -> Path:
        return Path(self.out or get_settings().output_dir)

    @classmethod
    def from_sources(cls, config_path: Path | None, overrides: dict[str, Any]) -> "RunConfig":
        """
        Merge a JSON config file with explicitly given flags.

        Args:
            config_path: Optional JSON file with the same keys as the flags.
            overrides: Flag values; None means "not given".

        Returns:
            The validated configuration.

        Raises:
            ConfigurationError: On unreadable files or invalid values.
        """
        data: dict[str, Any] = {}
        if config_path is not None:
            try:
                data = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigurationError(f"cannot read config file {config_path}: {e}") from e
            if not isinstance(data, dict):
                raise ConfigurationError(f"config file {config_path} must hold a JSON object")
            logger.debug(f"Loaded config file {config_path}: {sorted(data)}")

        data.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"invalid configuration: {e}") from e
