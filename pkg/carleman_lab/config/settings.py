"""
Configuration settings using pydantic-settings.

Loads CARLEMAN_LAB_* environment variables (and a .env file) with strict validation.
"""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="CARLEMAN_LAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Parallelism
    threads: int = Field(
        default=4,
        ge=1,
        description="Upper bound on worker threads for battery sweeps",
    )

    # Output Configuration
    output_dir: Path = Field(
        default=Path("./output"),
        description="Directory for reports, tables and metadata",
    )
    log_level: str = Field(
        default="INFO",
        description="Root log level for the command-line entry point",
    )

    # Numerics
    tau0: float = Field(
        default=1.0,
        gt=0,
        description="Smallest admissible Carleman parameter tau",
    )
    default_grid_size: int = Field(
        default=161,
        ge=33,
        description="Nodes per axis of the standard box grid",
    )
    quick_grid_size: int = Field(
        default=97,
        ge=33,
        description="Nodes per axis under --quick",
    )
    spectrum_nodes: int = Field(
        default=4000,
        ge=100,
        description="Angular nodes of the Sturm-Liouville eigensolver",
    )


# Singleton instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get or create the settings singleton."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the singleton so the next get_settings() re-reads the environment."""
    global _settings
    _settings = None
