"""
Configuration Management
Runtime settings for the simulation CLI and service
"""

import logging
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings"""

    # Output Configuration
    output_dir: Path = Field(Path("results"), description="Default output directory for simulate/sweep/analyze")
    snapshot_binary: bool = Field(False, description="Write snapshots as .npy instead of CSV by default")

    # Execution Configuration
    jobs: int = Field(1, ge=1, description="Default worker pool size for ensemble runs")

    # Server Configuration
    host: str = Field("0.0.0.0", description="Server host")
    port: int = Field(8000, description="Server port")
    debug: bool = Field(False, description="Debug mode")
    max_service_steps: int = Field(20000, ge=1, description="Largest step count accepted by the HTTP surface")

    # Logging Configuration
    log_level: str = Field("INFO", description="Logging level")

    model_config = SettingsConfigDict(
        env_prefix="CORRIDOR_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings


def configure_logging(level: str = None) -> None:
    """Configure root logging from settings"""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
