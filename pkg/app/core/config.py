"""
Configuration management for the Dirac Constraint Analyzer.
Follows 12-factor app principles with environment variable validation.
"""
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

PROJECT_ROOT = Path(__file__).resolve().parents[2]


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables and .env file.

    Algebra limits (degree cap, chain order) are read by every analysis stage.
    The CLI overrides the degree cap through DEGREE_CAP and the chain order per
    model.
    """

    # Application
    app_env: Literal["development", "staging", "production"] = "development"
    app_debug: bool = False
    app_host: str = "0.0.0.0"
    app_port: int = 8000
    app_title: str = "Dirac Constraint Analyzer"
    app_version: str = "0.1.0"

    # Algebra engine
    degree_cap: int = 12
    max_chain_order: int = 6
    default_dim: int = 4
    strict_pivots: bool = False

    # Corpus and reports
    corpus_path: Path = PROJECT_ROOT / "data" / "corpus"
    output_dir: Path = Path("./reports")

    # Logging
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    @field_validator("degree_cap", "max_chain_order", "default_dim")
    @classmethod
    def validate_positive(cls, v):
        """Engine limits must be at least 1."""
        if v < 1:
            raise ValueError("Value must be positive")
        return v


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """
    Get cached settings instance.

    In testing, clear cache with: get_settings.cache_clear()

    Returns:
        Settings: Application settings validated and loaded from environment
    """
    return Settings()
