"""
Tests for settings loading.
"""
import pytest
from pydantic import ValidationError

from app.core.config import Settings, get_settings


class TestSettings:
    """Test environment overrides and validation."""

    def test_defaults(self, clean_settings, monkeypatch):
        """Engine limits default to a cap of 12 and chains of order 6."""
        monkeypatch.delenv("DEGREE_CAP", raising=False)
        monkeypatch.delenv("MAX_CHAIN_ORDER", raising=False)
        settings = get_settings()
        assert settings.degree_cap == 12
        assert settings.max_chain_order == 6

    def test_environment_is_case_insensitive(self, clean_settings, monkeypatch):
        """Lower-case variable names override the defaults too."""
        monkeypatch.setenv("degree_cap", "7")
        monkeypatch.setenv("STRICT_PIVOTS", "true")
        settings = get_settings()
        assert settings.degree_cap == 7
        assert settings.strict_pivots is True

    def test_limits_must_be_positive(self, monkeypatch):
        """A zero chain order is rejected."""
        monkeypatch.setenv("MAX_CHAIN_ORDER", "0")
        with pytest.raises(ValidationError):
            Settings()

    def test_env_file_is_configured(self):
        """Settings read .env files as UTF-8."""
        assert Settings.model_config["env_file"] == ".env"
        assert Settings.model_config["env_file_encoding"] == "utf-8"
        assert Settings.model_config["case_sensitive"] is False
