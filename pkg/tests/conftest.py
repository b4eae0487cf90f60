"""
Shared fixtures.

Corpus models are parsed and analyzed once per session; the analyses are
deterministic, so tests share the results.
"""
from functools import lru_cache

import pytest

from app.core.config import get_settings
from app.parser import Model, parse_model
from app.stages import AnalysisPipeline, PipelineResult, StageRegistry

FREE_PARTICLE = """
model free_particle
coords q1
lagrangian (1/2)*u1^2
"""

MASSLESS_PARTICLE = """
model massless_particle
vector x
coords e
dim 4
assume e nonzero
lagrangian dot(ux, ux)/(2*e)
"""

INLINE = {"free_particle": FREE_PARTICLE, "massless_particle": MASSLESS_PARTICLE}


@lru_cache(maxsize=None)
def _model(name: str) -> Model:
    if name in INLINE:
        return parse_model(INLINE[name])
    path = get_settings().corpus_path / f"{name}.model"
    return parse_model(path.read_text(encoding="utf-8"))


@lru_cache(maxsize=None)
def _analysis(name: str) -> PipelineResult:
    return AnalysisPipeline(StageRegistry()).run(_model(name))


@pytest.fixture(scope="session")
def load():
    """Parsed model by corpus or inline name."""
    return _model


@pytest.fixture(scope="session")
def analyzed():
    """Full pipeline result by corpus or inline name."""
    return _analysis


@pytest.fixture
def clean_settings():
    """Settings cache cleared before and after the test."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
