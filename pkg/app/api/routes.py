"""
API route definitions for the Dirac Constraint Analyzer.

Routes:
- /api/v1/health - System health check
- /api/v1/stages - Registered analysis stages
- /api/v1/corpus - Bundled models
- /api/v1/analyze - Analyze an inline model

Status codes: 400 for model files that do not parse, 404 for unknown corpus
models, 422 when an analysis stage fails. A model with second-class
constraints is a result, not a failure: its report comes back with 200.
"""
import logging
from typing import Annotated

from fastapi import APIRouter, Depends, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from app.core.config import Settings, get_settings
from app.core.exceptions import ModelError, SecondClassPresent
from app.models import AnalyzeRequest, AnalyzeResponse, Stage
from app.parser import Model, parse_model
from app.report import build_report
from app.stages import AnalysisPipeline, StageRegistry, get_stage_registry

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1", tags=["constraint-analysis"])


# Dependency injection
def get_stage_registry_dep() -> StageRegistry:
    """Dependency to inject the stage registry."""
    return get_stage_registry()


def _parse(source: str) -> Model:
    try:
        return parse_model(source)
    except ModelError as e:
        logger.warning(f"Rejected model: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


async def _analyze(model: Model, stage: Stage, registry: StageRegistry) -> AnalyzeResponse:
    result = await run_in_threadpool(AnalysisPipeline(registry).run, model, stage)
    failure = result.failure
    if failure is not None and failure.error_type != SecondClassPresent.__name__:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"{failure.stage.value} stage failed: {failure.error_message}",
        )
    return AnalyzeResponse(
        report=build_report(result).model_dump(by_alias=True),
        stages=result.outputs,
    )


# ============================================================================
# Health & Status Endpoints
# ============================================================================

@router.get(
    "/health",
    response_model=dict,
    summary="Health Check",
    description="Check if the API is running and accessible"
)
async def health_check(settings: Annotated[Settings, Depends(get_settings)]) -> dict:
    """
    Health check endpoint.

    Returns:
        dict: Status and version information
    """
    return {
        "status": "healthy",
        "app_name": settings.app_title,
        "version": settings.app_version,
        "environment": settings.app_env
    }


@router.get("/stages", summary="List Analysis Stages")
async def list_stages(registry=Depends(get_stage_registry_dep)) -> dict:
    """Stage catalog in pipeline order."""
    stages = registry.list_stages()
    return {"stages": stages, "count": len(stages)}


# ============================================================================
# Analysis Endpoints
# ============================================================================

@router.post(
    "/analyze",
    response_model=AnalyzeResponse,
    summary="Analyze Model",
    description="Run the constraint analysis on a model file posted inline"
)
async def analyze(
    request: AnalyzeRequest,
    registry=Depends(get_stage_registry_dep)
) -> AnalyzeResponse:
    """
    Analyze an inline model up to the requested stage.

    Example:
        POST /api/v1/analyze
        {
            "source": "model cawley\\ncoords q1 q2 q3\\nlagrangian ...",
            "stage": "all"
        }
    """
    model = _parse(request.source)
    logger.info(f"Analysis request for '{model.name}' up to {request.stage.value}")
    return await _analyze(model, request.stage, registry)


@router.get("/corpus", summary="List Bundled Models")
async def list_corpus(settings: Annotated[Settings, Depends(get_settings)]) -> dict:
    """Names of the bundled corpus models."""
    names = sorted(p.stem for p in settings.corpus_path.glob("*.model"))
    return {"models": names, "count": len(names)}


@router.post(
    "/corpus/{name}",
    response_model=AnalyzeResponse,
    summary="Analyze Bundled Model"
)
async def analyze_corpus_model(
    name: str,
    settings: Annotated[Settings, Depends(get_settings)],
    stage: Stage = Stage.ALL,
    registry=Depends(get_stage_registry_dep)
) -> AnalyzeResponse:
    """
    Analyze one of the bundled models.

    Status Codes:
        200: Report produced
        404: No bundled model of that name
        422: An analysis stage failed
    """
    paths = {p.stem: p for p in settings.corpus_path.glob("*.model")}
    if name not in paths:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown model '{name}'")
    model = _parse(paths[name].read_text(encoding="utf-8"))
    return await _analyze(model, stage, registry)
