"""
FastAPI application factory and configuration.

Entry point for the Dirac Constraint Analyzer API.

Usage:
    Development:
        uvicorn main:app --reload --host 0.0.0.0 --port 8000
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api.routes import router
from app.core.config import get_settings
from app.core.exceptions import AnalyzerError, ModelError

# Configure logging
logging.basicConfig(
    level=getattr(logging, get_settings().log_level.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


# =============================================================================
# Lifespan Context Manager
# =============================================================================

@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Manage application startup and shutdown.

    Startup registers the analysis stages and checks that the bundled corpus
    is present.
    """
    logger.info("=" * 80)
    logger.info("Starting Dirac Constraint Analyzer API")
    logger.info("=" * 80)

    settings = get_settings()
    logger.info(f"Environment: {settings.app_env}")
    logger.info(f"Degree cap: {settings.degree_cap}, chain order: {settings.max_chain_order}")

    from app.stages import get_stage_registry
    registry = get_stage_registry()
    logger.info(f"✓ Stage registry initialized ({len(registry.list_stages())} stages)")

    corpus = sorted(settings.corpus_path.glob("*.model"))
    if corpus:
        logger.info(f"✓ Corpus at {settings.corpus_path} ({len(corpus)} models)")
    else:
        logger.warning(f"No corpus models found at {settings.corpus_path}")

    yield

    logger.info("Shutting down Dirac Constraint Analyzer API")


# =============================================================================
# FastAPI Application
# =============================================================================

def create_app() -> FastAPI:
    """
    Create and configure the FastAPI application.

    Returns:
        FastAPI: Configured application instance
    """
    settings = get_settings()

    app = FastAPI(
        title=settings.app_title,
        description=(
            "Dirac-Bergmann constraint analysis of finite-dimensional gauge Lagrangians "
            "and a decision procedure for the physical equivalence of Dirac transformations."
        ),
        version=settings.app_version,
        docs_url="/docs",
        redoc_url="/redoc",
        openapi_url="/openapi.json",
        lifespan=lifespan
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"] if settings.app_debug else ["http://localhost:3000"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # =========================================================================
    # Exception Handlers
    # =========================================================================

    @app.exception_handler(ModelError)
    async def model_error_handler(request, exc):
        """Model files that do not parse."""
        logger.warning(f"Model error: {exc}")
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(AnalyzerError)
    async def analyzer_error_handler(request, exc):
        """Analysis failures outside the pipeline's own reporting."""
        logger.warning(f"Analysis error: {exc}")
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    app.include_router(router)

    @app.get("/", tags=["root"])
    async def root():
        """Root endpoint with API information."""
        return {
            "message": "Dirac Constraint Analyzer API",
            "version": settings.app_version,
            "docs": "/docs",
            "status_url": "/api/v1/health"
        }

    logger.info("FastAPI application created successfully")
    return app


# Create application instance
app = create_app()


if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        app,
        host=settings.app_host,
        port=settings.app_port,
        reload=settings.app_debug,
        log_level=settings.log_level.lower()
    )
