"""
Tests for FastAPI endpoint definitions.

Test coverage:
- Request/response validation
- HTTP status codes
- Error handling
- Integration with the stage pipeline
"""
import httpx
import pytest
from fastapi.testclient import TestClient

from app.core.config import get_settings
from main import create_app
from tests.conftest import FREE_PARTICLE

CAWLEY = (get_settings().corpus_path / "cawley.model").read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as test_client:
        yield test_client


class TestHealthEndpoint:
    """Test health check endpoint."""

    def test_health_check_200(self, client):
        """Test that health check returns 200 OK."""
        response = client.get("/api/v1/health")
        assert response.status_code == 200

    def test_health_check_response_format(self, client):
        """Test health check response structure."""
        body = client.get("/api/v1/health").json()
        assert body["status"] == "healthy"
        assert {"app_name", "version", "environment"} <= set(body)

    def test_root(self, client):
        """Test the root endpoint points at the docs."""
        assert client.get("/").json()["docs"] == "/docs"


class TestStagesEndpoint:
    """Test the stage catalog."""

    def test_list_stages(self, client):
        """Test that the four stages are listed in order."""
        body = client.get("/api/v1/stages").json()
        assert body["count"] == 4
        assert [s["name"] for s in body["stages"]] == [
            "lagrangian", "canonical", "brackets", "conjecture",
        ]


class TestAnalyzeEndpoint:
    """Test inline model analysis."""

    def test_analyze_valid_model(self, client):
        """Test an inline model runs through every stage."""
        response = client.post("/api/v1/analyze", json={"source": CAWLEY})
        assert response.status_code == 200
        body = response.json()
        assert body["report"]["model"] == "cawley"
        assert body["report"]["rank"] == 2
        assert [s["stage"] for s in body["stages"]] == [
            "lagrangian", "canonical", "brackets", "conjecture",
        ]

    def test_analyze_partial(self, client):
        """Test the stage field limits the run."""
        response = client.post(
            "/api/v1/analyze", json={"source": FREE_PARTICLE, "stage": "lagrangian"}
        )
        assert response.status_code == 200
        assert len(response.json()["stages"]) == 1

    def test_analyze_parse_error_400(self, client):
        """Test that malformed models return 400 with the position."""
        response = client.post(
            "/api/v1/analyze", json={"source": "model x\ncoords q1\nlagrangian u1 +\n"}
        )
        assert response.status_code == 400
        assert "line 3" in response.json()["detail"]

    def test_analyze_empty_source_422(self, client):
        """Test request validation rejects an empty source."""
        response = client.post("/api/v1/analyze", json={"source": ""})
        assert response.status_code == 422

    def test_analyze_invalid_stage_422(self, client):
        """Test request validation rejects unknown stages."""
        response = client.post("/api/v1/analyze", json={"source": FREE_PARTICLE, "stage": "x"})
        assert response.status_code == 422

    def test_analyze_stage_failure_422(self, client):
        """Test that a failing stage returns 422."""
        source = "model n\ncoords q1 q2\nlagrangian u1^3 + u2\n"
        response = client.post("/api/v1/analyze", json={"source": source})
        assert response.status_code == 422
        assert "canonical stage failed" in response.json()["detail"]


class TestCorpusEndpoints:
    """Test bundled model endpoints."""

    def test_list_corpus(self, client):
        """Test the corpus listing."""
        body = client.get("/api/v1/corpus").json()
        assert "cawley" in body["models"]
        assert body["count"] == len(body["models"])

    def test_analyze_corpus_model(self, client):
        """Test analyzing a bundled model by name."""
        response = client.post("/api/v1/corpus/cawley")
        assert response.status_code == 200
        assert response.json()["report"]["conjecture"]["verdict"] == "NOT_PETR"

    def test_second_class_is_a_result(self, client):
        """Test that a refused conjecture stage still returns the report."""
        response = client.post("/api/v1/corpus/second_class")
        assert response.status_code == 200
        report = response.json()["report"]
        assert report["conjecture"] is None
        assert report["class"]["second"]

    def test_unknown_corpus_model_404(self, client):
        """Test unknown names return 404."""
        assert client.post("/api/v1/corpus/nope").status_code == 404


class TestAsyncClient:
    """Test the routes through an async client."""

    @pytest.mark.asyncio
    async def test_corpus_listing_async(self):
        """Test the corpus listing over ASGI transport."""
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as ac:
            response = await ac.get("/api/v1/corpus")
        assert response.status_code == 200
        assert response.json()["count"] == 5

    @pytest.mark.asyncio
    async def test_partial_analysis_async(self):
        """Test a lagrangian-only run over ASGI transport."""
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as ac:
            response = await ac.post("/api/v1/corpus/frenkel", params={"stage": "lagrangian"})
        assert response.status_code == 200
        assert response.json()["report"]["rank"] == 2
