"""
SPARQL^ML query endpoint.

SELECT statements return SPARQL JSON results (with the chosen plan under
``plan``); INSERT ... TrainGML and DELETE return metadata JSON.
"""

from fastapi import APIRouter, Depends, Request
from pydantic import ValidationError
from starlette.concurrency import run_in_threadpool

from schemas.sparqlmlschema import SparqlMlRequest
from services import query_manager_service
from services.platform_service import Platform
from utils.dependencies import get_platform
from utils.errors import QuerySemanticError

router = APIRouter(prefix="/sparqlml")


async def _read_request(request: Request) -> SparqlMlRequest:
    if request.headers.get("content-type", "").startswith("application/json"):
        payload = await request.json()
    else:
        payload = dict(await request.form())
    try:
        return SparqlMlRequest(**payload)
    except ValidationError as exc:
        raise QuerySemanticError("invalid SPARQL^ML request", errors=exc.errors(include_url=False)) from exc


# Query Endpoint
@router.post("/query")
async def sparqlml_query(request: Request, platform: Platform = Depends(get_platform)):
    """
    Run one SPARQL^ML statement.

    The body is JSON or form-encoded with a ``query`` field and optional
    ``objective``, ``max_time_ms``, ``min_accuracy`` and ``lenient``.

    Args:
        request (Request): incoming request.
        platform (Platform): running platform.

    Returns:
        dict: SPARQL JSON results for SELECT; training metadata for
        INSERT; deleted model URIs for DELETE.

    Raises:
        QuerySyntaxError, QuerySemanticError, NoModelMatches,
        InfeasibleModelChoice, InferenceError and training errors.
    """
    body = await _read_request(request)
    outcome = await run_in_threadpool(
        query_manager_service.run, platform, body.query, body.objective, body.max_time_ms,
        body.min_accuracy, body.lenient)
    return outcome.to_json()
