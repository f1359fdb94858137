"""
Read-only SPARQL 1.1 protocol endpoint over the embedded store.

Remote-endpoint code paths (sampler, planner, governor) can be pointed at
this loopback so they run against the platform's own graphs. Updates are
refused.
"""

from typing import Optional

from fastapi import APIRouter, Depends, Form, Query
from fastapi.responses import JSONResponse, Response

from schemas.rdfschema import BindingTable
from services.platform_service import Platform
from services.rdf_store_service import serialize_triples, to_sparql_json
from services.sparql_client_service import N_TRIPLES, SPARQL_JSON
from utils.dependencies import get_platform
from utils.errors import QuerySemanticError, ReadOnlyEndpoint

router = APIRouter(prefix="/sparql")


def _answer(platform: Platform, query: Optional[str], update: Optional[str], default_graph: Optional[str]):
    if update:
        raise ReadOnlyEndpoint("this endpoint is read-only; updates are not accepted")
    if not query:
        raise QuerySemanticError("missing 'query' parameter")
    result = platform.store.query(default_graph or platform.config.data_graph, query)
    if isinstance(result, BindingTable):
        return JSONResponse(to_sparql_json(result), media_type=SPARQL_JSON)
    if isinstance(result, bool):
        return JSONResponse({"head": {}, "boolean": result}, media_type=SPARQL_JSON)
    return Response(serialize_triples(result), media_type=N_TRIPLES)


# Query Endpoint (GET)
@router.get("")
def sparql_get(
    query: Optional[str] = Query(None),
    update: Optional[str] = Query(None),
    default_graph_uri: Optional[str] = Query(None, alias="default-graph-uri"),
    platform: Platform = Depends(get_platform),
):
    """
    Evaluate a SPARQL query passed as a URL parameter.

    Args:
        query (str): SPARQL SELECT, ASK or CONSTRUCT text.
        update (str): rejected when present.
        default_graph_uri (str): named graph used as the default graph;
            the data graph when omitted.

    Returns:
        Response: SPARQL JSON results, or N-Triples for CONSTRUCT.

    Raises:
        ReadOnlyEndpoint: an update was sent.
        QuerySyntaxError: the query cannot be evaluated.
    """
    return _answer(platform, query, update, default_graph_uri)


# Query Endpoint (POST form)
@router.post("")
def sparql_post(
    query: Optional[str] = Form(None),
    update: Optional[str] = Form(None),
    default_graph_uri: Optional[str] = Form(None, alias="default-graph-uri"),
    platform: Platform = Depends(get_platform),
):
    """Same as GET, with ``application/x-www-form-urlencoded`` parameters."""
    return _answer(platform, query, update, default_graph_uri)
