"""
Knowledge graph ingestion and inspection routes.

This module provides API endpoints to:
- Upload N-Triples files into a named graph of the embedded store.
- List the stored graphs with their triple counts.
- Export one graph as canonical N-Triples.
"""

import logging
from typing import Optional

from fastapi import APIRouter, Depends, Form, Query, UploadFile
from fastapi.responses import Response

from services.platform_service import Platform
from services.rdf_store_service import graph_stats, read_ntriples_upload
from services.sparql_client_service import N_TRIPLES
from utils.dependencies import get_platform
from utils.errors import QuerySemanticError
from utils.namespaces import is_absolute_iri

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/kg")


def _graph_name(platform: Platform, graph: Optional[str]) -> str:
    graph = graph or platform.config.data_graph
    if not is_absolute_iri(graph):
        raise QuerySemanticError(f"graph name must be an absolute IRI: {graph}", graph=graph)
    return graph


# Upload Endpoint
@router.post("/upload")
async def upload_ntriples(
    file: UploadFile,
    graph: Optional[str] = Form(None),
    platform: Platform = Depends(get_platform),
):
    """
    Load an uploaded N-Triples file into a named graph.

    Args:
        file (UploadFile): UTF-8 N-Triples.
        graph (str): target graph IRI; the data graph when omitted.
        platform (Platform): running platform.

    Returns:
        dict: graph name, triples parsed and triples newly added.

    Raises:
        NTriplesParseError: with the offending line number.
    """
    graph = _graph_name(platform, graph)
    triples = read_ntriples_upload(await file.read())
    added = platform.store.insert(graph, triples)
    platform.save()
    logger.info("upload %s into <%s>: %d parsed, %d new", file.filename, graph, len(triples), added)
    return {"graph": graph, "parsed": len(triples), "added": added}


@router.get("/graphs")
def list_graphs(platform: Platform = Depends(get_platform)):
    """Named graphs of the embedded store with their sizes."""
    return {"graphs": graph_stats(platform.store)}


@router.get("/export")
def export_graph(graph: Optional[str] = Query(None), platform: Platform = Depends(get_platform)):
    """Canonical N-Triples of one graph (the data graph by default)."""
    graph = _graph_name(platform, graph)
    return Response(platform.store.serialize_ntriples(graph), media_type=N_TRIPLES)
