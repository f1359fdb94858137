"""Routes for inspecting and exporting KGMeta."""

from typing import Optional

from fastapi import APIRouter, Depends, Query
from fastapi.responses import Response

from schemas.kgmetaschema import ModelMetadata
from services.platform_service import Platform
from services.sparql_client_service import N_TRIPLES
from utils.dependencies import get_platform
from utils.enums import TaskType

router = APIRouter(prefix="/kgmeta")


@router.get("/models", response_model=list[ModelMetadata])
def list_models(task_type: Optional[TaskType] = Query(None), platform: Platform = Depends(get_platform)):
    """
    Models registered in KGMeta.

    Args:
        task_type (TaskType): only models of this task when given.
        platform (Platform): running platform.

    Returns:
        list[ModelMetadata]: sorted by model URI.
    """
    if task_type is not None:
        return platform.governor.lookup_models(task_type)
    return platform.governor.list_models()


@router.get("/export")
def export_kgmeta(platform: Platform = Depends(get_platform)):
    """The KGMeta graph as canonical N-Triples."""
    return Response(platform.governor.export_ntriples(), media_type=N_TRIPLES)
