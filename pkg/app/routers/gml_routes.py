"""
GML-as-a-Service JSON API.

Training, the artifact registry, inference and the embedding store. Every
request and response body carries ``"v": 1``.
"""

from diskcache import Cache
from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from db import get_db
from schemas.gmlschema import (DeleteBatchRequest, DeleteBatchResponse, DeleteResponse, InferLinksRequest,
                               InferLinksResponse, InferNodeClassRequest, InferNodeClassResponse, KnnRequest,
                               KnnResponse, MethodEstimate, MethodsRequest, ModelInfo, ModelList, TrainRequest,
                               TrainResponse)
from services import gmlaas_service
from utils.dependencies import get_cache, get_profiles
from utils.errors import EmbeddingQueryError

router = APIRouter(prefix="/gml")


# Training Endpoint
@router.post("/train", response_model=TrainResponse)
def train(request: TrainRequest, db: Session = Depends(get_db), profiles=Depends(get_profiles)):
    """
    Train a model on a dataset package.

    Args:
        request (TrainRequest): TrainGML JSON and the package path.
        db (Session): artifact registry session.
        profiles (list): method profiles.

    Returns:
        TrainResponse: artifact reference, chosen method and metrics.

    Raises:
        BudgetInfeasible: no method fits the budget.
        TrainingError: the package cannot be trained on.
        PackageError: the package is missing or tampered.
    """
    return gmlaas_service.train_from_request(db, request, profiles)


@router.get("/methods", response_model=list[MethodEstimate])
def list_methods(profiles=Depends(get_profiles)):
    """Method profiles with estimates on an empty dataset."""
    return gmlaas_service.list_methods(profiles)


@router.post("/methods", response_model=list[MethodEstimate])
def estimate_methods(request: MethodsRequest, profiles=Depends(get_profiles)):
    """Method profiles with estimates on the given statistics and budget."""
    return gmlaas_service.list_methods(profiles, request.stats, request.budget)


# Registry Endpoints
@router.get("/models", response_model=ModelList)
def list_models(db: Session = Depends(get_db)):
    """Every stored artifact, oldest first."""
    return gmlaas_service.list_models(db)


@router.get("/models/{artifact_ref}", response_model=ModelInfo)
def get_model(artifact_ref: str, db: Session = Depends(get_db)):
    """Metadata of one artifact; 404 when unknown."""
    return gmlaas_service.get_model(db, artifact_ref)


@router.delete("/models/{artifact_ref}", response_model=DeleteResponse)
def delete_model(artifact_ref: str, db: Session = Depends(get_db), cache: Cache = Depends(get_cache)):
    """Remove an artifact with its embeddings and cached predictions."""
    return gmlaas_service.delete_artifact(db, artifact_ref, cache)


@router.post("/models/delete", response_model=DeleteBatchResponse)
def delete_models(request: DeleteBatchRequest, db: Session = Depends(get_db), cache: Cache = Depends(get_cache)):
    """Remove several artifacts at once; an unknown ref removes none (404)."""
    return DeleteBatchResponse(deleted=gmlaas_service.delete_artifacts(db, request.artifact_refs, cache))

# Inference Endpoints
@router.post("/infer/nodeclass", response_model=InferNodeClassResponse)
def infer_node_class(request: InferNodeClassRequest, db: Session = Depends(get_db),
                     cache: Cache = Depends(get_cache)):
    """
    Predicted label per target node.

    Omitting ``targets`` returns predictions for every node the model
    covers (the dictionary plan).
    """
    return gmlaas_service.infer_node_class(db, request.model, request.targets, cache)


@router.post("/infer/links", response_model=InferLinksResponse)
def infer_links(request: InferLinksRequest, db: Session = Depends(get_db), cache: Cache = Depends(get_cache)):
    """Top-``k`` predicted destinations per source node."""
    return gmlaas_service.infer_links(db, request.model, request.sources, request.k, cache)


@router.post("/knn", response_model=KnnResponse)
def knn(request: KnnRequest, db: Session = Depends(get_db)):
    """
    Nearest neighbours by cosine similarity.

    Args:
        request (KnnRequest): ``query`` (IRI or vector) or a ``queries``
            batch, and ``k``.
        db (Session): artifact registry session.

    Returns:
        KnnResponse: one hit list per query; unknown IRIs are listed as
        unresolved.

    Raises:
        EmbeddingQueryError: no query given, a zero vector or a
            dimension mismatch.
    """
    queries = request.queries if request.queries is not None else (
        [request.query] if request.query is not None else None)
    if queries is None:
        raise EmbeddingQueryError("knn needs 'query' or 'queries'")
    return gmlaas_service.knn(db, request.model, queries, request.k)
