"""
GML-as-a-Service: training, artifact registry and inference.

Artifacts are rows of ``trained_models`` holding the method's serialized
state, so any process sharing the database answers identically. Training
requests with the same task name are serialized; inference only reads.
Whole-model predictions (the dictionary plan) are cached with diskcache,
tagged by artifact so a delete evicts them.
"""

import json
import logging
import threading
import uuid
from collections import defaultdict
from typing import Optional, Sequence, Union

from diskcache import Cache
from sqlalchemy.orm import Session

from models.models import TrainedModels
from schemas.datasetschema import DatasetPackage, DatasetStats
from schemas.gmlschema import (DeleteResponse, InferLinksResponse, InferNodeClassResponse, KnnHit,
                               KnnResponse, MethodEstimate, MethodProfile, ModelInfo, ModelList,
                               TrainRequest, TrainResponse)
from schemas.sparqlmlschema import Budget, TrainGmlSpec
from services import embedding_store_service, trainer_service
from services.cost_model_service import estimate_cost, fits, rank_methods, select_method
from services.dataset_transformer_service import package_read
from services.sparqlml_service import parse_train_json
from utils.enums import TaskType
from utils.errors import EmbeddingQueryError, ModelNotFound, TrainingError, WrongTaskModel

logger = logging.getLogger(__name__)

_training_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
_training_locks_guard = threading.Lock()


def _training_lock(name: str) -> threading.Lock:
    with _training_locks_guard:
        return _training_locks[name]


def _artifact(db: Session, artifact_ref: str) -> TrainedModels:
    row = db.query(TrainedModels).filter(TrainedModels.artifact_ref == artifact_ref).first()
    if row is None:
        raise ModelNotFound(f"unknown model artifact {artifact_ref}", artifact_ref=artifact_ref)
    return row


def _expect_task(row: TrainedModels, task_type: TaskType):
    if row.task_type != task_type.value:
        raise WrongTaskModel(f"{row.artifact_ref} is a {row.task_type} model, not {task_type.value}",
                             artifact_ref=row.artifact_ref)


def _info(row: TrainedModels) -> ModelInfo:
    return ModelInfo(artifact_ref=row.artifact_ref, name=row.name, task_type=TaskType(row.task_type),
                     method_name=row.method_name, target_type=row.target_type, metrics=row.metrics,
                     dataset_digest=row.dataset_digest, created_at=row.created_at)


# TRAINING
def choose_method(profiles: list[MethodProfile], spec: TrainGmlSpec, stats: DatasetStats) -> MethodProfile:
    """The override named in the task, or the budget-driven selection."""
    if not spec.method_override:
        return select_method(profiles, stats, spec.budget, spec.task_type)
    profile = next((p for p in profiles if p.name == spec.method_override), None)
    if profile is None:
        raise TrainingError(f"unknown method {spec.method_override!r}", known=sorted(p.name for p in profiles))
    if spec.task_type not in profile.tasks:
        raise TrainingError(f"method {profile.name} does not support {spec.task_type.value}")
    if not fits(estimate_cost(profile, stats), spec.budget):
        logger.warning("method %s was requested explicitly although its estimate exceeds the budget", profile.name)
    return profile


def train_model(db: Session, spec: TrainGmlSpec, pkg: DatasetPackage, profiles: list[MethodProfile],
                dataset_digest: str) -> TrainResponse:
    """
    Select a method, train it on ``pkg`` and persist the artifact.

    Raises:
        BudgetInfeasible: no method fits the budget.
        TrainingError: empty train split, too few labels, bad method.
    """
    with _training_lock(spec.name):
        profile = choose_method(profiles, spec, pkg.stats)
        estimate = estimate_cost(profile, pkg.stats)
        output = trainer_service.train(profile.name, pkg, {**profile.hyperparams, **spec.hyperparams})
        row = TrainedModels(artifact_ref=f"gml-{uuid.uuid4().hex[:20]}", name=spec.name,
                            task_type=spec.task_type.value, method_name=profile.name,
                            target_type=spec.target_node_type, state=output.state,
                            metrics={**output.metrics, "estimate": estimate.model_dump()},
                            dataset_digest=dataset_digest)
        if output.vectors:
            embedding_store_service.add_vectors(row, output.vectors)
        db.add(row)
        db.commit()
        db.refresh(row)
    logger.info("stored artifact %s for task %s", row.artifact_ref, spec.name)
    metrics = output.metrics
    return TrainResponse(artifact_ref=row.artifact_ref, name=row.name, task_type=spec.task_type,
                         method_name=profile.name, accuracy=metrics["accuracy"],
                         hits_at_10=metrics.get("hits_at_10"), mrr=metrics.get("mrr"),
                         inference_time_ms=metrics["inference_time_ms"],
                         model_cardinality=metrics["model_cardinality"], estimate=estimate,
                         dataset_digest=dataset_digest, created_at=row.created_at)


def train_from_request(db: Session, request: TrainRequest, profiles: list[MethodProfile]) -> TrainResponse:
    """``POST /gml/train``: TrainGML JSON plus a package path readable by this process."""
    spec = parse_train_json(json.dumps(request.task))
    pkg = package_read(request.package)
    return train_model(db, spec, pkg, profiles, pkg.manifest["kg_digest"])


def list_methods(profiles: list[MethodProfile], stats: Optional[DatasetStats] = None,
                 budget: Optional[Budget] = None) -> list[MethodEstimate]:
    """Profiles with estimates on ``stats`` (empty stats when omitted) under ``budget``."""
    budget = budget or Budget(max_memory_bytes=2**62, max_time_seconds=2**62)
    return rank_methods(profiles, stats or DatasetStats.empty(), budget)


# REGISTRY
def get_model(db: Session, artifact_ref: str) -> ModelInfo:
    return _info(_artifact(db, artifact_ref))


def list_models(db: Session) -> ModelList:
    rows = db.query(TrainedModels).order_by(TrainedModels.created_at, TrainedModels.artifact_ref).all()
    return ModelList(models=[_info(row) for row in rows])


def delete_artifacts(db: Session, artifact_refs: Sequence[str], cache: Optional[Cache] = None) -> list[DeleteResponse]:
    """
    Remove artifacts with their embeddings and cached predictions in one
    transaction.

    Raises:
        ModelNotFound: one of the refs is unknown; nothing is removed.
    """
    rows = [_artifact(db, ref) for ref in dict.fromkeys(artifact_refs)]
    responses = [DeleteResponse(artifact_ref=row.artifact_ref,
                                embeddings_removed=embedding_store_service.count_entries(db, row)) for row in rows]
    for row in rows:
        db.delete(row)
    db.commit()
    for response in responses:
        embedding_store_service.forget(response.artifact_ref)
        if cache is not None:
            cache.evict(response.artifact_ref)
        logger.info("deleted artifact %s (%d embeddings)", response.artifact_ref, response.embeddings_removed)
    return responses


def delete_artifact(db: Session, artifact_ref: str, cache: Optional[Cache] = None) -> DeleteResponse:
    return delete_artifacts(db, [artifact_ref], cache)[0]


# INFERENCE
def _cached(cache: Optional[Cache], key: str, artifact_ref: str, compute):
    if cache is None:
        return compute()
    value = cache.get(key)
    if value is None:
        value = compute()
        cache.set(key, value, tag=artifact_ref)
    return value


def infer_node_class(db: Session, artifact_ref: str, targets: Optional[list[str]] = None,
                     cache: Optional[Cache] = None) -> InferNodeClassResponse:
    """Label per target; ``targets=None`` answers for the model's whole cardinality."""
    row = _artifact(db, artifact_ref)
    _expect_task(row, TaskType.NodeClassifier)
    if targets is None:
        predictions = _cached(cache, f"{artifact_ref}:nodeclass", artifact_ref,
                              lambda: trainer_service.predict_node_class(row.state, None)[0])
        return InferNodeClassResponse(predictions=predictions)
    predictions, unresolved = trainer_service.predict_node_class(row.state, targets)
    return InferNodeClassResponse(predictions=predictions, unresolved=unresolved)


def infer_links(db: Session, artifact_ref: str, sources: Optional[list[str]] = None, k: int = 10,
                cache: Optional[Cache] = None) -> InferLinksResponse:
    """Top-``k`` destinations per source."""
    row = _artifact(db, artifact_ref)
    _expect_task(row, TaskType.LinkPredictor)
    if sources is None:
        predictions = _cached(cache, f"{artifact_ref}:links:{k}", artifact_ref,
                              lambda: trainer_service.predict_links(row.state, None, k)[0])
        return InferLinksResponse(predictions=predictions)
    predictions, unresolved = trainer_service.predict_links(row.state, sources, k)
    return InferLinksResponse(predictions=predictions, unresolved=unresolved)


def knn(db: Session, artifact_ref: str, queries: Sequence[Union[str, Sequence[float]]], k: int) -> KnnResponse:
    """
    Batch nearest-neighbour search; unknown node IRIs are listed as
    unresolved and get an empty result list.
    """
    row = _artifact(db, artifact_ref)
    _expect_task(row, TaskType.NodeSimilarity)
    results, unresolved = [], []
    for query in queries:
        try:
            hits = embedding_store_service.knn(db, row, query, k)
        except EmbeddingQueryError:
            if not isinstance(query, str):
                raise
            unresolved.append(query)
            hits = []
        results.append([KnnHit(iri=iri, score=score) for iri, score in hits])
    return KnnResponse(results=results, unresolved=unresolved)
