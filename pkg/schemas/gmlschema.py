"""
GMLaaS schemas: method profiles, cost estimates and the versioned
request/response bodies of the ``/gml`` API.
"""

# pylint: disable=no-self-argument
from datetime import datetime
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from schemas.datasetschema import DatasetStats
from schemas.sparqlmlschema import Budget
from utils.enums import MethodFamily, TaskType

API_VERSION = 1


class MethodProfile(BaseModel):
    """A trainable method and the coefficients of its cost model."""

    name: str = Field(min_length=1)
    family: MethodFamily
    tasks: list[TaskType] = Field(min_length=1)
    alpha_nodes: float = Field(ge=0)
    alpha_edges: float = Field(ge=0)
    alpha_fixed: float = Field(ge=0)
    beta_epoch_edge: float = Field(ge=0)
    beta_epoch_node: float = Field(ge=0)
    epochs: int = Field(default=1, ge=1)
    batch_fraction: float = Field(default=1.0, gt=0, le=1)
    dim: int = Field(default=64, ge=1)
    quality_prior: int = 0
    hyperparams: dict = Field(default_factory=dict)
    description: str = ""


class CostEstimate(BaseModel):
    memory_bytes: int = Field(ge=0)
    time_seconds: float = Field(ge=0)


class MethodEstimate(BaseModel):
    """A profile's estimate against a budget."""

    method: str
    estimate: CostEstimate
    feasible: bool


class VersionedBody(BaseModel):
    """Every ``/gml`` body carries ``"v": 1``."""

    v: Literal[1] = API_VERSION


class TrainRequest(VersionedBody):
    """TrainGML JSON plus the dataset package to train on."""

    task: dict
    package: str


class TrainResponse(VersionedBody):
    artifact_ref: str
    name: str
    task_type: TaskType
    method_name: str
    accuracy: float
    hits_at_10: Optional[float] = None
    mrr: Optional[float] = None
    inference_time_ms: float
    model_cardinality: int
    estimate: CostEstimate
    dataset_digest: str
    created_at: datetime


class ModelInfo(VersionedBody):
    artifact_ref: str
    name: str
    task_type: TaskType
    method_name: str
    target_type: str
    metrics: dict
    dataset_digest: str
    created_at: datetime


class ModelList(VersionedBody):
    models: list[ModelInfo]


class InferNodeClassRequest(VersionedBody):
    """``targets`` omitted: predictions for every node the model covers."""

    model: str
    targets: Optional[list[str]] = None


class InferNodeClassResponse(VersionedBody):
    predictions: dict[str, str]
    unresolved: list[str] = Field(default_factory=list)


class InferLinksRequest(VersionedBody):
    model: str
    sources: Optional[list[str]] = None
    k: int = Field(default=10, ge=1)


class InferLinksResponse(VersionedBody):
    predictions: dict[str, list[str]]
    unresolved: list[str] = Field(default_factory=list)


class KnnRequest(VersionedBody):
    """One query (``query``) or a batch (``queries``); a query is an IRI or a vector."""

    model: str
    query: Optional[Union[str, list[float]]] = None
    queries: Optional[list[Union[str, list[float]]]] = None
    k: int = Field(default=10, ge=0)

    @field_validator("queries")
    def check_queries(cls, v):
        if v is not None and not v:
            raise ValueError("queries must not be empty")
        return v


class KnnHit(BaseModel):
    iri: str
    score: float


class KnnResponse(VersionedBody):
    results: list[list[KnnHit]]
    unresolved: list[str] = Field(default_factory=list)


class DeleteResponse(VersionedBody):
    artifact_ref: str
    deleted: bool = True
    embeddings_removed: int = 0


class DeleteBatchRequest(VersionedBody):
    """Artifacts to remove in one transaction."""

    artifact_refs: list[str] = Field(min_length=1)


class DeleteBatchResponse(VersionedBody):
    deleted: list[DeleteResponse]


class MethodsRequest(VersionedBody):
    """Dataset statistics and budget to estimate every method against."""

    stats: Optional[DatasetStats] = None
    budget: Optional[Budget] = None
