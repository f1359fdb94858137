"""
KGMeta model metadata schema.
"""

# pylint: disable=no-self-argument
from datetime import datetime
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from utils.enums import TaskType
from utils.namespaces import is_absolute_iri


class ModelMetadata(BaseModel):
    """Everything KGMeta records about one trained model."""

    model_uri: Optional[str] = None
    name: str = Field(min_length=1)
    task_type: TaskType
    target_node_type: str
    label_predicate: Optional[str] = None
    source_node_type: Optional[str] = None
    destination_node_type: Optional[str] = None
    method_name: str
    accuracy: float = Field(ge=0.0, le=1.0)
    inference_time_ms: float = Field(gt=0.0)
    model_cardinality: int = Field(ge=0)
    trained_on: str
    sampling_direction: int = Field(ge=1, le=2)
    sampling_hops: int = Field(ge=1, le=2)
    artifact_ref: str = Field(min_length=1)
    created_at: datetime
    dataset_digest: Optional[str] = None
    hits_at_10: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    mrr: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @field_validator("target_node_type", "trained_on")
    def check_iri(cls, v):
        if not is_absolute_iri(v):
            raise ValueError(f"expected an absolute IRI: {v}")
        return v

    @model_validator(mode="after")
    def check_task_binding(self):
        """NC models carry a label predicate, LP models their two node types."""
        if self.task_type == TaskType.NodeClassifier and not self.label_predicate:
            raise ValueError("NodeClassifier metadata needs label_predicate")
        if self.task_type == TaskType.LinkPredictor and not (self.source_node_type and self.destination_node_type):
            raise ValueError("LinkPredictor metadata needs source_node_type and destination_node_type")
        return self

    @property
    def sampling(self) -> tuple[int, int]:
        return self.sampling_direction, self.sampling_hops


class TrainingResult(BaseModel):
    """Outcome of one INSERT ... TrainGML run."""

    model_uri: str
    metadata: ModelMetadata
    package: str
    kg_prime_triples: int
    estimate: dict = Field(default_factory=dict)
