"""
Query planning schemas: the model-choice problem, cost parameters and the
executable plan.
"""

# pylint: disable=no-self-argument
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from utils.enums import Objective, PlanShape, TaskType


class Candidate(BaseModel):
    """A KGMeta model usable for one user-defined predicate."""

    model_uri: str
    artifact_ref: str = ""
    accuracy: float = Field(ge=0, le=1)
    inference_time_ms: float = Field(ge=0)
    cardinality: int = Field(default=0, ge=0)


class ModelChoiceProblem(BaseModel):
    """
    One candidate list per user-defined predicate.

    ``MaxAccuracy`` maximizes summed accuracy with summed inference time at
    most ``max_time_ms`` (unbounded when ``None``); ``MinTime`` minimizes
    summed time with every chosen accuracy at least ``min_accuracy``.
    """

    groups: list[list[Candidate]]
    objective: Objective = Objective.MaxAccuracy
    max_time_ms: Optional[float] = Field(default=None, gt=0)
    min_accuracy: Optional[float] = Field(default=None, ge=0, le=1)

    @model_validator(mode="after")
    def check_groups(self):
        if any(not candidates for candidates in self.groups):
            raise ValueError("every user-defined predicate needs at least one candidate model")
        return self


class Assignment(BaseModel):
    choices: list[Candidate]
    objective_value: float
    total_accuracy: float
    total_time_ms: float


class CostModelParams(BaseModel):
    """Milliseconds per inference call and per transferred dictionary entry."""

    c_call_ms: float = Field(default=50.0, gt=0)
    c_item_ms: float = Field(default=0.01, gt=0)


class CardinalityEstimate(BaseModel):
    variable: str
    count: int = Field(ge=0)
    estimated: bool = False


class InferenceCall(BaseModel):
    """Call manifest entry: how one user-defined predicate is answered."""

    predicate_var: str
    task_type: TaskType
    model_uri: str
    artifact_ref: str
    subject_var: str
    object_var: str
    shape: PlanShape
    k: Optional[int] = None
    estimated_calls: int = 0


class QueryPlan(BaseModel):
    shape: PlanShape
    models: dict[str, str] = Field(default_factory=dict)
    estimated_calls: int = 0
    estimated_cost: float = 0.0
    rewritten_query: str
    data_variables: list[str] = Field(default_factory=list)
    projection: list[str] = Field(default_factory=list)
    manifest: list[InferenceCall] = Field(default_factory=list)
    cardinalities: list[CardinalityEstimate] = Field(default_factory=list)
    empty: bool = False
