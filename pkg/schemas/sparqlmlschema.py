"""
SPARQL^ML query structures.

The AST keeps rdflib terms, so it is a plain dataclass; the TrainGML
payload and its budget are pydantic models because they arrive as JSON
and are validated field by field.
"""

from dataclasses import dataclass, field
from typing import Optional

from pydantic import BaseModel, Field, model_validator
from rdflib import RDF, Literal, URIRef, Variable
from rdflib.term import Node

from schemas.rdfschema import TriplePattern
from utils.enums import (REQUIRED_CONSTRAINTS, ConstraintKey, Objective, Priority,
                         QueryKind, SplitStrategy, TaskType)
from utils.namespaces import KGNET


class Budget(BaseModel):
    """Task budget of a TrainGML request."""

    max_memory_bytes: int = Field(gt=0)
    max_time_seconds: int = Field(gt=0)
    priority: Priority = Priority.ModelScore


class TrainGmlSpec(BaseModel):
    """
    One training request.

    ``target_node_type`` is the NC target type, the LP source type or the
    type of nodes searched by a similarity model.
    """

    name: str = Field(min_length=1)
    task_type: TaskType
    target_node_type: Optional[str] = None
    label_predicate: Optional[str] = None
    source_node_type: Optional[str] = None
    destination_node_type: Optional[str] = None
    link_predicates: list[str] = Field(default_factory=list)
    budget: Budget
    hyperparams: dict = Field(default_factory=dict)
    method_override: Optional[str] = None
    sampling_direction: Optional[int] = Field(default=None, ge=1, le=2)
    sampling_hops: Optional[int] = Field(default=None, ge=1, le=2)
    split_strategy: SplitStrategy = SplitStrategy.random
    community_edge: Optional[str] = None

    @model_validator(mode="after")
    def check_task_fields(self):
        """Exactly the fields of the task type are present."""
        if self.task_type == TaskType.NodeClassifier:
            if not self.target_node_type or not self.label_predicate:
                raise ValueError("NodeClassifier needs TargetNode and NodeLabel")
            if self.source_node_type or self.destination_node_type or self.link_predicates:
                raise ValueError("NodeClassifier takes no SourceNode/DestinationNode/LinkPredicate")
        elif self.task_type == TaskType.LinkPredictor:
            if not self.source_node_type or not self.destination_node_type:
                raise ValueError("LinkPredictor needs SourceNode and DestinationNode")
            if self.label_predicate:
                raise ValueError("LinkPredictor takes no NodeLabel")
            if self.target_node_type is None:
                self.target_node_type = self.source_node_type
            elif self.target_node_type != self.source_node_type:
                raise ValueError("LinkPredictor targets are the SourceNode type")
        else:
            if not self.target_node_type:
                raise ValueError("NodeSimilarity needs TargetNode (or SimilarTo)")
            if self.label_predicate or self.source_node_type or self.destination_node_type:
                raise ValueError("NodeSimilarity takes only the target node type")
        if self.split_strategy == SplitStrategy.community and not self.community_edge:
            raise ValueError("community split needs CommunityEdge")
        return self


@dataclass
class UdpGroup:
    """
    A user-defined predicate with its constraints.

    ``patterns`` are the query triples the group was built from (type
    triple, constraint triples, usage triple) in query order.
    """

    predicate_var: str
    task_type: TaskType
    subject_var: Optional[str]
    object_var: Optional[str]
    constraints: dict[ConstraintKey, Node] = field(default_factory=dict)
    patterns: list[TriplePattern] = field(default_factory=list)

    @property
    def top_k(self) -> Optional[int]:
        value = self.constraints.get(ConstraintKey.TopK)
        return int(str(value)) if value is not None else None

    @property
    def required_constraints(self) -> tuple:
        return REQUIRED_CONSTRAINTS[self.task_type]


def make_group(predicate_var: str, task_type: TaskType, subject_var: Optional[str],
               object_var: Optional[str], constraints: dict) -> UdpGroup:
    """Build a group with canonical patterns: type, constraints in key order, usage."""
    udp = Variable(predicate_var)
    patterns = [(udp, RDF.type, KGNET[task_type.value])]
    for key in ConstraintKey:
        if key in constraints:
            patterns.append((udp, KGNET[key.value], constraints[key]))
    if subject_var and object_var:
        patterns.append((Variable(subject_var), udp, Variable(object_var)))
    return UdpGroup(predicate_var, task_type, subject_var, object_var, dict(constraints), patterns)


@dataclass
class SparqlMlAst:
    """Parsed SPARQL^ML statement."""

    kind: QueryKind
    prefixes: dict[str, str] = field(default_factory=dict)
    projection: list[str] = field(default_factory=list)
    data_patterns: list[TriplePattern] = field(default_factory=list)
    gml_patterns: list[UdpGroup] = field(default_factory=list)
    train_payload: Optional[TrainGmlSpec] = None
    target_graph: Optional[str] = None
    delete_template: list[TriplePattern] = field(default_factory=list)

    def data_variables(self) -> list[str]:
        """Variables of the data patterns in first-appearance order."""
        seen = []
        for pattern in self.data_patterns:
            for term in pattern:
                if isinstance(term, Variable) and str(term) not in seen:
                    seen.append(str(term))
        return seen

    def all_patterns(self) -> list[TriplePattern]:
        """Data patterns followed by every group's patterns."""
        flattened = list(self.data_patterns)
        for group in self.gml_patterns:
            flattened.extend(group.patterns)
        return flattened


def topk_literal(value: int) -> Literal:
    """TopK constraint value as it appears in queries."""
    return Literal(str(int(value)), datatype=URIRef("http://www.w3.org/2001/XMLSchema#integer"),
                   normalize=False)


class SparqlMlRequest(BaseModel):
    """Body of ``POST /sparqlml/query`` (JSON or form fields of the same names)."""

    query: str = Field(min_length=1)
    objective: Objective = Objective.MaxAccuracy
    max_time_ms: Optional[float] = Field(default=None, gt=0)
    min_accuracy: Optional[float] = Field(default=None, ge=0, le=1)
    lenient: bool = False
