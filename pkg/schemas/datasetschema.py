"""
Schemas of the sampling and dataset-transformation stages.
"""

from dataclasses import dataclass, field

from pydantic import BaseModel, Field, model_validator

from utils.namespaces import is_absolute_iri

PACKAGE_FORMAT_VERSION = 1


class SamplingSpec(BaseModel):
    """Scope of a meta-sampling extraction: direction ``d`` and hops ``h``."""

    target_node_type: str
    direction: int = Field(ge=1, le=2)
    hops: int = Field(ge=1, le=2)

    @model_validator(mode="after")
    def check_target(self):
        if not is_absolute_iri(self.target_node_type):
            raise ValueError(f"target node type must be an absolute IRI: {self.target_node_type}")
        return self

    @property
    def label(self) -> str:
        return f"d{self.direction}h{self.hops}"


class DatasetStats(BaseModel):
    """Graph statistics of a dataset package."""

    n_nodes: dict[str, int]
    n_edges: dict[str, int]
    n_node_types: int
    n_edge_types: int
    n_labels: int
    n_classes: int
    total_triples: int
    total_nodes: int
    total_edges: int

    @model_validator(mode="after")
    def check_totals(self):
        if self.n_node_types != len(self.n_nodes) or self.n_edge_types != len(self.n_edges):
            raise ValueError("type counts disagree with per-type tables")
        if self.total_nodes != sum(self.n_nodes.values()) or self.total_edges != sum(self.n_edges.values()):
            raise ValueError("totals disagree with per-type counts")
        return self

    @classmethod
    def empty(cls) -> "DatasetStats":
        return cls(n_nodes={}, n_edges={}, n_node_types=0, n_edge_types=0, n_labels=0,
                   n_classes=0, total_triples=0, total_nodes=0, total_edges=0)


@dataclass
class DatasetPackage:
    """
    ID-encoded dataset.

    ``node_maps[type][id]`` is the node key (IRI text, ``_:label`` or the
    N-Triples form of a literal). Relation rows are
    ``(src_type, src_id, dst_type, dst_id)``. For node classification
    ``labels`` rows are ``(target_id, label_id)`` into ``label_dict``; for
    link prediction they are ``(source_id, destination_id)`` with
    ``label_dict`` listing the candidate destinations.
    """

    manifest: dict
    node_maps: dict[str, list[str]]
    relations: dict[str, list[tuple[str, int, str, int]]]
    labels: list[tuple[int, int]]
    label_dict: list[str]
    splits: dict[str, list[int]]
    stats: DatasetStats
    node_types: dict[str, str] = field(default_factory=dict)
    edge_types: dict[str, str] = field(default_factory=dict)

    @property
    def target_type(self) -> str:
        return self.manifest["target_type"]
