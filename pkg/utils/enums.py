"""
Enumerations shared across the platform.

Member values are the exact spellings used on the wire: in SPARQL^ML
queries (``kgnet:NodeClassifier``), TrainGML payloads and JSON bodies.
"""

# pylint: disable=invalid-name
from enum import Enum


class TaskType(str, Enum):
    """GML task types a user-defined predicate can be typed as."""
    NodeClassifier = "NodeClassifier"
    LinkPredictor = "LinkPredictor"
    NodeSimilarity = "NodeSimilarity"


class Priority(str, Enum):
    """Task budget priority used to order feasible training methods."""
    ModelScore = "ModelScore"
    TrainingTime = "TrainingTime"
    Memory = "Memory"


class MethodFamily(str, Enum):
    """Training method family; decides the memory term of the cost model."""
    FullBatch = "FullBatch"
    MiniBatchSampling = "MiniBatchSampling"


class QueryKind(str, Enum):
    """Top-level SPARQL^ML statement kinds."""
    Select = "Select"
    InsertTrain = "InsertTrain"
    DeleteModel = "DeleteModel"


class ConstraintKey(str, Enum):
    """Constraint predicates of a user-defined predicate group."""
    TargetNode = "TargetNode"
    NodeLabel = "NodeLabel"
    SourceNode = "SourceNode"
    DestinationNode = "DestinationNode"
    TopK = "TopK"
    SimilarTo = "SimilarTo"


class PlanShape(str, Enum):
    """Execution plan shapes for inference calls."""
    PerBinding = "PerBinding"
    Dictionary = "Dictionary"


class Objective(str, Enum):
    """Objective of the model-choice integer program."""
    MaxAccuracy = "MaxAccuracy"
    MinTime = "MinTime"


class SplitStrategy(str, Enum):
    """Train/valid/test split strategies of the dataset transformer."""
    random = "random"
    community = "community"


class LiteralHandling(str, Enum):
    """What the transformer does with literal objects."""
    nodes = "nodes"
    drop = "drop"


class UntypedHandling(str, Enum):
    """What the transformer does with resources lacking an rdf:type."""
    synthetic = "synthetic"
    error = "error"


class ServiceRole(str, Enum):
    """Which routers a server process mounts."""
    all = "all"
    sparqlml = "sparqlml"
    gmlaas = "gmlaas"


REQUIRED_CONSTRAINTS = {
    TaskType.NodeClassifier: (ConstraintKey.TargetNode, ConstraintKey.NodeLabel),
    TaskType.LinkPredictor: (ConstraintKey.SourceNode, ConstraintKey.DestinationNode),
    TaskType.NodeSimilarity: (ConstraintKey.SimilarTo,),
}
