"""
RDF namespaces and the kgnet vocabulary.

The KGMeta vocabulary closes the pictorial metadata schema into concrete
predicates; every model property the governor stores is listed here.
"""

import re

from rdflib import Namespace, URIRef
from rdflib.namespace import RDF, XSD

KGNET = Namespace("https://www.kgnet.com/")

# absolute form of the <kgnet> graph of TrainGML inserts
KGMETA_GRAPH = URIRef("https://www.kgnet.com/kgnet")
DEFAULT_DATA_GRAPH = URIRef("urn:graph:kg")

TRAIN_GML = KGNET.TrainGML

# constraint predicates of user-defined predicate groups
TARGET_NODE = KGNET.TargetNode
NODE_LABEL = KGNET.NodeLabel
SOURCE_NODE = KGNET.SourceNode
DESTINATION_NODE = KGNET.DestinationNode
TOPK = KGNET.TopK
TOPK_LINKS = KGNET["TopK-Links"]
SIMILAR_TO = KGNET.SimilarTo

# model metadata predicates
ACCURACY = KGNET.accuracy
INFERENCE_TIME_MS = KGNET.inferenceTimeMs
MODEL_CARDINALITY = KGNET.modelCardinality
GML_METHOD = KGNET.gmlMethod
TRAINED_ON_KG = KGNET.trainedOnKG
SAMPLING_DIRECTION = KGNET.samplingDirection
SAMPLING_HOPS = KGNET.samplingHops
ARTIFACT_REF = KGNET.artifactRef
CREATED_AT = KGNET.createdAt
MODEL_NAME = KGNET.modelName
DATASET_DIGEST = KGNET.datasetDigest
HITS_AT_10 = KGNET.hitsAt10
MRR = KGNET.mrr

BASE_PREFIXES = {
    "rdf": str(RDF),
    "xsd": str(XSD),
    "kgnet": str(KGNET),
}

_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")


def is_absolute_iri(value: str) -> bool:
    """Return True when ``value`` starts with a URI scheme and has no spaces."""
    return bool(_SCHEME.match(value)) and not any(c in value for c in " \t\n<>\"{}|^`")


def in_kgnet_namespace(term) -> bool:
    """True for IRIs under the kgnet namespace."""
    return isinstance(term, URIRef) and str(term).startswith(str(KGNET))


def local_name(iri: str) -> str:
    """Last path/fragment segment of an IRI."""
    tail = re.split(r"[#/:]", iri.rstrip("/#"))[-1]
    return tail or iri
