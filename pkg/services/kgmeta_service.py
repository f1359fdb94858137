"""
KGMeta governor.

KGMeta is a plain RDF named graph: every model is one subject typed with
its task (``kgnet:NodeClassifier`` ...) carrying one triple per metadata
field. All reads are BGP SELECTs and all writes are triple inserts or
deletes on a ``Backend``, so the graph can live in the embedded store or
on any SPARQL endpoint.
"""

import hashlib
import logging
import threading
from collections import defaultdict
from datetime import datetime
from typing import Iterable, Mapping, Optional

from rdflib import RDF, XSD, Literal, URIRef
from rdflib.term import Node

from schemas.kgmetaschema import ModelMetadata
from schemas.rdfschema import Triple
from services.rdf_store_service import Backend, parse_ntriples, serialize_triples, term_to_nt
from utils.enums import ConstraintKey, TaskType
from utils.errors import DuplicateModel, GmlaasUnavailable, KGNetError
from utils import namespaces as ns

logger = logging.getLogger(__name__)

# field -> (predicate, kind)
FIELD_PREDICATES = {
    "name": (ns.MODEL_NAME, "string"),
    "target_node_type": (ns.TARGET_NODE, "iri"),
    "label_predicate": (ns.NODE_LABEL, "iri"),
    "source_node_type": (ns.SOURCE_NODE, "iri"),
    "destination_node_type": (ns.DESTINATION_NODE, "iri"),
    "method_name": (ns.GML_METHOD, "string"),
    "accuracy": (ns.ACCURACY, "double"),
    "inference_time_ms": (ns.INFERENCE_TIME_MS, "double"),
    "model_cardinality": (ns.MODEL_CARDINALITY, "integer"),
    "trained_on": (ns.TRAINED_ON_KG, "iri"),
    "sampling_direction": (ns.SAMPLING_DIRECTION, "integer"),
    "sampling_hops": (ns.SAMPLING_HOPS, "integer"),
    "artifact_ref": (ns.ARTIFACT_REF, "string"),
    "created_at": (ns.CREATED_AT, "dateTime"),
    "dataset_digest": (ns.DATASET_DIGEST, "string"),
    "hits_at_10": (ns.HITS_AT_10, "double"),
    "mrr": (ns.MRR, "double"),
}
_BY_PREDICATE = {predicate: (name, kind) for name, (predicate, kind) in FIELD_PREDICATES.items()}

# constraint keys that are model properties; TopK is per query and SimilarTo
# stands for the TargetNode of similarity models
LOOKUP_KEYS = (ConstraintKey.TargetNode, ConstraintKey.NodeLabel,
               ConstraintKey.SourceNode, ConstraintKey.DestinationNode)


def _encode(value, kind: str) -> Node:
    if kind == "iri":
        return URIRef(value)
    if kind == "double":
        return Literal(repr(float(value)), datatype=XSD.double, normalize=False)
    if kind == "integer":
        return Literal(str(int(value)), datatype=XSD.integer, normalize=False)
    if kind == "dateTime":
        return Literal(value.isoformat(), datatype=XSD.dateTime, normalize=False)
    return Literal(str(value))


def _decode(term: Node, kind: str):
    text = str(term)
    if kind == "double":
        return float(text)
    if kind == "integer":
        return int(text)
    if kind == "dateTime":
        return datetime.fromisoformat(text)
    return text


def model_uri(meta: ModelMetadata) -> str:
    """``kgnet:model/<task>/<stable hash>`` of the task binding, method, sampling and dataset."""
    parts = [meta.task_type.value, meta.target_node_type, meta.label_predicate or "",
             meta.source_node_type or "", meta.destination_node_type or "", meta.method_name,
             str(meta.sampling_direction), str(meta.sampling_hops), meta.dataset_digest or ""]
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:16]
    return f"{ns.KGNET}model/{meta.task_type.value}/{digest}"


def binding_key(meta: ModelMetadata) -> tuple:
    """Identity used by the duplicate check."""
    return (meta.task_type, meta.target_node_type, meta.label_predicate, meta.source_node_type,
            meta.destination_node_type, meta.method_name, meta.sampling)


def metadata_triples(meta: ModelMetadata) -> list[Triple]:
    """RDF encoding of one model; ``meta.model_uri`` must be set."""
    subject = URIRef(meta.model_uri)
    triples = [(subject, RDF.type, ns.KGNET[meta.task_type.value])]
    for name, (predicate, kind) in FIELD_PREDICATES.items():
        value = getattr(meta, name)
        if value is not None:
            triples.append((subject, predicate, _encode(value, kind)))
    return triples


def metadata_from_triples(uri: str, pairs: Iterable[tuple[Node, Node]]) -> ModelMetadata:
    """Inverse of ``metadata_triples`` given the (predicate, object) pairs of one subject."""
    values: dict = {"model_uri": uri}
    for predicate, obj in pairs:
        if predicate == RDF.type and str(obj).startswith(str(ns.KGNET)):
            values["task_type"] = TaskType(str(obj)[len(str(ns.KGNET)):])
        elif predicate in _BY_PREDICATE:
            name, kind = _BY_PREDICATE[predicate]
            values[name] = _decode(obj, kind)
    return ModelMetadata(**values)


def _data_update(verb: str, graph: str, triples: Iterable[Triple]) -> str:
    lines = "\n".join(f"    {term_to_nt(s)} {term_to_nt(p)} {term_to_nt(o)} ." for s, p, o in sorted(
        triples, key=lambda t: tuple(map(term_to_nt, t))))
    return f"{verb} DATA {{\n  GRAPH <{graph}> {{\n{lines}\n  }}\n}}"


def insert_data(graph: str, triples: Iterable[Triple]) -> str:
    """SPARQL UPDATE text adding ``triples`` to ``graph``."""
    return _data_update("INSERT", graph, triples)


def delete_data(graph: str, triples: Iterable[Triple]) -> str:
    """SPARQL UPDATE text removing ``triples`` from ``graph``."""
    return _data_update("DELETE", graph, triples)


class KGMetaGovernor:
    """
    Register, look up and delete model metadata.

    Writes are serialized behind one lock; lookups run concurrently.
    ``gmlaas`` is any client exposing ``get_model(ref)`` and
    ``delete_models(refs)``; it is only needed for deletes.
    """

    def __init__(self, backend: Backend, graph: str = str(ns.KGMETA_GRAPH), gmlaas=None):
        self.backend = backend
        self.graph = graph
        self.gmlaas = gmlaas
        self._write_lock = threading.Lock()

    def _select_models(self, type_iri: str, constraints: Mapping) -> list[ModelMetadata]:
        patterns = [f"?model a <{type_iri}> ."]
        for key in LOOKUP_KEYS:
            if constraints.get(key) is not None:
                value = constraints[key]
                value = value if isinstance(value, Node) else URIRef(str(value))
                patterns.append(f"?model {term_to_nt(ns.KGNET[key.value])} {term_to_nt(value)} .")
        patterns.append("?model ?p ?o .")
        query = "SELECT ?model ?p ?o WHERE {\n  " + "\n  ".join(patterns) + "\n}"
        logger.debug("KGMeta lookup:\n%s", query)

        grouped: dict[str, list] = defaultdict(list)
        for row in self.backend.select(query).rows:
            grouped[str(row["model"])].append((row["p"], row["o"]))
        models = []
        for uri in sorted(grouped):
            try:
                models.append(metadata_from_triples(uri, grouped[uri]))
            except ValueError as exc:
                logger.warning("skipping incomplete KGMeta entry %s: %s", uri, exc)
        return models

    def lookup_models(self, task_type: TaskType, constraints: Optional[Mapping] = None) -> list[ModelMetadata]:
        """Models of ``task_type`` whose KGMeta triples satisfy every constraint."""
        constraints = dict(constraints or {})
        if constraints.get(ConstraintKey.SimilarTo) is not None:
            constraints.setdefault(ConstraintKey.TargetNode, constraints[ConstraintKey.SimilarTo])
        return self._select_models(str(ns.KGNET[TaskType(task_type).value]), constraints)

    def list_models(self) -> list[ModelMetadata]:
        models = []
        for task_type in TaskType:
            models.extend(self.lookup_models(task_type))
        return sorted(models, key=lambda m: m.model_uri)

    def get_model(self, uri: str) -> Optional[ModelMetadata]:
        return next((m for m in self.list_models() if m.model_uri == uri), None)

    def register_model(self, meta: ModelMetadata) -> str:
        """
        Add a model to KGMeta.

        Returns:
            str: minted model URI.

        Raises:
            DuplicateModel: a model with the same task binding, method and
                sampling is already registered.
        """
        with self._write_lock:
            constraints = {
                ConstraintKey.TargetNode: meta.target_node_type,
                ConstraintKey.NodeLabel: meta.label_predicate,
                ConstraintKey.SourceNode: meta.source_node_type,
                ConstraintKey.DestinationNode: meta.destination_node_type,
            }
            for existing in self.lookup_models(meta.task_type, constraints):
                if binding_key(existing) == binding_key(meta):
                    raise DuplicateModel(f"model already registered as {existing.model_uri}",
                                         existing_uri=existing.model_uri)
            meta = meta.model_copy(update={"model_uri": model_uri(meta)})
            self.backend.insert(metadata_triples(meta))
        logger.info("registered %s model %s (%s, accuracy %.3f)", meta.task_type.value, meta.model_uri,
                    meta.method_name, meta.accuracy)
        return meta.model_uri

    def _model_triples(self, uri: str) -> list[Triple]:
        table = self.backend.select(f"SELECT ?p ?o WHERE {{ <{uri}> ?p ?o . }}")
        subject = URIRef(uri)
        return [(subject, row["p"], row["o"]) for row in table.rows]

    def delete_models(self, task_type: TaskType, constraints: Optional[Mapping] = None) -> list[str]:
        """
        Delete every matching model and its GMLaaS artifact, all or nothing.

        Artifacts are verified first. The KGMeta triples of all matches are
        then removed in one batch and the artifacts in one GMLaaS
        transaction; if GMLaaS fails, the triples are put back.

        Raises:
            GmlaasUnavailable: GMLaaS is missing, unreachable or rejects an
                artifact; KGMeta and the registry are left unchanged.
        """
        with self._write_lock:
            matches = self.lookup_models(task_type, constraints)
            if not matches:
                logger.info("no %s model matches %s; nothing to delete", TaskType(task_type).value,
                            {k.value: str(v) for k, v in (constraints or {}).items()})
                return []
            if self.gmlaas is None:
                raise GmlaasUnavailable("model deletion needs GMLaaS", models=[m.model_uri for m in matches])
            for meta in matches:
                try:
                    self.gmlaas.get_model(meta.artifact_ref)
                except KGNetError as exc:
                    raise GmlaasUnavailable(f"cannot verify artifact {meta.artifact_ref} of {meta.model_uri}: "
                                            f"{exc}; nothing deleted", model=meta.model_uri) from exc

            uris = [meta.model_uri for meta in matches]
            triples = [t for uri in uris for t in self._model_triples(uri)]
            self.backend.delete(triples)
            try:
                self.gmlaas.delete_models([meta.artifact_ref for meta in matches])
            except Exception as exc:
                self.backend.insert(triples)
                raise GmlaasUnavailable(f"GMLaaS failed to delete the artifacts of {len(uris)} model(s): {exc}; "
                                        "nothing deleted", models=uris) from exc
        for uri in uris:
            logger.info("deleted model %s", uri)
        return uris

    def export_ntriples(self) -> bytes:
        """The whole KGMeta graph as canonical N-Triples."""
        return serialize_triples(self.backend.construct("CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"))

    def import_ntriples(self, data: bytes) -> int:
        """Load an export; returns the number of new triples."""
        triples = parse_ntriples(data.decode("utf-8"))
        with self._write_lock:
            return self.backend.insert(triples)

    def register_update(self, meta: ModelMetadata) -> str:
        """INSERT DATA text equivalent to registering ``meta`` (URI minted)."""
        meta = meta.model_copy(update={"model_uri": meta.model_uri or model_uri(meta)})
        return insert_data(self.graph, metadata_triples(meta))

    def delete_update(self, uri: str) -> str:
        """DELETE DATA text removing one model's triples."""
        return delete_data(self.graph, self._model_triples(uri))
