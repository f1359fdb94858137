from datetime import datetime, timezone

import pytest
from rdflib import RDF, URIRef

from schemas.kgmetaschema import ModelMetadata
from services.kgmeta_service import KGMetaGovernor, metadata_triples, model_uri
from services.rdf_store_service import StoreBackend, TripleStore
from utils.enums import ConstraintKey, TaskType
from utils.errors import DuplicateModel, GmlaasUnavailable, ModelNotFound
from utils.namespaces import KGMETA_GRAPH, KGNET

from tests.conftest import DBLP

GRAPH = str(KGMETA_GRAPH)
NC_BINDING = {ConstraintKey.TargetNode: DBLP.Publication, ConstraintKey.NodeLabel: DBLP.publishedIn}
LP_BINDING = {ConstraintKey.SourceNode: DBLP.Person, ConstraintKey.DestinationNode: DBLP.Affiliation}


class _Gmlaas:
    """Artifact registry double; ``broken`` refs fail verification, ``failing`` refs fail deletion."""

    def __init__(self, refs=(), broken=(), failing=()):
        self.refs = set(refs)
        self.broken = set(broken)
        self.failing = set(failing)
        self.deleted = []

    def get_model(self, ref):
        if ref not in self.refs or ref in self.broken:
            raise ModelNotFound(f"unknown model artifact {ref}", artifact_ref=ref)
        return ref

    def delete_models(self, refs):
        for ref in refs:
            self.get_model(ref)
            if ref in self.failing:
                raise GmlaasUnavailable(f"lost connection while deleting {ref}")
        self.refs.difference_update(refs)
        self.deleted.extend(refs)


def _nc(method="neighbor-label-frequency", artifact="gml-nc-1", **extra) -> ModelMetadata:
    values = dict(name="venue", task_type=TaskType.NodeClassifier, target_node_type=str(DBLP.Publication),
                  label_predicate=str(DBLP.publishedIn), method_name=method, accuracy=0.62,
                  inference_time_ms=80.0, model_cardinality=4, trained_on="urn:graph:kg",
                  sampling_direction=1, sampling_hops=1, artifact_ref=artifact,
                  created_at=datetime(2024, 5, 1, 12, 30, tzinfo=timezone.utc), dataset_digest="ab" * 32)
    values.update(extra)
    return ModelMetadata(**values)


def _lp(artifact="gml-lp-1") -> ModelMetadata:
    return ModelMetadata(name="affiliation", task_type=TaskType.LinkPredictor, target_node_type=str(DBLP.Person),
                         source_node_type=str(DBLP.Person), destination_node_type=str(DBLP.Affiliation),
                         method_name="common-neighbors", accuracy=1.0, inference_time_ms=0.25,
                         model_cardinality=10, trained_on="urn:graph:kg", sampling_direction=2, sampling_hops=1,
                         artifact_ref=artifact, created_at=datetime(2024, 5, 2, tzinfo=timezone.utc),
                         hits_at_10=1.0, mrr=0.75)


@pytest.fixture
def kgmeta_store():
    return TripleStore()


@pytest.fixture
def governor(kgmeta_store):
    gmlaas = _Gmlaas(refs={"gml-nc-1", "gml-nc-2", "gml-lp-1"})
    return KGMetaGovernor(StoreBackend(kgmeta_store, GRAPH), GRAPH, gmlaas=gmlaas)


@pytest.fixture
def populated(governor):
    uris = {
        "nc1": governor.register_model(_nc()),
        "nc2": governor.register_model(_nc(method="majority-label", artifact="gml-nc-2", accuracy=0.5)),
        "lp": governor.register_model(_lp()),
    }
    return governor, uris


# REGISTER AND LOOK UP
def test_register_mints_stable_uri(governor):
    uri = governor.register_model(_nc())
    assert uri == model_uri(_nc())
    assert uri.startswith(f"{KGNET}model/NodeClassifier/")
    assert len(uri.rsplit("/", 1)[1]) == 16
    (found,) = governor.lookup_models(TaskType.NodeClassifier, NC_BINDING)
    assert found.model_uri == uri


def test_every_field_survives_the_rdf_encoding(governor):
    meta = _lp()
    uri = governor.register_model(meta)
    assert governor.get_model(uri) == meta.model_copy(update={"model_uri": uri})


def test_duplicate_registration_names_the_first_model(governor):
    uri = governor.register_model(_nc())
    with pytest.raises(DuplicateModel) as excinfo:
        governor.register_model(_nc(artifact="gml-nc-other", accuracy=0.9))
    assert excinfo.value.context["existing_uri"] == uri
    assert excinfo.value.status_code == 409
    assert len(governor.list_models()) == 1


def test_lookup_filters_by_task_and_binding(populated):
    governor, uris = populated
    nc = governor.lookup_models(TaskType.NodeClassifier, NC_BINDING)
    assert sorted(m.model_uri for m in nc) == sorted([uris["nc1"], uris["nc2"]])
    lp = governor.lookup_models(TaskType.LinkPredictor, LP_BINDING)
    assert [m.model_uri for m in lp] == [uris["lp"]]
    assert governor.lookup_models(TaskType.NodeClassifier, {ConstraintKey.NodeLabel: DBLP.title}) == []
    assert governor.lookup_models(TaskType.NodeSimilarity) == []


def test_lookup_on_empty_kgmeta(governor):
    assert governor.lookup_models(TaskType.NodeClassifier, NC_BINDING) == []
    assert governor.list_models() == []
    assert governor.get_model(f"{KGNET}model/NodeClassifier/none") is None


def test_similar_to_matches_target_node(governor):
    meta = ModelMetadata(name="similar", task_type=TaskType.NodeSimilarity, target_node_type=str(DBLP.Publication),
                         method_name="embedding-similarity", accuracy=1.0, inference_time_ms=0.1,
                         model_cardinality=30, trained_on="urn:graph:kg", sampling_direction=1, sampling_hops=1,
                         artifact_ref="gml-ns-1", created_at=datetime(2024, 5, 3, tzinfo=timezone.utc))
    uri = governor.register_model(meta)
    found = governor.lookup_models(TaskType.NodeSimilarity, {ConstraintKey.SimilarTo: DBLP.Publication,
                                                             ConstraintKey.TopK: 3})
    assert [m.model_uri for m in found] == [uri]


def test_lookup_reads_only_the_named_graph(kgmeta_store, populated):
    governor, _ = populated
    rebuilt = KGMetaGovernor(StoreBackend(kgmeta_store, GRAPH), GRAPH)
    assert rebuilt.list_models() == governor.list_models()


# DELETE
def test_delete_matching_models(populated):
    governor, uris = populated
    deleted = governor.delete_models(TaskType.NodeClassifier, NC_BINDING)
    assert sorted(deleted) == sorted([uris["nc1"], uris["nc2"]])
    assert sorted(governor.gmlaas.deleted) == ["gml-nc-1", "gml-nc-2"]
    assert governor.lookup_models(TaskType.NodeClassifier, NC_BINDING) == []
    assert [m.model_uri for m in governor.list_models()] == [uris["lp"]]


def test_delete_without_match(populated):
    governor, _ = populated
    assert governor.delete_models(TaskType.NodeClassifier, {ConstraintKey.NodeLabel: DBLP.title}) == []
    assert governor.gmlaas.deleted == []


def test_delete_is_all_or_nothing_when_an_artifact_fails(populated):
    governor, _ = populated
    governor.gmlaas.broken.add("gml-nc-2")
    before = governor.export_ntriples()
    with pytest.raises(GmlaasUnavailable) as excinfo:
        governor.delete_models(TaskType.NodeClassifier, NC_BINDING)
    assert excinfo.value.exit_code == 2
    assert governor.gmlaas.deleted == []
    assert governor.export_ntriples() == before


def test_delete_is_all_or_nothing_when_gmlaas_fails_mid_delete(populated):
    governor, _ = populated
    governor.gmlaas.failing.add("gml-nc-2")
    before = governor.export_ntriples()
    with pytest.raises(GmlaasUnavailable) as excinfo:
        governor.delete_models(TaskType.NodeClassifier, NC_BINDING)
    assert "nothing deleted" in excinfo.value.detail["message"]
    assert governor.gmlaas.deleted == []
    assert governor.gmlaas.refs == {"gml-nc-1", "gml-nc-2", "gml-lp-1"}
    assert governor.export_ntriples() == before
    assert len(governor.lookup_models(TaskType.NodeClassifier, NC_BINDING)) == 2


def test_delete_needs_gmlaas(kgmeta_store):
    governor = KGMetaGovernor(StoreBackend(kgmeta_store, GRAPH), GRAPH)
    governor.register_model(_nc())
    with pytest.raises(GmlaasUnavailable):
        governor.delete_models(TaskType.NodeClassifier, NC_BINDING)
    assert len(governor.list_models()) == 1


def test_register_after_delete_restores_kgmeta(populated):
    governor, _ = populated
    before = governor.export_ntriples()
    governor.delete_models(TaskType.LinkPredictor, LP_BINDING)
    governor.gmlaas.refs.add("gml-lp-1")
    governor.register_model(_lp())
    assert governor.export_ntriples() == before


# EXPORT AND UPDATE TEXT
def test_export_and_import(populated):
    governor, _ = populated
    data = governor.export_ntriples()
    copy = KGMetaGovernor(StoreBackend(TripleStore(), GRAPH), GRAPH)
    assert copy.import_ntriples(data) == len(data.splitlines())
    assert copy.list_models() == governor.list_models()
    assert copy.import_ntriples(data) == 0


def test_update_text_round_trip(kgmeta_store, governor):
    meta = _nc()
    text = governor.register_update(meta)
    assert text.startswith(f"INSERT DATA {{\n  GRAPH <{GRAPH}> {{")
    kgmeta_store.update(text)
    (found,) = governor.lookup_models(TaskType.NodeClassifier, NC_BINDING)
    assert found.model_uri == model_uri(meta)

    kgmeta_store.update(governor.delete_update(found.model_uri))
    assert governor.list_models() == []


def test_metadata_triples_are_typed_by_task():
    meta = _nc().model_copy(update={"model_uri": model_uri(_nc())})
    triples = metadata_triples(meta)
    assert triples[0] == (URIRef(meta.model_uri), RDF.type, KGNET.NodeClassifier)
    assert len(triples) == 1 + 13
