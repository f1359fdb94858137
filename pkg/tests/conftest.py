"""Shared fixtures: a toy DBLP graph, temporary platforms and a counting GMLaaS client."""

from collections import Counter
import logging

import pytest
from fastapi.testclient import TestClient
from rdflib import RDF, Literal, Namespace

from main import create_app
from schemas.datasetschema import SamplingSpec
from schemas.sparqlmlschema import Budget, TrainGmlSpec
from services.dataset_transformer_service import transform
from services.meta_sampler_service import extract_subgraph
from services.platform_service import PROJECT_ROOT, build_platform
from services.rdf_store_service import StoreBackend, TripleStore
from utils.enums import ServiceRole, TaskType
from utils.settings import PlatformConfig

DBLP = Namespace("https://dblp.org/rdf/schema#")
REC = Namespace("https://dblp.org/rec/")
PID = Namespace("https://dblp.org/pid/")
ORG = Namespace("https://dblp.org/org/")
STREAM = Namespace("https://dblp.org/streams/")

VENUES = (STREAM.icde, STREAM.vldb)
AFFILIATIONS = (ORG.concordia, ORG.waterloo)
N_PAPERS = 30
N_AUTHORS = 10

BUDGET = Budget(max_memory_bytes=2 ** 30, max_time_seconds=3600)

PREFIXES = "PREFIX dblp: <https://dblp.org/rdf/schema#>\nPREFIX kgnet: <https://www.kgnet.com/>\n"

NC_QUERY = PREFIXES + """SELECT ?title ?venue
WHERE {
  ?paper a dblp:Publication .
  ?paper dblp:title ?title .
  ?paper ?NodeClassifier ?venue .
  ?NodeClassifier a kgnet:NodeClassifier .
  ?NodeClassifier kgnet:TargetNode dblp:Publication .
  ?NodeClassifier kgnet:NodeLabel dblp:publishedIn .
}
"""

LP_QUERY = PREFIXES + """SELECT ?author ?affiliation
WHERE {
  ?author a dblp:Person .
  ?author ?LinkPredictor ?affiliation .
  ?LinkPredictor a kgnet:LinkPredictor .
  ?LinkPredictor kgnet:SourceNode dblp:Person .
  ?LinkPredictor kgnet:DestinationNode dblp:Affiliation .
  ?LinkPredictor kgnet:TopK-Links 10 .
}
"""

NC_DELETE = PREFIXES + """DELETE { ?s ?p ?o }
WHERE {
  ?NodeClassifier a kgnet:NodeClassifier .
  ?NodeClassifier kgnet:TargetNode dblp:Publication .
  ?NodeClassifier kgnet:NodeLabel dblp:publishedIn .
}
"""

NC_TRAIN = """{
  "Name": "DBLP_Paper-Venue_Classifier",
  "GML-Task": {
    "TaskType": "<https://www.kgnet.com/NodeClassifier>",
    "TargetNode": "<https://dblp.org/rdf/schema#Publication>",
    "NodeLable": "<https://dblp.org/rdf/schema#publishedIn>"
  },
  "Task Budget": {"MaxMemory": "50GB", "MaxTime": "1h", "Priority": "ModelScore"}
}"""

LP_TRAIN = """{
  "Name": "DBLP_Author-Affiliation_Predictor",
  "GML-Task": {
    "TaskType": "<https://www.kgnet.com/LinkPredictor>",
    "SourceNode": "<https://dblp.org/rdf/schema#Person>",
    "DestinationNode": "<https://dblp.org/rdf/schema#Affiliation>"
  },
  "Task Budget": {"MaxMemory": "50GB", "MaxTime": "1h", "Priority": "ModelScore"}
}"""


def paper(i: int):
    return REC[f"p{i:02d}"]


def author(j: int):
    return PID[f"a{j}"]


def true_venue(i: int):
    return VENUES[i // 15]


def toy_dblp() -> list:
    """
    Thirty papers in two venues written by two disjoint groups of five
    authors. Paper ``i`` of a group is written by authors ``i mod 5`` and
    ``i+1 mod 5`` of that group, so every paper shares authors with at
    least eight other papers of its own venue and none of the other.
    Authors of a group share one affiliation and cite each other as
    co-authors in a ring.
    """
    triples = []
    for venue in VENUES:
        triples.append((venue, RDF.type, DBLP.Venue))
    for org in AFFILIATIONS:
        triples.append((org, RDF.type, DBLP.Affiliation))
    for j in range(N_AUTHORS):
        group = j // 5
        triples += [
            (author(j), RDF.type, DBLP.Person),
            (author(j), DBLP.affiliation, AFFILIATIONS[group]),
            (author(j), DBLP.coauthorWith, author(group * 5 + (j + 1) % 5)),
        ]
    for i in range(N_PAPERS):
        group = i // 15
        triples += [
            (paper(i), RDF.type, DBLP.Publication),
            (paper(i), DBLP.title, Literal(f"Paper {i}")),
            (paper(i), DBLP.authoredBy, author(group * 5 + i % 5)),
            (paper(i), DBLP.authoredBy, author(group * 5 + (i + 1) % 5)),
            (paper(i), DBLP.publishedIn, true_venue(i)),
        ]
    return triples


def nc_spec(**extra) -> TrainGmlSpec:
    """Venue classification of publications."""
    return TrainGmlSpec(name="venue", task_type=TaskType.NodeClassifier, target_node_type=str(DBLP.Publication),
                        label_predicate=str(DBLP.publishedIn), budget=BUDGET, **extra)


def lp_spec(**extra) -> TrainGmlSpec:
    """Affiliation prediction for persons."""
    return TrainGmlSpec(name="affiliation", task_type=TaskType.LinkPredictor, source_node_type=str(DBLP.Person),
                        destination_node_type=str(DBLP.Affiliation), budget=BUDGET, **extra)


class CountingGmlaas:
    """Delegating GMLaaS client that counts inference requests per operation."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = Counter()
        self.requests = []

    def reset(self):
        self.calls.clear()
        self.requests.clear()

    def total(self) -> int:
        return sum(self.calls[name] for name in ("infer_node_class", "infer_links", "knn"))

    def _record(self, name, *args):
        self.calls[name] += 1
        self.requests.append((name, args))

    def train(self, spec, package_path):
        return self.inner.train(spec, package_path)

    def get_model(self, artifact_ref):
        return self.inner.get_model(artifact_ref)

    def list_models(self):
        return self.inner.list_models()

    def delete_model(self, artifact_ref):
        self._record("delete_model", artifact_ref)
        return self.inner.delete_model(artifact_ref)

    def delete_models(self, artifact_refs):
        self._record("delete_models", artifact_refs)
        return self.inner.delete_models(artifact_refs)

    def infer_node_class(self, artifact_ref, targets=None):
        self._record("infer_node_class", artifact_ref, targets)
        return self.inner.infer_node_class(artifact_ref, targets)

    def infer_links(self, artifact_ref, sources=None, k=10):
        self._record("infer_links", artifact_ref, sources, k)
        return self.inner.infer_links(artifact_ref, sources, k)

    def knn(self, artifact_ref, queries, k):
        self._record("knn", artifact_ref, queries, k)
        return self.inner.knn(artifact_ref, queries, k)


@pytest.fixture
def kg_triples():
    return toy_dblp()


@pytest.fixture
def store(kg_triples):
    store = TripleStore()
    store.insert("urn:graph:kg", kg_triples)
    return store


@pytest.fixture
def nc_prime():
    """d1h1 scope of dblp:Publication: every triple whose subject is a paper."""
    return {t for t in toy_dblp() if str(t[0]).startswith(str(REC))}


@pytest.fixture
def lp_prime(store):
    spec = SamplingSpec(target_node_type=str(DBLP.Person), direction=2, hops=1)
    return extract_subgraph(StoreBackend(store, "urn:graph:kg"), spec)


@pytest.fixture
def nc_package(nc_prime):
    return transform(nc_prime, nc_spec())


@pytest.fixture
def lp_package(lp_prime):
    return transform(lp_prime, lp_spec(link_predicates=[str(DBLP.affiliation)]))


@pytest.fixture(autouse=True)
def _restore_root_logging():
    """Drop root handlers bound to a finished test's captured stderr (the CLI reconfigures logging)."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def config(tmp_path):
    return PlatformConfig(
        db_url=f"sqlite:///{tmp_path / 'kgnet.db'}",
        store_dir=str(tmp_path / "store"),
        package_dir=str(tmp_path / "packages"),
        cache_dir=str(tmp_path / "cache"),
        method_profiles_path=str(PROJECT_ROOT / "config" / "method_profiles.json"),
    )


@pytest.fixture
def platform(config):
    platform = build_platform(config, persist=False)
    platform.gmlaas = CountingGmlaas(platform.gmlaas)
    platform.governor.gmlaas = platform.gmlaas
    yield platform
    platform.close()


@pytest.fixture
def loaded_platform(platform, kg_triples):
    platform.store.insert(platform.config.data_graph, kg_triples)
    return platform


@pytest.fixture
def client(platform):
    return TestClient(create_app(ServiceRole.all, platform=platform))
