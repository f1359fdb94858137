import random
from collections import Counter
from types import SimpleNamespace

import pytest
import requests
from rdflib import RDF, Literal, URIRef, Variable

from services.rdf_store_service import (StoreBackend, TripleStore, from_sparql_json, parse_ntriples,
                                        parse_term, serialize_triples, sort_key, to_csv, to_sparql_json)
from services.sparql_client_service import SparqlEndpoint
from utils.errors import (EndpointConnectionError, EndpointHTTPError, EndpointTimeout, MalformedTriple,
                          NTriplesParseError, QuerySemanticError)

from tests.conftest import DBLP, N_PAPERS, VENUES, paper, toy_dblp

KG = "urn:graph:kg"


def test_insert_has_set_semantics(kg_triples):
    store = TripleStore()
    assert store.insert(KG, kg_triples) == len(kg_triples)
    assert store.insert(KG, kg_triples[:10]) == 0
    assert store.size(KG) == len(kg_triples)
    assert store.graph_names() == [KG]


def test_malformed_triple_names_index_and_inserts_nothing():
    store = TripleStore()
    good = (paper(0), RDF.type, DBLP.Publication)
    bad = (Literal("not a subject"), RDF.type, DBLP.Publication)
    with pytest.raises(MalformedTriple) as excinfo:
        store.insert(KG, [good, bad])
    assert excinfo.value.context["index"] == 1
    assert store.size(KG) == 0


def test_relative_iri_is_malformed():
    store = TripleStore()
    with pytest.raises(MalformedTriple):
        store.insert(KG, [(URIRef("paper1"), RDF.type, DBLP.Publication)])


def test_delete_counts_present_triples(store):
    triple = (paper(0), DBLP.publishedIn, VENUES[0])
    missing = (paper(0), DBLP.publishedIn, VENUES[1])
    assert store.delete(KG, [triple, missing]) == 1
    assert triple not in store.triples(KG)


def test_match_bgp_joins_and_orders(store):
    patterns = [
        (Variable("paper"), DBLP.publishedIn, VENUES[0]),
        (Variable("paper"), DBLP.title, Variable("title")),
    ]
    table = store.match_bgp(KG, patterns)
    assert table.variables == ["paper", "title"]
    assert len(table) == N_PAPERS // 2
    assert table.rows[0] == {"paper": paper(0), "title": Literal("Paper 0")}
    assert table.column("paper") == sorted(table.column("paper"), key=str)


def test_match_bgp_projection_keeps_duplicates(store):
    patterns = [(Variable("paper"), DBLP.publishedIn, Variable("venue"))]
    table = store.match_bgp(KG, patterns, projection=["venue"])
    assert table.variables == ["venue"]
    assert len(table) == N_PAPERS
    assert table.column("venue") == [VENUES[0]] * (N_PAPERS // 2) + [VENUES[1]] * (N_PAPERS // 2)


def _random_graph_and_patterns(seed: int):
    rng = random.Random(seed)
    nodes = [URIRef(f"https://example.org/n{i}") for i in range(rng.randint(1, 8))]
    predicates = [URIRef(f"https://example.org/p{i}") for i in range(3)]
    literals = [Literal(i) for i in range(2)]
    triples = list({(rng.choice(nodes), rng.choice(predicates), rng.choice(nodes + literals))
                    for _ in range(rng.randint(1, 50))})
    names = [Variable(name) for name in "xyzw"]

    def term(pool):
        return rng.choice(names) if rng.random() < 0.6 else rng.choice(pool)

    patterns = [(term(nodes), term(predicates), term(nodes + literals)) for _ in range(rng.randint(1, 4))]
    return triples, patterns


def _nested_loop_join(triples, patterns) -> list[dict]:
    solutions = [{}]
    for pattern in patterns:
        extended = []
        for solution in solutions:
            for triple in triples:
                candidate = dict(solution)
                for term, value in zip(pattern, triple):
                    if isinstance(term, Variable):
                        if candidate.setdefault(str(term), value) != value:
                            break
                    elif term != value:
                        break
                else:
                    extended.append(candidate)
        solutions = extended
    return solutions


@pytest.mark.parametrize("seed", range(100))
def test_match_bgp_agrees_with_nested_loop_join(seed):
    triples, patterns = _random_graph_and_patterns(seed)
    store = TripleStore()
    store.insert(KG, triples)
    table = store.match_bgp(KG, patterns)
    expected = _nested_loop_join(triples, patterns)
    assert len(table) == len(expected)
    assert Counter(sort_key(row, table.variables) for row in table.rows) == \
        Counter(sort_key(row, table.variables) for row in expected)
    projected = store.match_bgp(KG, patterns, projection=table.variables[:1])
    assert len(projected) == len(expected)


def test_match_bgp_edge_cases(store):
    with pytest.raises(QuerySemanticError):
        store.match_bgp(KG, [])
    table = store.match_bgp("urn:graph:missing", [(Variable("s"), RDF.type, DBLP.Publication)])
    assert table.rows == []
    no_match = store.match_bgp(KG, [(Variable("s"), RDF.type, DBLP.Thesis)])
    assert no_match.variables == ["s"]
    assert len(no_match) == 0


def test_sparql_query_kinds(store):
    table = store.query(KG, "PREFIX dblp: <https://dblp.org/rdf/schema#>\n"
                            "SELECT ?p WHERE { ?p a dblp:Publication }")
    assert len(table) == N_PAPERS
    assert store.query(KG, "ASK { ?s ?p ?o }") is True
    triples = store.query(KG, "PREFIX dblp: <https://dblp.org/rdf/schema#>\n"
                              "CONSTRUCT { ?p dblp:publishedIn ?v } WHERE { ?p dblp:publishedIn ?v }")
    assert len(triples) == N_PAPERS


def test_ntriples_parse_error_reports_line():
    text = ('<https://dblp.org/rec/p00> <https://dblp.org/rdf/schema#title> "Paper 0" .\n'
            '<https://dblp.org/rec/p01> <https://dblp.org/rdf/schema#title> "Paper 1"\n')
    with pytest.raises(NTriplesParseError) as excinfo:
        parse_ntriples(text)
    assert excinfo.value.context["line"] == 2
    assert "Failed to eat" in excinfo.value.context["reason"]


def test_ntriples_rejects_literal_subject():
    with pytest.raises(NTriplesParseError):
        parse_ntriples('"x" <https://dblp.org/rdf/schema#title> "y" .\n')


def test_ntriples_escapes_and_comments():
    title = Literal('A "quoted"\ntitle', lang="en")
    data = serialize_triples([(paper(0), DBLP.title, title)])
    assert data == b'<https://dblp.org/rec/p00> <https://dblp.org/rdf/schema#title> "A \\"quoted\\"\\ntitle"@en .\n'
    parsed = parse_ntriples("# comment\n\n" + data.decode("utf-8"))
    assert parsed == [(paper(0), DBLP.title, title)]


def test_ntriples_keeps_lexical_forms_and_blank_node_labels():
    text = ('_:b1 <https://dblp.org/rdf/schema#pages> "007"^^<http://www.w3.org/2001/XMLSchema#integer> .\n'
            '_:b1 <https://dblp.org/rdf/schema#title> "caf\\u00e9\\ttab" .\n')
    first, second = parse_ntriples(text)
    assert str(first[0]) == "b1" and first[0] == second[0]
    assert str(first[2]) == "007"
    assert second[2] == Literal("café\ttab")
    assert serialize_triples([first]).decode("utf-8") == text.splitlines()[0] + "\n"


def test_parse_term_reads_single_terms():
    assert parse_term("<https://dblp.org/rec/p00>") == paper(0)
    assert parse_term('"Paper 0"@en') == Literal("Paper 0", lang="en")
    assert str(parse_term("_:n7")) == "n7"
    with pytest.raises(ValueError):
        parse_term("<https://dblp.org/rec/p00> trailing")
    with pytest.raises(ValueError):
        parse_term("?x")


def test_serialization_is_sorted_and_canonical(kg_triples):
    forward = serialize_triples(kg_triples)
    backward = serialize_triples(reversed(kg_triples))
    assert forward == backward
    lines = forward.decode("utf-8").splitlines()
    assert lines == sorted(lines)


def test_save_and_restore(tmp_path, store):
    store.insert("https://www.kgnet.com/kgnet", [(URIRef("https://www.kgnet.com/model/x"), RDF.type,
                                                  URIRef("https://www.kgnet.com/NodeClassifier"))])
    store.save(tmp_path)
    restored = TripleStore()
    assert restored.restore(tmp_path) == store.size(KG) + 1
    assert restored.triples(KG) == store.triples(KG)
    assert restored.graph_names() == store.graph_names()


def test_load_ntriples_file(tmp_path):
    path = tmp_path / "toy.nt"
    path.write_bytes(serialize_triples(toy_dblp()))
    store = TripleStore()
    assert store.load_ntriples(path, KG) == len(set(toy_dblp()))
    assert store.load_ntriples(path, KG) == 0


def test_sparql_json_and_csv(store):
    table = store.match_bgp(KG, [(paper(0), DBLP.title, Variable("title")),
                                 (paper(0), DBLP.publishedIn, Variable("venue"))])
    payload = to_sparql_json(table)
    assert payload["head"]["vars"] == ["title", "venue"]
    assert payload["results"]["bindings"][0]["venue"] == {"type": "uri", "value": str(VENUES[0])}
    assert from_sparql_json(payload).rows == table.rows
    assert to_csv(table) == f"title,venue\nPaper 0,{VENUES[0]}\n"


def test_store_backend_rejects_wrong_query_kind(store):
    backend = StoreBackend(store, KG)
    with pytest.raises(QuerySemanticError):
        backend.select("CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }")
    with pytest.raises(QuerySemanticError):
        backend.construct("SELECT ?s WHERE { ?s ?p ?o }")


# LOOPBACK ENDPOINT
def test_loopback_matches_embedded_store(loaded_platform, client):
    query = ("PREFIX dblp: <https://dblp.org/rdf/schema#>\n"
             "SELECT ?paper ?venue WHERE { ?paper dblp:publishedIn ?venue }")
    endpoint = SparqlEndpoint("http://testserver/sparql", default_graph=KG, session=client)
    remote = endpoint.select(query)
    local = loaded_platform.store.query(KG, query)
    assert remote.variables == local.variables
    assert remote.rows == local.rows

    construct = "CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"
    assert set(endpoint.construct(construct)) == loaded_platform.store.triples(KG)


def test_loopback_get_and_ask(loaded_platform, client):
    response = client.get("/sparql", params={"query": "ASK { ?s ?p ?o }"})
    assert response.status_code == 200
    assert response.json()["boolean"] is True


def test_loopback_is_read_only(loaded_platform, client):
    response = client.post("/sparql", data={"update": "INSERT DATA { <urn:a> <urn:b> <urn:c> }"})
    assert response.status_code == 403
    assert response.json()["detail"]["error"] == "ReadOnlyEndpoint"
    assert loaded_platform.store.size(KG) == len(set(toy_dblp()))


def test_loopback_bad_query_is_client_error(client):
    response = client.post("/sparql", data={"query": "SELECT WHERE {"})
    assert response.status_code == 400
    assert response.json()["detail"]["error"] == "QuerySyntaxError"


# INGESTION ROUTES
def test_upload_list_and_export(platform, client):
    data = serialize_triples(toy_dblp())
    response = client.post("/kg/upload", files={"file": ("toy.nt", data, "application/n-triples")})
    assert response.status_code == 200
    assert response.json() == {"graph": KG, "parsed": len(set(toy_dblp())), "added": len(set(toy_dblp()))}
    graphs = client.get("/kg/graphs").json()["graphs"]
    assert graphs == [{"graph": KG, "triples": len(set(toy_dblp()))}]
    assert client.get("/kg/export").content == data


def test_upload_reports_bad_line(client):
    data = b"<https://dblp.org/rec/p00> <https://dblp.org/rdf/schema#title> .\n"
    response = client.post("/kg/upload", files={"file": ("bad.nt", data, "application/n-triples")})
    assert response.status_code == 400
    assert response.json()["detail"]["line"] == 1


# REMOTE ENDPOINT ERRORS
class _FailingSession:
    def __init__(self, outcome):
        self.outcome = outcome

    def post(self, url, data=None, headers=None, timeout=None):
        if isinstance(self.outcome, Exception):
            raise self.outcome
        return self.outcome


@pytest.mark.parametrize("outcome, error", [
    (requests.ConnectionError("refused"), EndpointConnectionError),
    (requests.Timeout("slow"), EndpointTimeout),
    (SimpleNamespace(status_code=500, text="boom"), EndpointHTTPError),
])
def test_endpoint_failures_are_mapped(outcome, error):
    endpoint = SparqlEndpoint("http://example.org/sparql", session=_FailingSession(outcome))
    with pytest.raises(error) as excinfo:
        endpoint.select("SELECT * WHERE { ?s ?p ?o }")
    assert excinfo.value.exit_code == 2
    assert excinfo.value.context["endpoint"] == "http://example.org/sparql"
    assert excinfo.value.context["query"] == "SELECT * WHERE { ?s ?p ?o }"
