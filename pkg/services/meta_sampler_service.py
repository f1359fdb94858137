"""
Meta-sampling: extraction of the task-specific subgraph KG'.

For a target type ``T`` the target set is every node with an explicit
``rdf:type T`` triple. The scope is set by the direction ``d`` (1 =
outgoing, 2 = outgoing and incoming) and hops ``h``:

- d1h1: the targets' outgoing triples (their type triples included).
- d2h1: plus the triples pointing at a target.
- h=2 extends each direction independently: outgoing triples of hop-1
  objects, and (d=2) incoming triples of hop-1 subjects.

The scope is expressed as one SPARQL CONSTRUCT whose WHERE clause is a
UNION of hop blocks, so any SPARQL 1.1 endpoint can run it. Extraction
pages the same WHERE clause as a SELECT ordered by every template
variable and instantiates the template client-side.
"""

import logging
from pathlib import Path
from typing import Optional

from rdflib import RDF, URIRef

from schemas.datasetschema import SamplingSpec
from schemas.rdfschema import Triple
from services.rdf_store_service import Backend, serialize_triples
from utils.enums import TaskType

logger = logging.getLogger(__name__)

# named sampling queries: (direction, hops)
SAMPLING_CATALOG = {
    "SQ": (1, 1),
    "BSQ": (2, 1),
    "PQ": (1, 2),
    "BPQ": (2, 2),
}

DEFAULT_SCOPES = {
    TaskType.NodeClassifier: (1, 1),
    TaskType.LinkPredictor: (2, 1),
    TaskType.NodeSimilarity: (1, 1),
}


def default_spec(task_type: TaskType, target_node_type: str, direction: Optional[int] = None,
                 hops: Optional[int] = None) -> SamplingSpec:
    """
    Sampling scope for a task; an explicit ``direction``/``hops`` wins.

    NodeClassifier -> d1h1 and LinkPredictor -> d2h1. NodeSimilarity has no
    measured default and gets d1h1.
    """
    default_d, default_h = DEFAULT_SCOPES[TaskType(task_type)]
    if task_type == TaskType.NodeSimilarity and (direction is None or hops is None):
        logger.warning("no measured sampling default for NodeSimilarity; using d1h1")
    return SamplingSpec(target_node_type=target_node_type,
                        direction=direction if direction is not None else default_d,
                        hops=hops if hops is not None else default_h)


def _scope(spec: SamplingSpec) -> tuple[list[tuple[str, str, str]], list[str]]:
    """Template triples (variable names) and the UNION blocks of a scope."""
    target = f"?s a <{spec.target_node_type}> ."
    template = [("s", "p", "o")]
    blocks = [f"{target} ?s ?p ?o ."]
    if spec.direction == 2:
        template.append(("i", "pi", "s"))
        blocks.append(f"{target} ?i ?pi ?s .")
    if spec.hops == 2:
        template.append(("o", "p2", "o2"))
        blocks.append(f"{target} ?s ?p ?o . ?o ?p2 ?o2 .")
        if spec.direction == 2:
            template.append(("i2", "pi2", "i"))
            blocks.append(f"{target} ?i ?pi ?s . ?i2 ?pi2 ?i .")
    return template, blocks


def _where(blocks: list[str]) -> str:
    return "WHERE {\n  " + "\n  UNION ".join("{ " + block + " }" for block in blocks) + "\n}"


def build_bgp(spec: SamplingSpec) -> str:
    """CONSTRUCT query covering the sampling scope."""
    template, blocks = _scope(spec)
    construct = "\n  ".join(" ".join(f"?{name}" for name in triple) + " ." for triple in template)
    return f"CONSTRUCT {{\n  {construct}\n}}\n{_where(blocks)}"


def page_query(spec: SamplingSpec, limit: int, offset: int) -> str:
    """
    One page of the scope's solutions, ordered by every template variable.

    Solutions of different UNION blocks bind different variables, so the
    order is total and pages neither overlap nor skip across requests.
    """
    template, blocks = _scope(spec)
    variables = " ".join(f"?{name}" for name in dict.fromkeys(name for triple in template for name in triple))
    return f"SELECT {variables}\n{_where(blocks)}\nORDER BY {variables}\nLIMIT {limit}\nOFFSET {offset}"


def extract_subgraph(backend: Backend, spec: SamplingSpec, page_size: int = 100_000) -> set[Triple]:
    """
    Collect the scope page by page (ordered SELECT with LIMIT/OFFSET) and
    instantiate the template triples of every solution; stops at the first
    short page.

    Returns:
        set: KG' triples.
    """
    template, _ = _scope(spec)
    logger.debug("meta-sampling query:\n%s", build_bgp(spec))
    subgraph: set[Triple] = set()
    offset = 0
    while True:
        page = backend.select(page_query(spec, page_size, offset))
        for row in page.rows:
            for names in template:
                terms = tuple(row.get(name) for name in names)
                if all(term is not None for term in terms):
                    subgraph.add(terms)
        if len(page) < page_size:
            break
        offset += page_size
    if not subgraph:
        logger.warning("no nodes of type <%s> on %s; KG' is empty", spec.target_node_type, backend.name)
    else:
        logger.info("extracted %d triples (%s) for <%s> from %s", len(subgraph), spec.label,
                    spec.target_node_type, backend.name)
    return subgraph


def resolve_link_predicates(backend: Backend, source_type: str, destination_type: str) -> list[str]:
    """Predicates linking nodes of ``source_type`` to nodes of ``destination_type``."""
    query = (
        "SELECT DISTINCT ?p WHERE {\n"
        f"  ?s a <{source_type}> .\n"
        f"  ?d a <{destination_type}> .\n"
        "  ?s ?p ?d .\n"
        "}"
    )
    table = backend.select(query)
    predicates = sorted({str(p) for p in table.column("p") if isinstance(p, URIRef) and p != RDF.type})
    logger.info("link predicates <%s> -> <%s>: %s", source_type, destination_type, predicates or "none")
    return predicates


def write_subgraph(triples, path) -> int:
    """Write KG' as canonical N-Triples; returns the triple count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    triples = set(triples)
    path.write_bytes(serialize_triples(triples))
    return len(triples)
