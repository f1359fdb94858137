"""
Embedded RDF quad store and N-Triples codec.

The store keeps named graphs in an rdflib ``Dataset``. Basic graph
patterns are joined here (index nested loops over the dataset's triple
index); full SPARQL text against the embedded store is evaluated by
rdflib's algebra engine, one named graph at a time. Anything larger is
meant for a remote endpoint (see ``sparql_client_service``).

N-Triples goes through rdflib's own line parser and literal quoting; the
wrapper here only adds line numbers to errors and keeps blank node labels
and literal lexical forms as written.

Result order is deterministic: rows are sorted by the N-Triples form of
the first variable, then of the following ones.
"""

import hashlib
import io
import json
import logging
import threading
from pathlib import Path
from typing import Iterable, Optional, Protocol, Union

import pandas as pd
from rdflib import BNode, Dataset, Literal, URIRef, Variable
from rdflib.compat import decodeUnicodeEscape
from rdflib.exceptions import ParserError
from rdflib.plugins.parsers.ntriples import W3CNTriplesParser, r_literal, unquote
from rdflib.plugins.serializers.nt import _quoteLiteral
from rdflib.term import Node

from schemas.rdfschema import BindingTable, Triple, TriplePattern
from utils.errors import (KGNetError, MalformedTriple, NTriplesParseError,
                          QuerySemanticError, QuerySyntaxError)
from utils.locks import ReadWriteLock
from utils.namespaces import is_absolute_iri

logger = logging.getLogger(__name__)


# N-TRIPLES TERM CODEC
class _KeepLabels(dict):
    """Blank node context that maps every label to itself."""

    def get(self, label, default=None):
        return label


_LABELS = _KeepLabels()


class _TripleList(list):
    def triple(self, subject, predicate, obj):
        self.append((subject, predicate, obj))


class _LineParser(W3CNTriplesParser):
    """rdflib's N-Triples parser, fed line by line; literal lexical forms are kept verbatim."""

    def __init__(self, sink: Optional[_TripleList] = None):
        super().__init__(sink=sink if sink is not None else _TripleList(), bnode_context=_LABELS)

    def literal(self):
        if not self.peek('"'):
            return False
        lexical, lang, datatype = self.eat(r_literal).groups()
        return Literal(unquote(lexical), lang=lang or None,
                       datatype=URIRef(unquote(datatype)) if datatype else None, normalize=False)


def unescape_literal(lexical: str) -> str:
    """Resolve ``\\n``, ``\\"`` and ``\\uXXXX`` escapes of a quoted string body."""
    return decodeUnicodeEscape(lexical)


def parse_term(text: str) -> Node:
    """Parse one term in N-Triples syntax (``<iri>``, ``_:b``, ``"lex"@en``...)."""
    parser = _LineParser()
    parser.line = text.strip()
    try:
        term = parser.object(_LABELS)
    except ParserError as exc:
        raise ValueError(f"not an N-Triples term: {text!r}") from exc
    if parser.line:
        raise ValueError(f"not an N-Triples term: {text!r}")
    return term


def term_to_nt(term: Optional[Node]) -> str:
    """N-Triples form of a term; variables render as ``?name``."""
    if term is None:
        return ""
    if isinstance(term, Literal):
        # Literal.n3() switches to triple quotes on newlines; N-Triples needs escapes
        return _quoteLiteral(term)
    if isinstance(term, (URIRef, BNode, Variable)):
        return term.n3()
    raise TypeError(f"unsupported term {term!r}")


def triple_to_nt(triple: Triple) -> str:
    """One N-Triples line without the newline."""
    return " ".join(term_to_nt(t) for t in triple) + " ."


def parse_ntriples(text: str) -> list[Triple]:
    """
    Parse N-Triples text.

    Raises:
        NTriplesParseError: with the 1-based line number and the reason.
    """
    triples = _TripleList()
    parser = _LineParser(triples)
    for line_no, line in enumerate(text.splitlines(), start=1):
        parser.line = line
        try:
            parser.parseline(bnode_context=_LABELS)
        except ParserError as exc:
            raise NTriplesParseError(f"line {line_no}: {exc}", line=line_no, reason=str(exc)) from exc
    return list(triples)


def serialize_triples(triples: Iterable[Triple]) -> bytes:
    """Canonical N-Triples: one triple per line, lines sorted, UTF-8."""
    lines = sorted(triple_to_nt(t) for t in triples)
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


def validate_triple(triple, index: int) -> Triple:
    """Check the RDF data model constraints of one triple."""
    reason = None
    if not isinstance(triple, tuple) or len(triple) != 3:
        reason = "not a 3-tuple"
    else:
        subject, predicate, obj = triple
        if isinstance(subject, Variable) or not isinstance(subject, (URIRef, BNode)):
            reason = "subject must be an IRI or blank node"
        elif isinstance(predicate, Variable) or not isinstance(predicate, URIRef):
            reason = "predicate must be an IRI"
        elif isinstance(obj, Variable) or not isinstance(obj, (URIRef, BNode, Literal)):
            reason = "object must be an IRI, blank node or literal"
        else:
            for term in (subject, predicate, obj):
                if isinstance(term, URIRef) and not is_absolute_iri(str(term)):
                    reason = f"IRI is not absolute: {term}"
    if reason:
        raise MalformedTriple(f"triple {index}: {reason}", index=index, reason=reason)
    return triple


def sort_key(row: dict, variables: list[str]) -> tuple:
    """Deterministic row order: N-Triples text of each variable in turn."""
    return tuple(term_to_nt(row.get(v)) for v in variables)


# RESULT CODECS
def _term_to_json(term: Node) -> dict:
    if isinstance(term, URIRef):
        return {"type": "uri", "value": str(term)}
    if isinstance(term, BNode):
        return {"type": "bnode", "value": str(term)}
    value = {"type": "literal", "value": str(term)}
    if term.language:
        value["xml:lang"] = term.language
    elif term.datatype:
        value["datatype"] = str(term.datatype)
    return value


def _term_from_json(obj: dict) -> Node:
    kind = obj["type"]
    if kind == "uri":
        return URIRef(obj["value"])
    if kind == "bnode":
        return BNode(obj["value"])
    if kind in ("literal", "typed-literal"):
        datatype = obj.get("datatype")
        return Literal(obj["value"], lang=obj.get("xml:lang"),
                       datatype=URIRef(datatype) if datatype else None, normalize=False)
    raise ValueError(f"unknown term type {kind!r}")


def to_sparql_json(table: BindingTable) -> dict:
    """SPARQL 1.1 JSON results; unbound cells are omitted."""
    return {
        "head": {"vars": list(table.variables)},
        "results": {"bindings": [
            {v: _term_to_json(row[v]) for v in table.variables if row.get(v) is not None}
            for row in table.rows
        ]},
    }


def from_sparql_json(payload: dict) -> BindingTable:
    """Parse SPARQL 1.1 JSON results; missing bindings become ``None``."""
    variables = list(payload["head"]["vars"])
    rows = []
    for binding in payload["results"]["bindings"]:
        rows.append({v: _term_from_json(binding[v]) if v in binding else None for v in variables})
    return BindingTable(variables, rows)


def _plain_value(term: Optional[Node]) -> str:
    if term is None:
        return ""
    return str(term)


def to_csv(table: BindingTable) -> str:
    """SPARQL 1.1 CSV results (plain lexical values, empty cell when unbound)."""
    frame = pd.DataFrame([[_plain_value(row.get(v)) for v in table.variables] for row in table.rows],
                         columns=table.variables)
    return frame.to_csv(index=False, lineterminator="\n")


# STORE
class TripleStore:
    """In-memory named-graph store; writers are exclusive per graph."""

    def __init__(self):
        self.dataset = Dataset()
        self._locks: dict[str, ReadWriteLock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, graph: str) -> ReadWriteLock:
        with self._locks_guard:
            return self._locks.setdefault(str(graph), ReadWriteLock())

    def _context(self, graph: str):
        if not is_absolute_iri(str(graph)):
            raise MalformedTriple(f"graph name is not an absolute IRI: {graph}", graph=str(graph))
        return self.dataset.get_context(URIRef(str(graph)))

    def graph_names(self) -> list[str]:
        """Named graphs holding at least one triple."""
        names = {str(ctx.identifier) for ctx in self.dataset.contexts() if len(ctx)}
        return sorted(names)

    def size(self, graph: str) -> int:
        with self._lock(graph).read():
            return len(self._context(graph))

    def insert(self, graph: str, triples: Iterable) -> int:
        """
        Add triples to ``graph`` with set semantics.

        Returns:
            int: number of triples that were not present before.

        Raises:
            MalformedTriple: naming the index of the first bad triple; nothing
                is inserted in that case.
        """
        context = self._context(graph)
        checked = [validate_triple(t, i) for i, t in enumerate(triples)]
        if checked:
            context = self.dataset.graph(URIRef(str(graph)))
        with self._lock(graph).write():
            before = len(context)
            for triple in checked:
                context.add(triple)
            added = len(context) - before
        if added:
            logger.debug("inserted %d triples into <%s>", added, graph)
        return added

    def delete(self, graph: str, triples: Iterable[Triple]) -> int:
        """Remove triples from ``graph``; returns how many were present."""
        context = self._context(graph)
        removed = 0
        with self._lock(graph).write():
            for triple in triples:
                if triple in context:
                    context.remove(triple)
                    removed += 1
        return removed

    def clear(self, graph: str) -> None:
        with self._lock(graph).write():
            self._context(graph).remove((None, None, None))

    def triples(self, graph: str) -> set[Triple]:
        """Snapshot of every triple in ``graph``."""
        with self._lock(graph).read():
            return set(self._context(graph).triples((None, None, None)))

    def match_bgp(self, graph: str, patterns: list[TriplePattern],
                  projection: Optional[list[str]] = None) -> BindingTable:
        """
        Evaluate a conjunction of triple patterns over ``graph``.

        Patterns are joined left to right; each partial solution is
        substituted into the next pattern and answered from the triple
        index. Unknown graphs yield an empty table.
        """
        if not patterns:
            raise QuerySemanticError("a basic graph pattern needs at least one triple pattern")
        variables = []
        for pattern in patterns:
            for term in pattern:
                if isinstance(term, Variable) and str(term) not in variables:
                    variables.append(str(term))
        projection = list(projection or variables)

        context = self._context(graph)
        solutions: list[dict] = [{}]
        with self._lock(graph).read():
            for pattern in patterns:
                extended = []
                for solution in solutions:
                    bound = tuple(solution.get(str(t)) if isinstance(t, Variable) else t for t in pattern)
                    for triple in context.triples(bound):
                        candidate = dict(solution)
                        if _bind(candidate, pattern, triple):
                            extended.append(candidate)
                solutions = extended
                if not solutions:
                    break

        # bag semantics: projecting away a variable keeps one row per solution
        rows = [{v: s.get(v) for v in projection} for s in solutions]
        rows.sort(key=lambda r: sort_key(r, projection))
        return BindingTable(projection, rows)

    def query(self, graph: str, text: str) -> Union[BindingTable, list[Triple], bool]:
        """
        Evaluate SPARQL query text with ``graph`` as the default graph.

        SELECT returns a ``BindingTable``, CONSTRUCT/DESCRIBE a sorted list
        of triples, ASK a bool.
        """
        context = self._context(graph)
        with self._lock(graph).read():
            try:
                result = context.query(text)
            except KGNetError:
                raise
            except Exception as exc:  # pylint: disable=broad-except
                raise QuerySyntaxError(f"cannot evaluate SPARQL: {exc}", query=text) from exc
            if result.type == "SELECT":
                variables = [str(v) for v in result.vars]
                rows = [{v: row[i] for i, v in enumerate(variables)} for row in result]
            elif result.type == "ASK":
                return bool(result.askAnswer)
            else:
                return sorted(result.graph, key=triple_to_nt)
        rows.sort(key=lambda r: sort_key(r, variables))
        return BindingTable(variables, rows)

    def update(self, text: str) -> None:
        """Apply SPARQL UPDATE text (``GRAPH`` clauses address named graphs)."""
        try:
            self.dataset.update(text)
        except Exception as exc:  # pylint: disable=broad-except
            raise QuerySyntaxError(f"cannot apply SPARQL update: {exc}", query=text) from exc

    def load_ntriples(self, path, graph: str) -> int:
        """Load an N-Triples file into ``graph``; returns newly added triples."""
        text = Path(path).read_text(encoding="utf-8")
        triples = parse_ntriples(text)
        added = self.insert(graph, triples)
        logger.info("loaded %s into <%s>: %d parsed, %d new", path, graph, len(triples), added)
        return added

    def serialize_ntriples(self, graph: str) -> bytes:
        """Canonical N-Triples bytes of ``graph``."""
        return serialize_triples(self.triples(graph))

    def save(self, directory) -> None:
        """Write every non-empty graph to ``directory`` as N-Triples plus an index."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index = {}
        for name in self.graph_names():
            filename = f"graph_{hashlib.sha1(name.encode('utf-8')).hexdigest()[:12]}.nt"
            (directory / filename).write_bytes(self.serialize_ntriples(name))
            index[filename] = name
        for stale in directory.glob("graph_*.nt"):
            if stale.name not in index:
                stale.unlink()
        (directory / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")

    def restore(self, directory) -> int:
        """Load graphs written by ``save``; returns the number of triples added."""
        index_path = Path(directory) / "index.json"
        if not index_path.exists():
            return 0
        index = json.loads(index_path.read_text(encoding="utf-8"))
        return sum(self.load_ntriples(Path(directory) / name, graph) for name, graph in index.items())


def _bind(solution: dict, pattern: TriplePattern, triple: Triple) -> bool:
    for term, value in zip(pattern, triple):
        if isinstance(term, Variable):
            name = str(term)
            if name in solution and solution[name] != value:
                return False
            solution[name] = value
    return True


# BACKENDS
class Backend(Protocol):
    """What the sampler, governor and planner need from a triple source."""

    name: str

    def select(self, query: str) -> BindingTable: ...

    def construct(self, query: str) -> list[Triple]: ...

    def insert(self, triples: list[Triple]) -> int: ...

    def delete(self, triples: list[Triple]) -> int: ...


class StoreBackend:
    """One named graph of the embedded store, addressed as a default graph."""

    def __init__(self, store: TripleStore, graph: str):
        self.store = store
        self.graph = str(graph)
        self.name = f"embedded:<{self.graph}>"

    def select(self, query: str) -> BindingTable:
        result = self.store.query(self.graph, query)
        if not isinstance(result, BindingTable):
            raise QuerySemanticError("expected a SELECT query", query=query)
        return result

    def construct(self, query: str) -> list[Triple]:
        result = self.store.query(self.graph, query)
        if not isinstance(result, list):
            raise QuerySemanticError("expected a CONSTRUCT query", query=query)
        return result

    def insert(self, triples: list[Triple]) -> int:
        return self.store.insert(self.graph, triples)

    def delete(self, triples: list[Triple]) -> int:
        return self.store.delete(self.graph, triples)


def graph_stats(store: TripleStore) -> list[dict]:
    """Per-graph triple counts."""
    return [{"graph": name, "triples": store.size(name)} for name in store.graph_names()]


def read_ntriples_upload(content: bytes) -> list[Triple]:
    """Decode an uploaded N-Triples payload."""
    try:
        text = io.BytesIO(content).read().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NTriplesParseError("upload is not UTF-8", line=0, reason=str(exc)) from exc
    return parse_ntriples(text)
