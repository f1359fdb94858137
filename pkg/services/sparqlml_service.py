"""
SPARQL^ML front end: lexer, parser, AST classification and rendering.

Supported statements:

- ``SELECT ?v ... WHERE { ... }`` with user-defined predicates, e.g.::

      ?paper ?NodeClassifier ?venue .
      ?NodeClassifier a kgnet:NodeClassifier .
      ?NodeClassifier kgnet:TargetNode dblp:Publication .
      ?NodeClassifier kgnet:NodeLabel dblp:venue .

- ``INSERT INTO <kgnet> { ?s ?p ?o } WHERE { SELECT * FROM kgnet:TrainGML({...}) }``
  (the ``FROM {...}`` form without the function name is accepted too).
- ``DELETE WHERE { ... }``, ``DELETE { template } WHERE { ... }`` or a bare
  ``WHERE { ... }`` holding only model constraints.

The TrainGML argument is captured verbatim by the lexer and handed to
``parse_train_json``, which accepts strict JSON or the relaxed object
notation (unquoted keys and values, ``50GB``/``1h`` units).
"""

import json
import logging
import re
import threading
from typing import Optional
from urllib.parse import urljoin

from ply.lex import TOKEN, lex
from ply.yacc import yacc
from pydantic import ValidationError
from rdflib import RDF, XSD, Literal, URIRef, Variable

from schemas.sparqlmlschema import Budget, SparqlMlAst, TrainGmlSpec, UdpGroup
from services.meta_sampler_service import SAMPLING_CATALOG
from services.rdf_store_service import term_to_nt, unescape_literal
from utils.enums import (REQUIRED_CONSTRAINTS, ConstraintKey, Priority,
                         QueryKind, SplitStrategy, TaskType)
from utils.errors import (QuerySemanticError, QuerySyntaxError, TrainSpecError,
                          UnknownTaskType)
from utils.namespaces import (BASE_PREFIXES, KGNET, TRAIN_GML,
                              in_kgnet_namespace, is_absolute_iri, local_name)
from utils.units import parse_duration, parse_memory

logger = logging.getLogger(__name__)


# LEXER
KEYWORDS = {"PREFIX", "SELECT", "WHERE", "INSERT", "DELETE", "INTO", "FROM"}

tokens = [
    "TRAINGML", "FROM_BRACE", "IRIREF", "PNAME", "VAR", "STRING", "LANGTAG",
    "NUMBER", "KW_A", "LBRACE", "RBRACE", "DOT", "SEMI", "COMMA", "STAR", "DTYPE",
] + sorted(KEYWORDS)

PAT_PN_PREFIX = r"(?:[A-Za-z](?:[\w.\-]*[\w\-])?)?"
PAT_PNAME = PAT_PN_PREFIX + r":(?:[\w\-:%](?:[\w.\-:%]*[\w\-:%])?)?"
PAT_TRAINGML = r"(?:<[^<>\s]*TrainGML>|" + PAT_PN_PREFIX + r":TrainGML)\s*\("

t_LBRACE = r"\{"
t_RBRACE = r"\}"
t_DOT = r"\."
t_SEMI = r";"
t_COMMA = r","
t_STAR = r"\*"
t_DTYPE = r"\^\^"
t_ignore = " \t\r\f"
t_ignore_COMMENT = r"\#[^\n]*"


def _scan_payload(data: str, start: int, closer: str) -> int:
    """Index of the bracket closing a payload opened just before ``start``."""
    depth, quote, i = 0, None, start
    while i < len(data):
        char = data[i]
        if quote:
            if char == "\\":
                i += 2
                continue
            if char == quote:
                quote = None
        elif char in "\"'":
            quote = char
        elif char in "({[":
            depth += 1
        elif char in ")}]":
            if depth == 0:
                if char != closer:
                    break
                return i
            depth -= 1
        i += 1
    raise QuerySyntaxError("unterminated TrainGML payload", line=data.count("\n", 0, start) + 1,
                           column=_column(data, start))


def _capture(t, closer: str, keep_braces: bool):
    data = t.lexer.lexdata
    start = t.lexer.lexpos
    end = _scan_payload(data, start, closer)
    payload = data[start:end]
    t.lexer.lineno += data.count("\n", t.lexpos, end + 1)
    t.lexer.lexpos = end + 1
    return "{" + payload + "}" if keep_braces else payload


@TOKEN(PAT_TRAINGML)
def t_TRAINGML(t):
    function = re.sub(r"\s*\($", "", t.value)
    t.value = (function, _capture(t, ")", keep_braces=False))
    return t


def t_FROM_BRACE(t):
    r"[Ff][Rr][Oo][Mm]\s*\{"
    t.value = (None, _capture(t, "}", keep_braces=True))
    return t


def t_IRIREF(t):
    r"<[^<>\"{}|^`\\\x00-\x20]*>"
    t.value = t.value[1:-1]
    return t


@TOKEN(PAT_PNAME)
def t_PNAME(t):
    return t


def t_VAR(t):
    r"[?$][A-Za-z_0-9]\w*"
    t.value = t.value[1:]
    return t


def t_STRING(t):
    r"\"(?:[^\"\\\n\r]|\\.)*\"|'(?:[^'\\\n\r]|\\.)*'"
    return t


def t_LANGTAG(t):
    r"@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*"
    t.value = t.value[1:]
    return t


def t_NUMBER(t):
    r"[+\-]?[0-9]+(?:\.[0-9]+)?"
    return t


def t_WORD(t):
    r"[A-Za-z_][A-Za-z_0-9]*"
    if t.value == "a":
        t.type = "KW_A"
    elif t.value.upper() in KEYWORDS:
        t.type = t.value.upper()
    else:
        raise QuerySyntaxError(f"unknown keyword {t.value!r}", line=t.lineno,
                               column=_column(t.lexer.lexdata, t.lexpos))
    return t


def t_newline(t):
    r"\n+"
    t.lexer.lineno += len(t.value)


def t_error(t):
    raise QuerySyntaxError(f"unexpected character {t.value[0]!r}", line=t.lineno,
                           column=_column(t.lexer.lexdata, t.lexpos))


def _column(data: str, pos: int) -> int:
    return pos - (data.rfind("\n", 0, pos) + 1) + 1


_LEXER = lex()


def tokenize(text: str) -> list:
    """Token list of ``text``; the lexer is cloned so calls are independent."""
    lexer = _LEXER.clone()
    lexer.lineno = 1
    lexer.input(text)
    return list(iter(lexer.token, None))


# PARSER
CONSTRAINT_PREDICATES = {
    KGNET.TargetNode: ConstraintKey.TargetNode,
    KGNET.NodeLabel: ConstraintKey.NodeLabel,
    KGNET.SourceNode: ConstraintKey.SourceNode,
    KGNET.DestinationNode: ConstraintKey.DestinationNode,
    KGNET.TopK: ConstraintKey.TopK,
    KGNET["TopK-Links"]: ConstraintKey.TopK,
    KGNET.SimilarTo: ConstraintKey.SimilarTo,
}


class _UnexpectedEnd(Exception):
    pass


def _located(p, index: int, message: str) -> QuerySyntaxError:
    """Syntax error pinned to the terminal ``p[index]``."""
    return QuerySyntaxError(message, line=p.lineno(index), column=_column(p.lexer.lexdata, p.lexpos(index)))


def _resolve_prefixed(p, index: int, text: str) -> URIRef:
    prefix, local = text.split(":", 1)
    if prefix not in p.lexer.prefixes:
        raise _located(p, index, f"undeclared prefix {prefix!r}")
    return URIRef(p.lexer.prefixes[prefix] + local)


def _delete_ast(prefixes: dict, template: list, triples: list) -> SparqlMlAst:
    groups, data = extract_groups(triples, QueryKind.DeleteModel)
    if not groups:
        raise QuerySemanticError("a DELETE query must identify models with a typed user-defined predicate")
    if data:
        raise QuerySemanticError("a DELETE query may only hold model constraints",
                                 patterns=[_pattern_text(p) for p in data])
    return SparqlMlAst(kind=QueryKind.DeleteModel, prefixes=dict(prefixes),
                       gml_patterns=groups, delete_template=template)


def p_query(p):
    """query : prologue statement"""
    p[0] = p[2]


def p_prologue(p):
    """
    prologue : prologue PREFIX PNAME IRIREF
             | empty
    """
    if len(p) == 5:
        if not p[3].endswith(":"):
            raise _located(p, 3, "expected a prefix name ending in ':'")
        p.lexer.prefixes[p[3][:-1]] = p[4]


def p_empty(p):
    """empty :"""


def p_statement_select(p):
    """statement : SELECT projection optional_where group"""
    star = p[2] is None
    p[0] = build_select(p.lexer.prefixes, p[2] or [], star, p[4])


def p_projection(p):
    """
    projection : STAR
               | variables
    """
    p[0] = None if p[1] == "*" else p[1]


def p_variables(p):
    """
    variables : variables VAR
              | VAR
    """
    p[0] = p[1] + [p[2]] if len(p) == 3 else [p[1]]


def p_optional_where(p):
    """
    optional_where : WHERE
                   | empty
    """


def p_statement_insert(p):
    """statement : INSERT optional_into graph_ref group optional_where train_call"""
    spec = parse_train_json(p[6], prefixes=p.lexer.prefixes)
    p[0] = SparqlMlAst(kind=QueryKind.InsertTrain, prefixes=dict(p.lexer.prefixes),
                       data_patterns=p[4], train_payload=spec, target_graph=p[3])


def p_optional_into(p):
    """
    optional_into : INTO
                  | empty
    """


def p_graph_ref(p):
    """
    graph_ref : IRIREF
              | PNAME
    """
    if p.slice[1].type == "PNAME":
        p[0] = str(_resolve_prefixed(p, 1, p[1]))
    elif is_absolute_iri(p[1]):
        p[0] = p[1]
    else:
        # <kgnet> is relative; resolve it under the kgnet namespace
        p[0] = urljoin(str(KGNET), p[1])


def p_train_call(p):
    """
    train_call : LBRACE SELECT STAR optional_from train_function RBRACE
               | LBRACE SELECT STAR optional_from train_function
               | SELECT STAR optional_from train_function
    """
    # the published listings drop the closing brace; tolerate its absence
    p[0] = p[4] if p.slice[1].type == "SELECT" else p[5]


def p_optional_from(p):
    """
    optional_from : FROM
                  | empty
    """


def p_train_function(p):
    """
    train_function : TRAINGML
                   | FROM_BRACE
    """
    function, payload = p[1]
    if function is not None:
        iri = URIRef(function[1:-1]) if function.startswith("<") else _resolve_prefixed(p, 1, function)
        if iri != TRAIN_GML:
            raise _located(p, 1, "only kgnet:TrainGML may be called in an INSERT")
    p[0] = payload


def p_statement_delete(p):
    """
    statement : DELETE WHERE group
              | DELETE group WHERE group
    """
    template, triples = ([], p[3]) if len(p) == 4 else (p[2], p[4])
    p[0] = _delete_ast(p.lexer.prefixes, template, triples)


def p_statement_bare_where(p):
    """
    statement : WHERE group
              | group
    """
    p[0] = _delete_ast(p.lexer.prefixes, [], p[len(p) - 1])


def p_group(p):
    """
    group : LBRACE RBRACE
          | LBRACE triples RBRACE
          | LBRACE triples DOT RBRACE
    """
    p[0] = [] if len(p) == 3 else p[2]


def p_triples(p):
    """
    triples : triples DOT same_subject
            | same_subject
    """
    p[0] = p[1] + p[3] if len(p) == 4 else p[1]


def p_same_subject(p):
    """same_subject : subject property_list"""
    p[0] = [(p[1], verb, obj) for verb, obj in p[2]]


def p_property_list(p):
    """
    property_list : property_list SEMI property_objects
                  | property_list SEMI
                  | property_objects
    """
    p[0] = p[1] + p[3] if len(p) == 4 else p[1]


def p_property_objects(p):
    """property_objects : verb objects"""
    p[0] = [(p[1], obj) for obj in p[2]]


def p_objects(p):
    """
    objects : objects COMMA object
            | object
    """
    p[0] = p[1] + [p[3]] if len(p) == 4 else [p[1]]


def p_subject(p):
    """
    subject : var
            | iri
    """
    p[0] = p[1]


def p_verb(p):
    """
    verb : KW_A
         | var
         | iri
    """
    p[0] = RDF.type if p.slice[1].type == "KW_A" else p[1]


def p_object(p):
    """
    object : var
           | iri
           | literal
    """
    p[0] = p[1]


def p_var(p):
    """var : VAR"""
    p[0] = Variable(p[1])


def p_iri(p):
    """
    iri : IRIREF
        | PNAME
    """
    if p.slice[1].type == "PNAME":
        p[0] = _resolve_prefixed(p, 1, p[1])
    elif not is_absolute_iri(p[1]):
        raise _located(p, 1, "relative IRIs are only allowed as graph names")
    else:
        p[0] = URIRef(p[1])


def p_literal_number(p):
    """literal : NUMBER"""
    datatype = XSD.decimal if "." in p[1] else XSD.integer
    p[0] = Literal(p[1], datatype=datatype, normalize=False)


def p_literal_string(p):
    """
    literal : STRING
            | STRING LANGTAG
            | STRING DTYPE iri
    """
    try:
        lexical = unescape_literal(p[1][1:-1])
    except ValueError as exc:
        raise _located(p, 1, str(exc)) from exc
    if len(p) == 2:
        p[0] = Literal(lexical, normalize=False)
    elif p.slice[2].type == "LANGTAG":
        p[0] = Literal(lexical, lang=p[2], normalize=False)
    else:
        p[0] = Literal(lexical, datatype=p[3], normalize=False)


def p_error(tok):
    if tok is None:
        raise _UnexpectedEnd()
    raise QuerySyntaxError(f"unexpected {tok.type} {tok.value!r}", line=tok.lineno,
                           column=_column(tok.lexer.lexdata, tok.lexpos))


_PARSER = yacc(start="query", debug=False, write_tables=False)
_PARSE_LOCK = threading.Lock()


# CLASSIFICATION
def _pattern_text(pattern) -> str:
    return " ".join(term_to_nt(t) for t in pattern)


def _udp_variables(triples) -> dict[str, TaskType]:
    found: dict[str, TaskType] = {}
    for subject, predicate, obj in triples:
        if isinstance(subject, Variable) and predicate == RDF.type and in_kgnet_namespace(obj):
            name = local_name(str(obj))
            if name not in TaskType.__members__:
                raise UnknownTaskType(f"unknown kgnet task type kgnet:{name}", task_type=name)
            if str(subject) in found:
                raise QuerySemanticError(f"?{subject} is typed twice")
            found[str(subject)] = TaskType(name)
    return found


def _check_constraint(key: ConstraintKey, value, udp: str):
    if key == ConstraintKey.TopK:
        lexical = str(value)
        if not isinstance(value, Literal) or not re.fullmatch(r"\+?[0-9]+", lexical) or int(lexical) < 1:
            raise QuerySemanticError(f"?{udp}: TopK must be a positive integer literal", value=lexical)
    elif not isinstance(value, URIRef):
        raise QuerySemanticError(f"?{udp}: {key.value} must be an IRI", value=term_to_nt(value))


def extract_groups(triples: list, kind: QueryKind) -> tuple[list[UdpGroup], list]:
    """
    Split query triples into user-defined predicate groups and data patterns.

    A variable typed ``a kgnet:<TaskType>`` is a user-defined predicate;
    every triple using it as subject (type and constraints) or predicate
    (the usage ``?s ?UDP ?o``) moves into its group.
    """
    udp_types = _udp_variables(triples)
    groups: dict[str, UdpGroup] = {
        name: UdpGroup(name, task, None, None) for name, task in udp_types.items()
    }
    data = []
    for triple in triples:
        subject, predicate, obj = triple
        if isinstance(subject, Variable) and str(subject) in groups:
            group = groups[str(subject)]
            group.patterns.append(triple)
            if predicate == RDF.type:
                continue
            if not in_kgnet_namespace(predicate):
                raise QuerySemanticError(f"?{subject} takes only kgnet constraints, found {term_to_nt(predicate)}")
            if predicate not in CONSTRAINT_PREDICATES:
                raise QuerySemanticError(f"unknown kgnet predicate {term_to_nt(predicate)}",
                                         predicate=str(predicate))
            key = CONSTRAINT_PREDICATES[predicate]
            if key in group.constraints:
                raise QuerySemanticError(f"?{subject} repeats constraint {key.value}")
            _check_constraint(key, obj, str(subject))
            group.constraints[key] = obj
        elif isinstance(predicate, Variable) and str(predicate) in groups:
            group = groups[str(predicate)]
            if group.subject_var is not None:
                raise QuerySemanticError(f"?{predicate} is used in more than one triple pattern")
            if not isinstance(subject, Variable) or not isinstance(obj, Variable):
                raise QuerySemanticError(f"?{predicate} must link two variables")
            if str(subject) in groups or str(obj) in groups or subject == obj:
                raise QuerySemanticError(f"?{predicate} must link two distinct data variables")
            group.subject_var, group.object_var = str(subject), str(obj)
            group.patterns.append(triple)
        else:
            if isinstance(obj, Variable) and str(obj) in groups:
                raise QuerySemanticError(f"?{obj} may only appear as subject or predicate")
            for term in triple:
                if in_kgnet_namespace(term):
                    raise QuerySemanticError(f"unknown kgnet predicate {term_to_nt(term)} outside a "
                                             "user-defined predicate group", predicate=str(term))
            data.append(triple)

    for name, group in groups.items():
        missing = [k.value for k in REQUIRED_CONSTRAINTS[group.task_type] if k not in group.constraints]
        if missing:
            raise QuerySemanticError(f"incomplete {group.task_type.value} ?{name}: missing "
                                     + ", ".join(f"kgnet:{m}" for m in missing),
                                     group=name, missing=missing)
        if kind == QueryKind.Select and group.subject_var is None:
            raise QuerySemanticError(f"incomplete {group.task_type.value} ?{name}: no usage "
                                     f"triple ?s ?{name} ?o", group=name)
    return list(groups.values()), data


def build_select(prefixes: dict, projection: list[str], star: bool, triples: list) -> SparqlMlAst:
    """Classify the WHERE triples of a SELECT and validate its projection."""
    groups, data = extract_groups(triples, QueryKind.Select)
    ast = SparqlMlAst(kind=QueryKind.Select, prefixes=dict(prefixes), data_patterns=data,
                      gml_patterns=groups)
    if not data:
        raise QuerySemanticError("a SELECT needs at least one data triple pattern")
    data_vars = ast.data_variables()
    object_vars = []
    for group in groups:
        if group.object_var in data_vars:
            raise QuerySemanticError(f"predicted variable ?{group.object_var} must not occur in "
                                     "data patterns", variable=group.object_var)
        if group.subject_var not in data_vars:
            raise QuerySemanticError(f"?{group.subject_var} of ?{group.predicate_var} is not bound "
                                     "by any data pattern", variable=group.subject_var)
        if group.object_var in object_vars:
            raise QuerySemanticError(f"?{group.object_var} is predicted by two user-defined predicates")
        object_vars.append(group.object_var)
    if star:
        projection = data_vars + object_vars
    for name in projection:
        if name not in data_vars and name not in object_vars:
            raise QuerySemanticError(f"projected ?{name} is not bound by the query", variable=name)
    ast.projection = list(projection)
    return ast


def parse(text: str) -> SparqlMlAst:
    """
    Parse SPARQL^ML text.

    Raises:
        QuerySyntaxError: with line and column.
        QuerySemanticError: incomplete or misplaced user-defined predicates.
        UnknownTaskType: a ``kgnet:`` type that is not a task.
        TrainSpecError: bad TrainGML payload.
    """
    lexer = _LEXER.clone()
    lexer.lineno = 1
    lexer.prefixes = {}
    try:
        with _PARSE_LOCK:
            ast = _PARSER.parse(text, lexer=lexer)
    except _UnexpectedEnd:
        line = text.count("\n") + 1
        raise QuerySyntaxError("unexpected end of query", line=line,
                               column=_column(text, len(text))) from None
    logger.debug("parsed %s query: %d data patterns, %d groups", ast.kind.value,
                 len(ast.data_patterns), len(ast.gml_patterns))
    return ast


# RENDERING
_SAFE_LOCAL = re.compile(r"^[A-Za-z0-9_][\w\-]*$")


def render_term(term, prefixes: dict) -> str:
    """SPARQL text of one term, using a declared prefix when it is unambiguous."""
    if isinstance(term, Variable):
        return f"?{term}"
    if isinstance(term, URIRef):
        best = None
        for prefix, namespace in prefixes.items():
            local = str(term)[len(namespace):]
            if str(term).startswith(namespace) and _SAFE_LOCAL.match(local):
                if best is None or len(namespace) > len(prefixes[best]):
                    best = prefix
        if best is not None:
            return f"{best}:{str(term)[len(prefixes[best]):]}"
        return f"<{term}>"
    if isinstance(term, Literal) and term.language is None:
        if term.datatype == XSD.integer and re.fullmatch(r"[+\-]?[0-9]+", str(term)):
            return str(term)
        if term.datatype == XSD.decimal and re.fullmatch(r"[+\-]?[0-9]+\.[0-9]+", str(term)):
            return str(term)
    return term_to_nt(term)


def render_block(patterns, prefixes, indent="  ") -> str:
    """Brace-enclosed triple patterns, one per line."""
    lines = [indent + " ".join(render_term(t, prefixes) for t in p) + " ." for p in patterns]
    return "{\n" + "\n".join(lines) + ("\n" if lines else "") + "}"


def render(ast: SparqlMlAst) -> str:
    """Canonical text; ``parse(render(ast))`` equals ``ast``."""
    head = "".join(f"PREFIX {p}: <{iri}>\n" for p, iri in ast.prefixes.items())
    if ast.kind == QueryKind.Select:
        projection = " ".join(f"?{v}" for v in ast.projection)
        return f"{head}SELECT {projection}\nWHERE {render_block(ast.all_patterns(), ast.prefixes)}\n"
    if ast.kind == QueryKind.DeleteModel:
        body = render_block(ast.all_patterns(), ast.prefixes)
        if ast.delete_template:
            return f"{head}DELETE {render_block(ast.delete_template, ast.prefixes)}\nWHERE {body}\n"
        return f"{head}DELETE WHERE {body}\n"
    graph = render_term(URIRef(ast.target_graph), ast.prefixes)
    function = render_term(TRAIN_GML, ast.prefixes)
    payload = json.dumps(train_spec_to_json(ast.train_payload), indent=2)
    return (f"{head}INSERT INTO {graph} {render_block(ast.data_patterns, ast.prefixes)}\n"
            f"WHERE {{ SELECT * FROM {function}({payload}) }}\n")


# TRAINGML PAYLOAD
class _RelaxedReader:
    """Reader for the object notation of TrainGML listings (JSON without quotes)."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def fail(self, message: str):
        raise TrainSpecError(f"TrainGML payload: {message} at offset {self.pos}", offset=self.pos)

    def value(self):
        self.skip()
        if self.pos >= len(self.text):
            self.fail("unexpected end")
        char = self.text[self.pos]
        if char == "{":
            return self.mapping()
        if char == "[":
            return self.sequence()
        if char in "\"'":
            return self.quoted()
        return self.bare(stop=",}]")

    def mapping(self) -> dict:
        self.pos += 1
        result = {}
        while True:
            self.skip()
            if self.peek("}"):
                self.pos += 1
                return result
            key = self.quoted() if self.text[self.pos] in "\"'" else self.bare(stop=":,}", is_key=True)
            self.skip()
            if not self.peek(":"):
                self.fail(f"expected ':' after key {key!r}")
            self.pos += 1
            result[key] = self.value()
            self.skip()
            if self.peek(","):
                self.pos += 1
            elif not self.peek("}"):
                self.fail("expected ',' or '}'")

    def sequence(self) -> list:
        self.pos += 1
        items = []
        while True:
            self.skip()
            if self.peek("]"):
                self.pos += 1
                return items
            items.append(self.value())
            self.skip()
            if self.peek(","):
                self.pos += 1
            elif not self.peek("]"):
                self.fail("expected ',' or ']'")

    def peek(self, char: str) -> bool:
        return self.pos < len(self.text) and self.text[self.pos] == char

    def quoted(self) -> str:
        quote = self.text[self.pos]
        end = self.pos + 1
        while end < len(self.text) and self.text[end] != quote:
            end += 2 if self.text[end] == "\\" else 1
        if end >= len(self.text):
            self.fail("unterminated string")
        raw = self.text[self.pos + 1:end]
        self.pos = end + 1
        return unescape_literal(raw)

    def bare(self, stop: str, is_key: bool = False):
        start = self.pos
        # a bare value may hold ':' (prefixed names) but never starts a nested key
        while self.pos < len(self.text) and self.text[self.pos] not in stop:
            self.pos += 1
        token = self.text[start:self.pos].strip()
        if not token:
            self.fail("empty key" if is_key else "empty value")
        if is_key:
            return token
        if re.fullmatch(r"-?[0-9]+", token):
            return int(token)
        if re.fullmatch(r"-?[0-9]+\.[0-9]+", token):
            return float(token)
        return {"true": True, "false": False, "null": None}.get(token, token)


def _norm_key(key: str) -> str:
    return re.sub(r"[\s_\-]", "", key).lower()


_KEY_ALIASES = {"nodelable": "nodelabel", "topklinks": "topk", "linkpredicates": "linkpredicate",
                "hyperparams": "hyperparameters", "gmlmethod": "method", "budget": "taskbudget",
                "similarto": "targetnode"}


def _normalized(mapping: dict) -> dict:
    result = {}
    for key, value in mapping.items():
        norm = _norm_key(str(key))
        result[_KEY_ALIASES.get(norm, norm)] = value
    return result


def _resolve_iri(value, prefixes: dict, field_name: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise TrainSpecError(f"{field_name} must be an IRI", field=field_name)
    value = value.strip()
    if value.startswith("<") and value.endswith(">"):
        value = value[1:-1]
    elif ":" in value:
        prefix, local = value.split(":", 1)
        if prefix in prefixes:
            value = prefixes[prefix] + local
    if not is_absolute_iri(value):
        raise TrainSpecError(f"{field_name} is not an absolute IRI or known prefixed name: {value}",
                             field=field_name)
    return value


def _require(mapping: dict, key: str, label: str):
    if key not in mapping or mapping[key] in (None, ""):
        raise TrainSpecError(f"TrainGML payload is missing {label}", missing=label)
    return mapping[key]


def _parse_task_type(value, prefixes: dict) -> TaskType:
    text = str(value).strip()
    if text.startswith("<") or ":" in text:
        text = local_name(_resolve_iri(text, prefixes, "TaskType"))
    if text not in TaskType.__members__:
        raise UnknownTaskType(f"unknown TaskType {value!r}", task_type=str(value))
    return TaskType(text)


def _parse_sampling(value) -> tuple[int, int]:
    if isinstance(value, dict):
        norm = _normalized(value)
        try:
            return int(norm.get("d", norm.get("direction"))), int(norm.get("h", norm.get("hops")))
        except (TypeError, ValueError) as exc:
            raise TrainSpecError(f"Sampling needs d and h: {value!r}") from exc
    text = str(value).strip()
    if text.upper() in SAMPLING_CATALOG:
        return SAMPLING_CATALOG[text.upper()]
    match = re.fullmatch(r"d([12])h([12])", text.lower())
    if not match:
        raise TrainSpecError(f"unknown Sampling {value!r}; use {{d, h}}, d1h1 or one of "
                             + ", ".join(SAMPLING_CATALOG))
    return int(match.group(1)), int(match.group(2))


def parse_train_json(text: str, prefixes: Optional[dict] = None,
                     default_budget: Optional[Budget] = None) -> TrainGmlSpec:
    """
    Parse a TrainGML payload.

    Keys are matched case-insensitively ignoring spaces and dashes, so
    ``GML-Task``/``Task Budget`` and the ``NodeLable`` spelling of the
    published listing are accepted. IRIs may be ``<absolute>``, absolute or
    prefixed names resolved against ``prefixes`` (plus rdf/xsd/kgnet).
    Missing budget keys are taken from ``default_budget`` when given.

    Raises:
        TrainSpecError: missing key, bad unit, malformed payload.
        UnknownTaskType: TaskType outside the supported set.
    """
    scope = {**BASE_PREFIXES, **(prefixes or {})}
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        raw = _RelaxedReader(text.strip()).value()
    if not isinstance(raw, dict):
        raise TrainSpecError("TrainGML payload must be an object")

    top = _normalized(raw)
    name = str(_require(top, "name", "Name"))
    task = _normalized(_require(top, "gmltask", "GML-Task"))
    if default_budget is None:
        budget_raw = _normalized(_require(top, "taskbudget", "Task Budget"))
    else:
        budget_raw = {"maxmemory": default_budget.max_memory_bytes, "maxtime": default_budget.max_time_seconds,
                      "priority": default_budget.priority.value, **_normalized(top.get("taskbudget") or {})}
    task_type = _parse_task_type(_require(task, "tasktype", "GML-Task.TaskType"), scope)

    fields = {"name": name, "task_type": task_type}
    if task_type == TaskType.LinkPredictor:
        fields["source_node_type"] = _resolve_iri(_require(task, "sourcenode", "SourceNode"), scope, "SourceNode")
        fields["destination_node_type"] = _resolve_iri(
            _require(task, "destinationnode", "DestinationNode"), scope, "DestinationNode")
        links = task.get("linkpredicate") or []
        links = links if isinstance(links, list) else [links]
        fields["link_predicates"] = [_resolve_iri(p, scope, "LinkPredicate") for p in links]
    else:
        fields["target_node_type"] = _resolve_iri(_require(task, "targetnode", "TargetNode"), scope, "TargetNode")
    if task_type == TaskType.NodeClassifier:
        fields["label_predicate"] = _resolve_iri(_require(task, "nodelabel", "NodeLabel"), scope, "NodeLabel")

    priority = str(budget_raw.get("priority") or Priority.ModelScore.value)
    if priority not in Priority.__members__:
        raise TrainSpecError(f"unknown Priority {priority!r}", priority=priority)
    fields["budget"] = {"max_memory_bytes": parse_memory(_require(budget_raw, "maxmemory", "MaxMemory")),
                        "max_time_seconds": parse_duration(_require(budget_raw, "maxtime", "MaxTime")),
                        "priority": Priority(priority)}

    if top.get("hyperparameters"):
        if not isinstance(top["hyperparameters"], dict):
            raise TrainSpecError("Hyperparameters must be an object")
        fields["hyperparams"] = dict(top["hyperparameters"])
    if top.get("method"):
        fields["method_override"] = str(top["method"])
    if top.get("sampling"):
        fields["sampling_direction"], fields["sampling_hops"] = _parse_sampling(top["sampling"])
    if top.get("splitstrategy"):
        strategy = str(top["splitstrategy"]).lower()
        if strategy not in SplitStrategy.__members__:
            raise TrainSpecError(f"unknown SplitStrategy {strategy!r}")
        fields["split_strategy"] = SplitStrategy(strategy)
    if top.get("communityedge"):
        fields["community_edge"] = _resolve_iri(top["communityedge"], scope, "CommunityEdge")

    try:
        return TrainGmlSpec(**fields)
    except ValidationError as exc:
        raise TrainSpecError("invalid TrainGML payload",
                             errors=[e["msg"] for e in exc.errors(include_url=False)]) from exc


def train_spec_to_json(spec: TrainGmlSpec) -> dict:
    """Strict-JSON payload that ``parse_train_json`` reads back to ``spec``."""
    task = {"TaskType": f"<{KGNET[spec.task_type.value]}>"}
    if spec.task_type == TaskType.LinkPredictor:
        task["SourceNode"] = f"<{spec.source_node_type}>"
        task["DestinationNode"] = f"<{spec.destination_node_type}>"
        if spec.link_predicates:
            task["LinkPredicate"] = [f"<{p}>" for p in spec.link_predicates]
    else:
        task["TargetNode"] = f"<{spec.target_node_type}>"
    if spec.label_predicate:
        task["NodeLabel"] = f"<{spec.label_predicate}>"
    payload = {
        "Name": spec.name,
        "GML-Task": task,
        "Task Budget": {"MaxMemory": spec.budget.max_memory_bytes,
                        "MaxTime": spec.budget.max_time_seconds,
                        "Priority": spec.budget.priority.value},
    }
    if spec.hyperparams:
        payload["Hyperparameters"] = spec.hyperparams
    if spec.method_override:
        payload["Method"] = spec.method_override
    if spec.sampling_direction is not None and spec.sampling_hops is not None:
        payload["Sampling"] = {"d": spec.sampling_direction, "h": spec.sampling_hops}
    if spec.split_strategy != SplitStrategy.random:
        payload["SplitStrategy"] = spec.split_strategy.value
    if spec.community_edge:
        payload["CommunityEdge"] = f"<{spec.community_edge}>"
    return payload
