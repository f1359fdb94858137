"""
SPARQL 1.1 Protocol client.

Queries are POSTed as ``application/x-www-form-urlencoded`` bodies
(``query=`` or ``update=``). SELECT results are read from the JSON results
format, CONSTRUCT results from N-Triples. Every failure is mapped to one
of the endpoint error kinds, each carrying the endpoint URL and the query.

The ``session`` may be a ``requests.Session`` or anything exposing the same
``post`` call, such as FastAPI's ``TestClient`` pointed at the loopback
endpoint.
"""

import logging
from typing import Optional

import httpx
import requests

from schemas.rdfschema import BindingTable, Triple
from services.rdf_store_service import from_sparql_json, parse_ntriples, triple_to_nt
from utils.errors import (EndpointConnectionError, EndpointHTTPError,
                          EndpointResponseError, EndpointTimeout, KGNetError)

logger = logging.getLogger(__name__)

SPARQL_JSON = "application/sparql-results+json"
N_TRIPLES = "application/n-triples"


class SparqlEndpoint:
    """Stateless client for one remote endpoint; implements the store ``Backend`` protocol."""

    def __init__(self, url: str, default_graph: Optional[str] = None,
                 timeout: float = 30.0, session=None):
        self.url = url
        self.default_graph = default_graph
        self.timeout = timeout
        self.session = session or requests.Session()
        self.name = url if not default_graph else f"{url} <{default_graph}>"

    def _post(self, form: dict, accept: Optional[str], text: str):
        headers = {"Accept": accept} if accept else {}
        try:
            response = self.session.post(self.url, data=form, headers=headers, timeout=self.timeout)
        except (requests.Timeout, httpx.TimeoutException) as exc:
            raise EndpointTimeout(f"endpoint {self.url} timed out after {self.timeout}s",
                                  endpoint=self.url, query=text) from exc
        except (requests.ConnectionError, httpx.TransportError) as exc:
            raise EndpointConnectionError(f"cannot reach endpoint {self.url}: {exc}",
                                          endpoint=self.url, query=text) from exc
        if response.status_code >= 400:
            raise EndpointHTTPError(f"endpoint {self.url} answered HTTP {response.status_code}",
                                    endpoint=self.url, query=text,
                                    status=response.status_code, body=response.text[:500])
        return response

    def _query_form(self, query: str) -> dict:
        form = {"query": query}
        if self.default_graph:
            form["default-graph-uri"] = self.default_graph
        return form

    def select(self, query: str) -> BindingTable:
        """Run a SELECT; the result is parsed from SPARQL JSON results."""
        logger.debug("SELECT on %s:\n%s", self.url, query)
        response = self._post(self._query_form(query), SPARQL_JSON, query)
        try:
            return from_sparql_json(response.json())
        except (ValueError, KeyError, TypeError) as exc:
            raise EndpointResponseError(f"malformed SPARQL JSON from {self.url}: {exc}",
                                        endpoint=self.url, query=query) from exc

    def construct(self, query: str) -> list[Triple]:
        """Run a CONSTRUCT; the result is parsed from N-Triples."""
        logger.debug("CONSTRUCT on %s:\n%s", self.url, query)
        response = self._post(self._query_form(query), N_TRIPLES, query)
        try:
            return parse_ntriples(response.text)
        except KGNetError as exc:
            raise EndpointResponseError(f"malformed N-Triples from {self.url}: {exc}",
                                        endpoint=self.url, query=query) from exc

    def update(self, update: str) -> None:
        """POST a SPARQL 1.1 Update request."""
        logger.debug("UPDATE on %s:\n%s", self.url, update)
        self._post({"update": update}, None, update)

    def _data_block(self, verb: str, triples: list[Triple]) -> str:
        body = "\n".join(triple_to_nt(t) for t in triples)
        if self.default_graph:
            body = f"GRAPH <{self.default_graph}> {{\n{body}\n}}"
        return f"{verb} DATA {{\n{body}\n}}"

    def insert(self, triples: list[Triple]) -> int:
        """INSERT DATA; endpoints do not report what was new, so the distinct input count is returned."""
        unique = sorted(set(triples), key=triple_to_nt)
        if unique:
            self.update(self._data_block("INSERT", unique))
        return len(unique)

    def delete(self, triples: list[Triple]) -> int:
        unique = sorted(set(triples), key=triple_to_nt)
        if unique:
            self.update(self._data_block("DELETE", unique))
        return len(unique)


def remote_query(endpoint: str, query: str, kind: str = "SELECT", session=None,
                 timeout: float = 30.0, default_graph: Optional[str] = None):
    """
    One-shot query against ``endpoint``.

    Args:
        kind: ``SELECT`` returns a ``BindingTable``; ``CONSTRUCT`` a list of triples.
    """
    client = SparqlEndpoint(endpoint, default_graph=default_graph, timeout=timeout, session=session)
    if kind.upper() == "CONSTRUCT":
        return client.construct(query)
    return client.select(query)


def remote_update(endpoint: str, update: str, session=None, timeout: float = 30.0) -> None:
    """One-shot SPARQL Update against ``endpoint``."""
    SparqlEndpoint(endpoint, timeout=timeout, session=session).update(update)
