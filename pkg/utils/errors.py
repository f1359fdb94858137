"""
Domain errors.

Every error is an ``HTTPException`` so services can raise it directly and
FastAPI serializes it unchanged; the CLI reads ``exit_code`` to decide
between user errors (1) and backend errors (2).
"""

from fastapi import HTTPException, status


class KGNetError(HTTPException):
    """Base error carrying a structured ``detail`` payload."""

    status_code = status.HTTP_400_BAD_REQUEST
    exit_code = 1

    def __init__(self, message: str, **context):
        self.message = message
        self.context = context
        super().__init__(
            status_code=type(self).status_code,
            detail={"error": type(self).__name__, "message": message, **context},
        )

    def __str__(self):
        return self.message


class ConfigError(KGNetError):
    """Invalid platform configuration."""


class QuerySyntaxError(KGNetError):
    """SPARQL^ML text that does not lex or parse; carries line and column."""


class QuerySemanticError(KGNetError):
    """Well-formed query that violates SPARQL^ML rules."""


class UnknownTaskType(QuerySemanticError):
    """A kgnet task type the platform does not know."""


class TrainSpecError(KGNetError):
    """TrainGML payload that is missing keys or has bad units."""


class MalformedTriple(KGNetError):
    """Triple rejected on insert; carries the offending index."""


class NTriplesParseError(KGNetError):
    """N-Triples input rejected; carries line number and reason."""


class EndpointError(KGNetError):
    """Remote SPARQL endpoint failure; carries endpoint and query."""
    status_code = status.HTTP_502_BAD_GATEWAY
    exit_code = 2


class EndpointHTTPError(EndpointError):
    """Endpoint answered with an HTTP error status."""


class EndpointResponseError(EndpointError):
    """Endpoint answered with a body that could not be parsed."""


class EndpointTimeout(EndpointError):
    """Endpoint did not answer in time."""
    status_code = status.HTTP_504_GATEWAY_TIMEOUT


class EndpointConnectionError(EndpointError):
    """Endpoint could not be reached."""


class DuplicateModel(KGNetError):
    """Model with identical task binding, method and sampling already exists."""
    status_code = status.HTTP_409_CONFLICT


class NoModelMatches(KGNetError):
    """No KGMeta model satisfies a user-defined predicate."""
    status_code = status.HTTP_404_NOT_FOUND


class ModelNotFound(KGNetError):
    """Unknown GMLaaS artifact reference."""
    status_code = status.HTTP_404_NOT_FOUND


class GmlaasUnavailable(KGNetError):
    """GMLaaS could not be reached or refused an operation."""
    status_code = status.HTTP_503_SERVICE_UNAVAILABLE
    exit_code = 2


class BudgetInfeasible(KGNetError):
    """No training method fits the task budget."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class InfeasibleModelChoice(KGNetError):
    """No model assignment satisfies the query constraints."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class DatasetError(KGNetError):
    """KG' cannot be transformed for the task."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class PackageError(KGNetError):
    """Dataset package archive is unreadable, tampered or of another version."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class TrainingError(KGNetError):
    """Training request that cannot be carried out."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class InferenceError(KGNetError):
    """Inference failed during query execution."""
    status_code = status.HTTP_502_BAD_GATEWAY
    exit_code = 2


class ReadOnlyEndpoint(KGNetError):
    """Update sent to the read-only loopback endpoint."""
    status_code = status.HTTP_403_FORBIDDEN


class EmbeddingQueryError(KGNetError):
    """Similarity query with an unknown node, a zero vector or the wrong dimension."""
    status_code = status.HTTP_422_UNPROCESSABLE_ENTITY


class WrongTaskModel(KGNetError):
    """Inference requested from a model trained for another task."""
    status_code = status.HTTP_409_CONFLICT


def error_from_detail(status_code: int, detail) -> KGNetError:
    """Rebuild a domain error from a JSON ``detail`` received over HTTP."""
    if isinstance(detail, dict) and detail.get("error"):
        context = {k: v for k, v in detail.items() if k not in ("error", "message")}
        cls = globals().get(detail["error"])
        if isinstance(cls, type) and issubclass(cls, KGNetError):
            return cls(detail.get("message", ""), **context)
    if status_code == status.HTTP_404_NOT_FOUND:
        return ModelNotFound(str(detail))
    return GmlaasUnavailable(f"GMLaaS answered HTTP {status_code}: {detail}", status=status_code)
