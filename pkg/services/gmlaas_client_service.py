"""
GMLaaS clients.

``GmlaasHttpClient`` talks to the ``/gml`` JSON API of a GMLaaS process;
``EmbeddedGmlaasClient`` calls the service functions in-process. Both
expose the same methods and return the same response models, so the
pipeline, governor and executor do not care where GMLaaS runs.
"""

import logging
from typing import Optional, Sequence, Union

import requests
from diskcache import Cache
from sqlalchemy.orm import sessionmaker

from schemas.gmlschema import (DeleteBatchResponse, DeleteResponse, InferLinksResponse, InferNodeClassResponse,
                               KnnResponse, MethodProfile, ModelInfo, ModelList, TrainRequest, TrainResponse)
from schemas.sparqlmlschema import TrainGmlSpec
from services import gmlaas_service
from services.sparqlml_service import train_spec_to_json
from utils.errors import GmlaasUnavailable, error_from_detail

logger = logging.getLogger(__name__)

Query = Union[str, Sequence[float]]


def train_request(spec: TrainGmlSpec, package_path) -> TrainRequest:
    return TrainRequest(task=train_spec_to_json(spec), package=str(package_path))


class GmlaasHttpClient:
    """
    Client of a remote GMLaaS.

    ``session`` may be any requests-compatible session, e.g. a FastAPI
    ``TestClient`` mounted on the GMLaaS app.
    """

    def __init__(self, url: str, session=None, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout

    def _call(self, method: str, path: str, body: Optional[dict] = None) -> dict:
        try:
            response = self.session.request(method, f"{self.url}{path}", json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise GmlaasUnavailable(f"GMLaaS at {self.url} is unreachable: {exc}", url=self.url) from exc
        try:
            payload = response.json()
        except ValueError:
            payload = {"detail": response.text}
        if response.status_code >= 400:
            raise error_from_detail(response.status_code, payload.get("detail", payload))
        return payload

    def train(self, spec: TrainGmlSpec, package_path) -> TrainResponse:
        body = train_request(spec, package_path).model_dump(mode="json")
        return TrainResponse(**self._call("POST", "/gml/train", body))

    def get_model(self, artifact_ref: str) -> ModelInfo:
        return ModelInfo(**self._call("GET", f"/gml/models/{artifact_ref}"))

    def list_models(self) -> ModelList:
        return ModelList(**self._call("GET", "/gml/models"))

    def delete_model(self, artifact_ref: str) -> DeleteResponse:
        return DeleteResponse(**self._call("DELETE", f"/gml/models/{artifact_ref}"))

    def delete_models(self, artifact_refs: list[str]) -> DeleteBatchResponse:
        body = {"v": 1, "artifact_refs": list(artifact_refs)}
        return DeleteBatchResponse(**self._call("POST", "/gml/models/delete", body))

    def infer_node_class(self, artifact_ref: str, targets: Optional[list[str]] = None) -> InferNodeClassResponse:
        body = {"v": 1, "model": artifact_ref, "targets": targets}
        return InferNodeClassResponse(**self._call("POST", "/gml/infer/nodeclass", body))

    def infer_links(self, artifact_ref: str, sources: Optional[list[str]] = None, k: int = 10) -> InferLinksResponse:
        body = {"v": 1, "model": artifact_ref, "sources": sources, "k": k}
        return InferLinksResponse(**self._call("POST", "/gml/infer/links", body))

    def knn(self, artifact_ref: str, queries: list[Query], k: int) -> KnnResponse:
        body = {"v": 1, "model": artifact_ref, "queries": [q if isinstance(q, str) else list(q) for q in queries],
                "k": k}
        return KnnResponse(**self._call("POST", "/gml/knn", body))


class EmbeddedGmlaasClient:
    """In-process GMLaaS over a session factory."""

    def __init__(self, session_factory: sessionmaker, profiles: list[MethodProfile],
                 cache: Optional[Cache] = None):
        self.session_factory = session_factory
        self.profiles = profiles
        self.cache = cache

    def train(self, spec: TrainGmlSpec, package_path) -> TrainResponse:
        with self.session_factory() as db:
            return gmlaas_service.train_from_request(
                db, train_request(spec, package_path), self.profiles)

    def get_model(self, artifact_ref: str) -> ModelInfo:
        with self.session_factory() as db:
            return gmlaas_service.get_model(db, artifact_ref)

    def list_models(self) -> ModelList:
        with self.session_factory() as db:
            return gmlaas_service.list_models(db)

    def delete_model(self, artifact_ref: str) -> DeleteResponse:
        with self.session_factory() as db:
            return gmlaas_service.delete_artifact(db, artifact_ref, self.cache)

    def delete_models(self, artifact_refs: list[str]) -> DeleteBatchResponse:
        with self.session_factory() as db:
            return DeleteBatchResponse(deleted=gmlaas_service.delete_artifacts(db, artifact_refs, self.cache))

    def infer_node_class(self, artifact_ref: str, targets: Optional[list[str]] = None) -> InferNodeClassResponse:
        with self.session_factory() as db:
            return gmlaas_service.infer_node_class(db, artifact_ref, targets, self.cache)

    def infer_links(self, artifact_ref: str, sources: Optional[list[str]] = None, k: int = 10) -> InferLinksResponse:
        with self.session_factory() as db:
            return gmlaas_service.infer_links(db, artifact_ref, sources, k, self.cache)

    def knn(self, artifact_ref: str, queries: list[Query], k: int) -> KnnResponse:
        with self.session_factory() as db:
            return gmlaas_service.knn(db, artifact_ref, queries, k)
