"""
Exact embedding store.

Vectors live in the ``embedding_entries`` table; a per-model matrix is
loaded once and searched brute force by cosine similarity.
"""

import logging
import threading
from typing import Optional, Sequence, Union

import numpy as np
from sqlalchemy.orm import Session

from models.models import EmbeddingEntries, TrainedModels
from utils.errors import EmbeddingQueryError

logger = logging.getLogger(__name__)

_matrices: dict[str, tuple[list[str], np.ndarray]] = {}
_matrices_lock = threading.Lock()


def cosine_topk(matrix: np.ndarray, keys: Sequence[str], query: np.ndarray, k: int,
                exclude: Optional[int] = None) -> list[tuple[str, float]]:
    """
    Exact top-k rows of ``matrix`` by cosine similarity to ``query``.

    Scores descend; ties keep ``keys`` order. Row ``exclude`` is skipped.
    """
    if k <= 0 or not len(keys):
        return []
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (matrix.shape[1],):
        raise EmbeddingQueryError(f"query has dimension {query.shape[-1] if query.ndim else 0}, "
                                  f"store has {matrix.shape[1]}")
    query_norm = np.linalg.norm(query)
    if query_norm == 0 or not np.isfinite(query_norm):
        raise EmbeddingQueryError("query vector must be finite and non-zero")
    row_norms = np.linalg.norm(matrix, axis=1)
    row_norms[row_norms == 0] = 1.0
    scores = (matrix @ query) / (row_norms * query_norm)
    order = np.lexsort((np.arange(len(keys)), -scores))
    if exclude is not None:
        order = order[order != exclude]
    return [(keys[i], float(scores[i])) for i in order[:k]]


def add_vectors(model: TrainedModels, vectors: dict[str, list[float]]) -> int:
    """Attach vectors to a model row; all must share one dimension and be finite."""
    dimensions = {len(v) for v in vectors.values()}
    if len(dimensions) > 1:
        raise EmbeddingQueryError(f"vectors of mixed dimensions {sorted(dimensions)}")
    for iri, vector in sorted(vectors.items()):
        if not np.all(np.isfinite(vector)):
            raise EmbeddingQueryError(f"vector of {iri} has non-finite components", node=iri)
        model.embeddings.append(EmbeddingEntries(node_iri=iri, vector=[float(x) for x in vector]))
    return len(vectors)


def load_matrix(db: Session, model: TrainedModels) -> tuple[list[str], np.ndarray]:
    """Sorted node keys and their vectors for one model (cached)."""
    with _matrices_lock:
        if model.artifact_ref in _matrices:
            return _matrices[model.artifact_ref]
    entries = (db.query(EmbeddingEntries)
               .filter(EmbeddingEntries.model_id == model.id)
               .order_by(EmbeddingEntries.node_iri)
               .all())
    keys = [e.node_iri for e in entries]
    dimension = model.state.get("dimension", 0)
    matrix = np.array([e.vector for e in entries], dtype=np.float64).reshape(len(keys), dimension)
    with _matrices_lock:
        _matrices[model.artifact_ref] = (keys, matrix)
    return keys, matrix


def forget(artifact_ref: str) -> None:
    with _matrices_lock:
        _matrices.pop(artifact_ref, None)


def knn(db: Session, model: TrainedModels, query: Union[str, Sequence[float]], k: int) -> list[tuple[str, float]]:
    """
    Nearest neighbours of a stored node (by IRI, itself excluded) or of a vector.

    Raises:
        EmbeddingQueryError: unknown IRI, zero vector or dimension mismatch.
    """
    keys, matrix = load_matrix(db, model)
    if isinstance(query, str):
        try:
            row = keys.index(query)
        except ValueError as exc:
            raise EmbeddingQueryError(f"{query} has no embedding in {model.artifact_ref}", node=query) from exc
        return cosine_topk(matrix, keys, matrix[row], k, exclude=row)
    return cosine_topk(matrix, keys, np.asarray(query, dtype=np.float64), k)


def count_entries(db: Session, model: TrainedModels) -> int:
    return db.query(EmbeddingEntries).filter(EmbeddingEntries.model_id == model.id).count()
