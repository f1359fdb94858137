"""
Baseline GML methods trained on dataset packages.

Every method is transductive: training scores every node of the target
type once and the artifact state keeps those answers, so inference is a
lookup and identical across restarts.

- ``majority-label`` (NC): most frequent training label.
- ``neighbor-label-frequency`` (NC): vote of the training labels of
  neighbouring nodes, passing through unlabelled nodes when ``hops`` is 2.
- ``common-neighbors`` (LP): candidate destinations ranked by shared
  neighbours, optionally Adamic-Adar weighted.
- ``embedding-similarity`` (NS): L2-normalized out/in degree per edge
  type, served by the embedding store.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import networkx as nx
import numpy as np
from scipy import sparse

from schemas.datasetschema import DatasetPackage
from services.dataset_transformer_service import CLASS_TYPE, TYPE_EDGE
from services.embedding_store_service import cosine_topk
from utils.enums import TaskType
from utils.errors import TrainingError

logger = logging.getLogger(__name__)

@dataclass
class TrainOutput:
    """Serializable model state, test-split metrics and optional embeddings."""

    state: dict
    metrics: dict
    vectors: dict[str, list[float]] = field(default_factory=dict)


def _structural(type_name: str) -> bool:
    return type_name != CLASS_TYPE and not type_name.startswith("Literal_")


def package_graph(pkg: DatasetPackage, extra_edges=()) -> nx.Graph:
    """
    Undirected graph over node keys, without ``rdf:type`` edges, class
    nodes and literal nodes.
    """
    graph = nx.Graph()
    for type_name in sorted(pkg.node_maps):
        if _structural(type_name):
            graph.add_nodes_from(pkg.node_maps[type_name])
    for name, rows in pkg.relations.items():
        if name == TYPE_EDGE:
            continue
        for src_type, src_id, dst_type, dst_id in rows:
            if _structural(src_type) and _structural(dst_type):
                u, v = pkg.node_maps[src_type][src_id], pkg.node_maps[dst_type][dst_id]
                if u != v:
                    graph.add_edge(u, v)
    for u, v in extra_edges:
        if u != v:
            graph.add_edge(u, v)
    return graph


def _adjacency(graph: nx.Graph) -> tuple[list[str], dict[str, int], sparse.csr_array]:
    keys = sorted(graph.nodes)
    matrix = nx.to_scipy_sparse_array(graph, nodelist=keys, format="csr", dtype=np.float64)
    return keys, {key: i for i, key in enumerate(keys)}, matrix


def _mean_ms(callable_, inputs) -> float:
    """Mean wall time of ``callable_`` over ``inputs``, warm, in milliseconds."""
    inputs = list(inputs)[:1000]
    if not inputs:
        return 1e-3
    callable_(inputs[0])
    start = time.perf_counter()
    for item in inputs:
        callable_(item)
    return max((time.perf_counter() - start) * 1000.0 / len(inputs), 1e-6)


# NODE CLASSIFICATION
def _nc_inputs(pkg: DatasetPackage):
    if len(pkg.label_dict) < 2:
        raise TrainingError(f"node classification needs at least 2 labels, found {len(pkg.label_dict)}")
    if not pkg.splits["train"]:
        raise TrainingError("the train split is empty")
    return dict(pkg.labels), pkg.node_maps[pkg.target_type]


def _majority(label_of: dict, train_ids, n_classes: int) -> int:
    counts = np.bincount([label_of[i] for i in train_ids], minlength=n_classes)
    return int(np.argmax(counts))


def predict_node_class(state: dict, targets: Optional[list[str]]) -> tuple[dict[str, str], list[str]]:
    """Look up stored predictions; unknown targets are returned as unresolved."""
    predictions = state["predictions"]
    if targets is None:
        return dict(predictions), []
    known = {t: predictions[t] for t in targets if t in predictions}
    return known, sorted({t for t in targets if t not in predictions})


def _nc_output(pkg, predictions: dict[str, str], label_of: dict, target_keys: list[str], extra: dict) -> TrainOutput:
    state = {"task_type": TaskType.NodeClassifier.value, "predictions": predictions, **extra}
    test = pkg.splits["test"]
    if test:
        correct = sum(predictions[target_keys[i]] == pkg.label_dict[label_of[i]] for i in test)
        accuracy = correct / len(test)
    else:
        logger.warning("empty test split; reporting accuracy 0")
        accuracy = 0.0
    latency = _mean_ms(lambda key: predict_node_class(state, [key]), [target_keys[i] for i in test])
    metrics = {"accuracy": accuracy, "inference_time_ms": latency, "model_cardinality": len(predictions),
               "n_test": len(test)}
    return TrainOutput(state=state, metrics=metrics)


def train_majority_label(pkg: DatasetPackage, hyperparams: dict) -> TrainOutput:
    label_of, target_keys = _nc_inputs(pkg)
    label = pkg.label_dict[_majority(label_of, pkg.splits["train"], len(pkg.label_dict))]
    predictions = {key: label for key in target_keys}
    return _nc_output(pkg, predictions, label_of, target_keys, {"label": label})


def train_neighbor_label_frequency(pkg: DatasetPackage, hyperparams: dict) -> TrainOutput:
    hops = int(hyperparams.get("hops", 2))
    if hops not in (1, 2):
        raise TrainingError(f"hops must be 1 or 2, got {hops}")
    label_of, target_keys = _nc_inputs(pkg)
    n_classes = len(pkg.label_dict)
    keys, index, adjacency = _adjacency(package_graph(pkg))

    rows = [index[target_keys[i]] for i in pkg.splits["train"]]
    cols = [label_of[i] for i in pkg.splits["train"]]
    known = sparse.csr_array((np.ones(len(rows)), (rows, cols)), shape=(len(keys), n_classes))

    target_rows = [index[key] for key in target_keys]
    direct = (adjacency @ known)[target_rows, :].toarray()
    two_hop = None
    if hops == 2:
        paths = (adjacency @ adjacency).tolil()
        paths.setdiag(0)
        two_hop = (paths.tocsr() @ known)[target_rows, :].toarray()

    fallback = _majority(label_of, pkg.splits["train"], n_classes)
    predictions, fallbacks = {}, 0
    for position, key in enumerate(target_keys):
        scores = direct[position]
        if not scores.any() and two_hop is not None:
            scores = two_hop[position]
        if scores.any():
            predictions[key] = pkg.label_dict[int(np.argmax(scores))]
        else:
            predictions[key] = pkg.label_dict[fallback]
            fallbacks += 1
    if fallbacks:
        logger.info("%d of %d targets had no labelled neighbourhood; majority label used",
                    fallbacks, len(target_keys))
    return _nc_output(pkg, predictions, label_of, target_keys, {"hops": hops})


# LINK PREDICTION
def predict_links(state: dict, sources: Optional[list[str]], k: int) -> tuple[dict[str, list[str]], list[str]]:
    rankings = state["rankings"]
    if sources is None:
        return {s: ranked[:k] for s, ranked in rankings.items()}, []
    known = {s: rankings[s][:k] for s in sources if s in rankings}
    return known, sorted({s for s in sources if s not in rankings})


def link_metrics(state: dict, test_pairs: list[tuple[str, str]], n_candidates: int) -> tuple[float, float]:
    """Hits@10 and MRR of held-out (source, destination) pairs, ranked by ``predict_links``."""
    if not test_pairs:
        logger.warning("no held-out links in the test split; reporting Hits@10 0")
        return 0.0, 0.0
    served, _ = predict_links(state, sorted({source for source, _ in test_pairs}), n_candidates)
    hits, reciprocal = [], []
    for source, destination in test_pairs:
        ranked = served.get(source, [])
        rank = ranked.index(destination) + 1 if destination in ranked else None
        hits.append(rank is not None and rank <= 10)
        reciprocal.append(1.0 / rank if rank else 0.0)
    return float(np.mean(hits)), float(np.mean(reciprocal))


def train_common_neighbors(pkg: DatasetPackage, hyperparams: dict) -> TrainOutput:
    adamic_adar = bool(hyperparams.get("adamic_adar", False))
    if not pkg.splits["train"]:
        raise TrainingError("the train split is empty")
    if not pkg.label_dict:
        raise TrainingError("no candidate destinations")
    source_keys = pkg.node_maps[pkg.target_type]
    train_sources = set(pkg.splits["train"])
    train_links = [(source_keys[s], pkg.label_dict[d]) for s, d in pkg.labels if s in train_sources]

    graph = package_graph(pkg, extra_edges=train_links)
    graph.add_nodes_from(pkg.label_dict)
    graph.add_nodes_from(source_keys)
    keys, index, adjacency = _adjacency(graph)

    weighted = adjacency
    if adamic_adar:
        degree = np.asarray(adjacency.sum(axis=1)).ravel()
        weights = np.zeros_like(degree)
        weights[degree > 1] = 1.0 / np.log(degree[degree > 1])
        weighted = adjacency @ sparse.diags_array(weights)
    candidates = [index[key] for key in pkg.label_dict]
    source_rows = [index[key] for key in source_keys]
    scores = (weighted[source_rows, :] @ adjacency[:, candidates]).toarray()

    rankings = {}
    ranks = np.arange(len(candidates))
    for position, key in enumerate(source_keys):
        # lexsort: last key is primary; ties fall back to label_dict (IRI) order
        order = np.lexsort((ranks, -scores[position]))
        order = order[np.asarray(pkg.label_dict)[order] != key]
        rankings[key] = [pkg.label_dict[j] for j in order]

    state = {"task_type": TaskType.LinkPredictor.value, "rankings": rankings, "adamic_adar": adamic_adar}
    test_ids = set(pkg.splits["test"])
    test_pairs = [(source_keys[s], pkg.label_dict[d]) for s, d in pkg.labels if s in test_ids]
    hits_at_10, mrr = link_metrics(state, test_pairs, len(candidates))
    test_sources = sorted({source for source, _ in test_pairs})
    latency = _mean_ms(lambda key: predict_links(state, [key], 10), test_sources)
    metrics = {"accuracy": hits_at_10, "hits_at_10": hits_at_10, "mrr": mrr, "inference_time_ms": latency,
               "model_cardinality": len(rankings), "n_test": len(test_pairs)}
    return TrainOutput(state=state, metrics=metrics)


# NODE SIMILARITY
def structural_vectors(pkg: DatasetPackage) -> tuple[list[str], dict[str, np.ndarray]]:
    """L2-normalized (out, in) degree per edge type for target-type nodes; zero vectors skipped."""
    edge_types = sorted(name for name in pkg.relations if name != TYPE_EDGE)
    target = pkg.target_type
    n = len(pkg.node_maps[target])
    counts = np.zeros((n, 2 * len(edge_types)))
    for column, name in enumerate(edge_types):
        for src_type, src_id, dst_type, dst_id in pkg.relations[name]:
            if src_type == target:
                counts[src_id, 2 * column] += 1
            if dst_type == target:
                counts[dst_id, 2 * column + 1] += 1
    norms = np.linalg.norm(counts, axis=1)
    vectors = {pkg.node_maps[target][i]: counts[i] / norms[i] for i in range(n) if norms[i] > 0}
    return edge_types, vectors


def train_embedding_similarity(pkg: DatasetPackage, hyperparams: dict) -> TrainOutput:
    edge_types, vectors = structural_vectors(pkg)
    if not vectors:
        raise TrainingError(f"no {pkg.target_type} node has any edge to embed")
    keys = sorted(vectors)
    matrix = np.vstack([vectors[key] for key in keys])
    latency = _mean_ms(lambda row: cosine_topk(matrix, keys, matrix[row], 10), range(min(len(keys), 10)))
    coverage = len(keys) / len(pkg.node_maps[pkg.target_type])
    state = {"task_type": TaskType.NodeSimilarity.value, "dimension": int(matrix.shape[1]),
             "edge_types": edge_types}
    metrics = {"accuracy": coverage, "inference_time_ms": latency, "model_cardinality": len(keys)}
    return TrainOutput(state=state, metrics=metrics,
                       vectors={key: vectors[key].tolist() for key in keys})


TRAINERS: dict[str, Callable[[DatasetPackage, dict], TrainOutput]] = {
    "majority-label": train_majority_label,
    "neighbor-label-frequency": train_neighbor_label_frequency,
    "common-neighbors": train_common_neighbors,
    "embedding-similarity": train_embedding_similarity,
}


def train(method_name: str, pkg: DatasetPackage, hyperparams: Optional[dict] = None) -> TrainOutput:
    """Run a baseline by profile name."""
    if method_name not in TRAINERS:
        raise TrainingError(f"unknown training method {method_name!r}", known=sorted(TRAINERS))
    started = time.perf_counter()
    output = TRAINERS[method_name](pkg, dict(hyperparams or {}))
    logger.info("trained %s on %s in %.3f s: %s", method_name, pkg.target_type,
                time.perf_counter() - started,
                {k: round(v, 4) if isinstance(v, float) else v for k, v in output.metrics.items()})
    return output
