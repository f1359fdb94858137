import logging
import math

import numpy as np
import pytest

from schemas.datasetschema import DatasetPackage, DatasetStats
from services.embedding_store_service import cosine_topk
from services.trainer_service import (TRAINERS, package_graph, predict_links, predict_node_class,
                                      structural_vectors, train)
from utils.errors import EmbeddingQueryError, TrainingError

from tests.conftest import AFFILIATIONS, N_AUTHORS, N_PAPERS, paper, true_venue

EX = "https://example.org/"
LABEL_A, LABEL_B = EX + "a", EX + "b"


def _package(node_maps, relations, labels, label_dict, splits, target_type="Paper") -> DatasetPackage:
    return DatasetPackage(manifest={"target_type": target_type}, node_maps=node_maps, relations=relations,
                          labels=labels, label_dict=label_dict, splits=splits, stats=DatasetStats.empty())


def _isolated_papers(n_train_a: int, n_train_b: int, test_labels: list[int]) -> DatasetPackage:
    train_labels = [0] * n_train_a + [1] * n_train_b
    all_labels = train_labels + test_labels
    keys = [f"{EX}p{i:03d}" for i in range(len(all_labels))]
    n_train = len(train_labels)
    return _package({"Paper": keys}, {}, list(enumerate(all_labels)), [LABEL_A, LABEL_B],
                    {"train": list(range(n_train)), "valid": [],
                     "test": list(range(n_train, len(all_labels)))})


def _ranking_package() -> DatasetPackage:
    """
    Source s0 (test) shares three neighbours with d00 and one with each
    distractor; s1 (train) links to d01.
    """
    people = [EX + "s0", EX + "s1"]
    hubs = [EX + "n1", EX + "n2", EX + "n3"]
    orgs = [f"{EX}d{j:02d}" for j in range(12)]
    knows = [("Person", 0, "Untyped", h) for h in range(3)]
    near = [("Org", 0, "Untyped", h) for h in range(3)] + [("Org", j, "Untyped", 0) for j in range(1, 12)]
    return _package({"Person": people, "Untyped": hubs, "Org": orgs}, {"knows": knows, "near": near},
                    [(0, 0), (1, 1)], orgs, {"train": [1], "valid": [], "test": [0]}, target_type="Person")


# NODE CLASSIFICATION
def test_neighbor_votes_recover_every_venue(nc_package):
    output = train("neighbor-label-frequency", nc_package, {"hops": 2})
    assert output.metrics["accuracy"] == 1.0
    assert output.metrics["model_cardinality"] == N_PAPERS
    predictions = output.state["predictions"]
    assert all(predictions[str(paper(i))] == str(true_venue(i)) for i in range(N_PAPERS))


def test_one_hop_vote_uses_direct_neighbours():
    keys = [EX + "p0", EX + "p1", EX + "p2", EX + "p3"]
    cites = [("Paper", 0, "Paper", 2), ("Paper", 1, "Paper", 3)]
    pkg = _package({"Paper": keys}, {"cites": cites}, [(0, 0), (1, 1), (2, 0), (3, 1)], [LABEL_A, LABEL_B],
                   {"train": [0, 1], "valid": [], "test": [2, 3]})
    output = train("neighbor-label-frequency", pkg, {"hops": 1})
    predictions = output.state["predictions"]
    assert (predictions[EX + "p2"], predictions[EX + "p3"]) == (LABEL_A, LABEL_B)
    assert output.metrics["accuracy"] == 1.0


def test_isolated_nodes_fall_back_to_majority():
    output = train("neighbor-label-frequency", _isolated_papers(3, 1, [1, 1]), {})
    assert output.metrics["accuracy"] == 0.0
    assert set(output.state["predictions"].values()) == {LABEL_A}


def test_majority_label_on_skewed_test_set():
    pkg = _isolated_papers(6, 4, [0] * 7 + [1] * 3)
    output = train("majority-label", pkg)
    assert output.state["label"] == LABEL_A
    assert output.metrics["accuracy"] == pytest.approx(0.7)
    assert output.metrics["n_test"] == 10


def test_majority_tie_takes_smallest_label():
    output = train("majority-label", _isolated_papers(2, 2, [1]))
    assert output.state["label"] == LABEL_A


@pytest.mark.parametrize("method", ["majority-label", "neighbor-label-frequency"])
def test_accuracy_replays_from_predictions(nc_package, method):
    output = train(method, nc_package)
    keys = nc_package.node_maps[nc_package.target_type]
    label_of = dict(nc_package.labels)
    test = nc_package.splits["test"]
    predictions, _ = predict_node_class(output.state, [keys[i] for i in test])
    replayed = sum(predictions[keys[i]] == nc_package.label_dict[label_of[i]] for i in test) / len(test)
    assert replayed == output.metrics["accuracy"]


def test_empty_test_split_reports_zero(caplog):
    pkg = _isolated_papers(2, 1, [])
    with caplog.at_level(logging.WARNING):
        output = train("majority-label", pkg)
    assert output.metrics["accuracy"] == 0.0
    assert "empty test split" in caplog.text


@pytest.mark.parametrize("method, pkg, hyperparams", [
    ("majority-label", _package({"Paper": [EX + "p"]}, {}, [(0, 0)], [LABEL_A],
                                {"train": [0], "valid": [], "test": []}), {}),
    ("majority-label", _package({"Paper": [EX + "p", EX + "q"]}, {}, [(0, 0), (1, 1)], [LABEL_A, LABEL_B],
                                {"train": [], "valid": [], "test": [0, 1]}), {}),
    ("neighbor-label-frequency", _isolated_papers(2, 2, [0]), {"hops": 3}),
    ("gcn", _isolated_papers(2, 2, [0]), {}),
])
def test_training_errors(method, pkg, hyperparams):
    with pytest.raises(TrainingError):
        train(method, pkg, hyperparams)


def test_predict_node_class_lists_unknown_targets(nc_package):
    state = train("majority-label", nc_package).state
    known, unresolved = predict_node_class(state, [str(paper(0)), EX + "ghost"])
    assert list(known) == [str(paper(0))]
    assert unresolved == [EX + "ghost"]
    everything, none = predict_node_class(state, None)
    assert len(everything) == N_PAPERS and none == []
    assert predict_node_class(state, []) == ({}, [])


# LINK PREDICTION
def test_common_neighbours_rank_the_held_out_link_first():
    output = train("common-neighbors", _ranking_package())
    assert output.metrics["hits_at_10"] == 1.0
    assert output.metrics["mrr"] == 1.0
    ranking = output.state["rankings"][EX + "s0"]
    assert ranking[0] == EX + "d00"
    assert ranking[1:] == [f"{EX}d{j:02d}" for j in range(1, 12)]


def test_predict_links_respects_k():
    state = train("common-neighbors", _ranking_package()).state
    top1, _ = predict_links(state, [EX + "s0"], 1)
    assert top1 == {EX + "s0": [EX + "d00"]}
    everything, _ = predict_links(state, [EX + "s0"], 50)
    assert len(everything[EX + "s0"]) == 12
    _, unresolved = predict_links(state, [EX + "nobody"], 3)
    assert unresolved == [EX + "nobody"]


def test_predict_links_serves_every_candidate_beyond_one_hundred():
    people = [EX + "s0", EX + "s1"]
    orgs = [f"{EX}d{j:03d}" for j in range(150)]
    knows = [("Person", 0, "Untyped", 0)]
    near = [("Org", j, "Untyped", 0) for j in range(150)]
    pkg = _package({"Person": people, "Untyped": [EX + "hub"], "Org": orgs}, {"knows": knows, "near": near},
                   [(0, 0), (1, 1)], orgs, {"train": [1], "valid": [], "test": [0]}, target_type="Person")
    state = train("common-neighbors", pkg).state
    served, _ = predict_links(state, [EX + "s0"], 150)
    assert served[EX + "s0"] == orgs
    everything, _ = predict_links(state, [EX + "s0"], 1000)
    assert len(everything[EX + "s0"]) == 150


def test_link_metrics_replay_through_inference():
    pkg = _ranking_package()
    pkg.labels.append((0, 1))
    output = train("common-neighbors", pkg)
    assert output.state["rankings"][EX + "s0"][:2] == [EX + "d00", EX + "d01"]
    assert output.metrics["hits_at_10"] == 1.0
    assert output.metrics["mrr"] == pytest.approx(0.75)

    served, _ = predict_links(output.state, [EX + "s0"], len(pkg.label_dict))
    ranks = [served[EX + "s0"].index(pkg.label_dict[d]) + 1 for s, d in pkg.labels if s in pkg.splits["test"]]
    assert output.metrics["mrr"] == pytest.approx(float(np.mean([1.0 / r for r in ranks])))
    assert output.metrics["hits_at_10"] == float(np.mean([r <= 10 for r in ranks]))
    assert output.metrics["n_test"] == 2


def test_toy_affiliation_links(lp_package):
    output = train("common-neighbors", lp_package)
    assert output.metrics["hits_at_10"] == 1.0
    assert output.metrics["accuracy"] == output.metrics["hits_at_10"]
    assert output.metrics["model_cardinality"] == N_AUTHORS
    rankings = output.state["rankings"]
    assert all(sorted(r) == sorted(str(a) for a in AFFILIATIONS) for r in rankings.values())


def test_adamic_adar_keeps_the_order():
    plain = train("common-neighbors", _ranking_package()).state["rankings"]
    weighted = train("common-neighbors", _ranking_package(), {"adamic_adar": True}).state["rankings"]
    assert weighted[EX + "s0"][0] == plain[EX + "s0"][0]


def test_package_graph_skips_types_and_literals(nc_package):
    graph = package_graph(nc_package)
    assert graph.number_of_nodes() == N_PAPERS + N_AUTHORS
    assert graph.number_of_edges() == 2 * N_PAPERS
    assert not any(key.startswith('"') for key in graph.nodes)


# NODE SIMILARITY
def test_structural_vectors(nc_package):
    edge_types, vectors = structural_vectors(nc_package)
    assert edge_types == ["authoredBy", "title"]
    expected = np.array([2.0, 0.0, 1.0, 0.0]) / np.sqrt(5.0)
    assert len(vectors) == N_PAPERS
    assert all(np.allclose(vector, expected) for vector in vectors.values())


def test_embedding_similarity_metrics(nc_package):
    output = train("embedding-similarity", nc_package)
    assert output.metrics["accuracy"] == 1.0
    assert output.metrics["model_cardinality"] == N_PAPERS
    assert output.state["dimension"] == 4
    assert sorted(output.vectors) == sorted(str(paper(i)) for i in range(N_PAPERS))


def test_cosine_topk_orders_by_hand_computed_cosines():
    keys = ["east", "north", "north-east", "west"]
    matrix = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0]])
    hits = cosine_topk(matrix, keys, np.array([2.0, 1.0]), 4)
    assert [key for key, _ in hits] == ["north-east", "east", "north", "west"]
    assert hits[0][1] == pytest.approx(3 / np.sqrt(10))
    assert hits[-1][1] == pytest.approx(-2 / np.sqrt(5))


def test_cosine_topk_edge_cases():
    keys = ["x", "y"]
    matrix = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert cosine_topk(matrix, keys, np.array([1.0, 0.0]), 0) == []
    (key, score), = cosine_topk(matrix, keys, matrix[1], 1)
    assert key == "y" and score == pytest.approx(1.0, abs=1e-9)
    assert [k for k, _ in cosine_topk(matrix, keys, matrix[1], 2, exclude=1)] == ["x"]
    with pytest.raises(EmbeddingQueryError):
        cosine_topk(matrix, keys, np.array([0.0, 0.0]), 1)
    with pytest.raises(EmbeddingQueryError):
        cosine_topk(matrix, keys, np.array([1.0, 0.0, 0.0]), 1)


@pytest.mark.parametrize("seed", range(100))
def test_cosine_topk_agrees_with_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, dim = int(rng.integers(1, 40)), int(rng.integers(1, 8))
    matrix = rng.normal(size=(n, dim))
    keys = [f"{EX}n{i:02d}" for i in range(n)]
    query = rng.normal(size=dim)
    k = int(rng.integers(1, n + 2))
    exclude = int(rng.integers(0, n)) if seed % 2 else None

    def cosine(row):
        dot = math.fsum(a * b for a, b in zip(row, query))
        return dot / (math.sqrt(math.fsum(a * a for a in row)) * math.sqrt(math.fsum(b * b for b in query)))

    expected = sorted(((cosine(matrix[i]), i) for i in range(n) if i != exclude), key=lambda s: (-s[0], s[1]))[:k]
    hits = cosine_topk(matrix, keys, query, k, exclude=exclude)
    assert [key for key, _ in hits] == [keys[i] for _, i in expected]
    assert [score for _, score in hits] == pytest.approx([score for score, _ in expected])


def test_every_shipped_method_has_a_trainer():
    assert sorted(TRAINERS) == ["common-neighbors", "embedding-similarity", "majority-label",
                                "neighbor-label-frequency"]
