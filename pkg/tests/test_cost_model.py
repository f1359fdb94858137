import json
import random

import pytest
from rdflib import RDF, Literal

from schemas.datasetschema import DatasetStats
from schemas.gmlschema import MethodProfile
from schemas.sparqlmlschema import Budget
from services.cost_model_service import estimate_cost, fits, load_profiles, rank_methods, select_method
from services.dataset_transformer_service import transform
from services.meta_sampler_service import default_spec, extract_subgraph
from services.platform_service import PROJECT_ROOT
from services.rdf_store_service import StoreBackend, TripleStore
from utils.enums import MethodFamily, Priority, TaskType
from utils.errors import BudgetInfeasible, ConfigError, TrainingError

from tests.conftest import AFFILIATIONS, DBLP, PID, REC, VENUES, nc_spec

KG = "urn:graph:kg"
PROFILES_PATH = PROJECT_ROOT / "config" / "method_profiles.json"
BIG_BUDGET = Budget(max_memory_bytes=50 * 2 ** 30, max_time_seconds=3600)


def _stats(nodes: int, edges: int) -> DatasetStats:
    return DatasetStats(n_nodes={"Paper": nodes}, n_edges={"cites": edges}, n_node_types=1, n_edge_types=1,
                        n_labels=0, n_classes=0, total_triples=edges, total_nodes=nodes, total_edges=edges)


def _profile(name: str, prior: int = 0, family: MethodFamily = MethodFamily.FullBatch, **coefficients) -> MethodProfile:
    values = {"alpha_nodes": 4.0, "alpha_edges": 8.0, "alpha_fixed": 1000.0, "beta_epoch_edge": 0.001,
              "beta_epoch_node": 0.002, "epochs": 10, "dim": 64}
    values.update(coefficients)
    return MethodProfile(name=name, family=family, tasks=[TaskType.NodeClassifier], quality_prior=prior, **values)


# ESTIMATES
def test_zero_stats_cost_only_the_fixed_term():
    estimate = estimate_cost(_profile("p"), DatasetStats.empty())
    assert estimate.memory_bytes == 1000
    assert estimate.time_seconds == 0


def test_estimate_matches_hand_computation():
    estimate = estimate_cost(_profile("p"), _stats(1000, 5000))
    assert estimate.memory_bytes == 1000 + 4 * 1000 * 64 + 8 * 5000
    assert estimate.time_seconds == pytest.approx(10 * (0.001 * 5000 + 0.002 * 1000))


def test_dim_and_epochs_overrides():
    estimate = estimate_cost(_profile("p"), _stats(1000, 5000), dim=1, epochs=1)
    assert estimate.memory_bytes == 1000 + 4 * 1000 + 8 * 5000
    assert estimate.time_seconds == pytest.approx(7.0)


def test_mini_batch_needs_less_memory():
    stats = _stats(1000, 5000)
    full = estimate_cost(_profile("full"), stats)
    mini = estimate_cost(_profile("mini", family=MethodFamily.MiniBatchSampling, batch_fraction=0.1), stats)
    assert mini.memory_bytes < full.memory_bytes
    assert mini.time_seconds == full.time_seconds


# SELECTION
def test_single_fitting_profile_is_selected():
    only = _profile("only")
    assert select_method([only], _stats(10, 10), BIG_BUDGET) == only


def test_higher_prior_wins_even_when_slower():
    fast = _profile("fast", prior=1, beta_epoch_edge=0.0)
    slow = _profile("slow", prior=2)
    assert select_method([fast, slow], _stats(1000, 5000), BIG_BUDGET).name == "slow"


def test_priority_changes_the_order():
    fast = _profile("fast", prior=1, beta_epoch_edge=0.0)
    slow = _profile("slow", prior=2, alpha_nodes=0.0)
    stats = _stats(1000, 5000)
    assert select_method([fast, slow], stats, BIG_BUDGET.model_copy(update={"priority": Priority.TrainingTime})).name == "fast"
    assert select_method([fast, slow], stats, BIG_BUDGET.model_copy(update={"priority": Priority.Memory})).name == "slow"


def test_budget_excludes_too_expensive_profiles():
    cheap = _profile("cheap", prior=0, alpha_nodes=0.0, alpha_edges=0.0)
    expensive = _profile("expensive", prior=5)
    budget = Budget(max_memory_bytes=10_000, max_time_seconds=3600)
    assert select_method([cheap, expensive], _stats(1000, 5000), budget) == cheap


def test_nothing_fits():
    budget = Budget(max_memory_bytes=10, max_time_seconds=1)
    with pytest.raises(BudgetInfeasible) as excinfo:
        select_method([_profile("a"), _profile("b")], _stats(1000, 5000), budget)
    error = excinfo.value
    assert error.status_code == 422
    assert set(error.context["estimates"]) == {"a", "b"}
    assert error.context["budget"] == {"max_memory_bytes": 10, "max_time_seconds": 1}


def test_no_profile_for_task():
    with pytest.raises(TrainingError):
        select_method([_profile("nc")], _stats(10, 10), BIG_BUDGET, task_type=TaskType.LinkPredictor)


def test_selection_equals_enumeration():
    rng = random.Random(7)
    stats = _stats(2000, 8000)
    for _ in range(100):
        profiles = [
            _profile(f"m{i}", prior=rng.randint(0, 3), alpha_nodes=rng.uniform(0, 20),
                     alpha_edges=rng.uniform(0, 20), beta_epoch_edge=rng.uniform(0, 0.01),
                     beta_epoch_node=rng.uniform(0, 0.01), epochs=rng.randint(1, 5))
            for i in range(rng.randint(1, 6))
        ]
        budget = Budget(max_memory_bytes=rng.randint(500_000, 3_000_000), max_time_seconds=rng.randint(1, 300))
        scored = [(p, estimate_cost(p, stats)) for p in profiles]
        feasible = [(p, e) for p, e in scored if e.memory_bytes <= budget.max_memory_bytes
                    and e.time_seconds <= budget.max_time_seconds]
        if not feasible:
            with pytest.raises(BudgetInfeasible):
                select_method(profiles, stats, budget)
            continue
        expected = min(feasible, key=lambda pe: (-pe[0].quality_prior, pe[1].time_seconds,
                                                 pe[1].memory_bytes, pe[0].name))[0]
        chosen = select_method(profiles, stats, budget)
        assert chosen == expected
        assert fits(estimate_cost(chosen, stats), budget)


def test_rank_methods_lists_feasible_first():
    cheap = _profile("cheap", alpha_nodes=0.0, alpha_edges=0.0)
    expensive = _profile("expensive", prior=5)
    ranked = rank_methods([expensive, cheap], _stats(1000, 5000), Budget(max_memory_bytes=10_000, max_time_seconds=3600))
    assert [(m.method, m.feasible) for m in ranked] == [("cheap", True), ("expensive", False)]


# PROFILES FILE
def test_shipped_profiles():
    profiles = {p.name: p for p in load_profiles(PROFILES_PATH)}
    assert set(profiles) == {"majority-label", "neighbor-label-frequency", "common-neighbors",
                             "embedding-similarity"}
    assert profiles["embedding-similarity"].family == MethodFamily.MiniBatchSampling
    stats = _stats(100, 300)
    assert select_method(list(profiles.values()), stats, BIG_BUDGET,
                         TaskType.NodeClassifier).name == "neighbor-label-frequency"
    assert select_method(list(profiles.values()), stats, BIG_BUDGET, TaskType.LinkPredictor).name == "common-neighbors"
    tight = Budget(max_memory_bytes=2 * 2 ** 20, max_time_seconds=3600)
    assert select_method(list(profiles.values()), stats, tight, TaskType.NodeClassifier).name == "majority-label"


def test_neighbour_vote_is_costed_as_mini_batch():
    profiles = {p.name: p for p in load_profiles(PROFILES_PATH)}
    vote = profiles["neighbor-label-frequency"]
    assert vote.family == MethodFamily.MiniBatchSampling
    stats = _stats(100_000, 1_000_000)
    estimate = estimate_cost(vote, stats)
    assert estimate.memory_bytes == 4194304 + 0.25 * (8 * 100_000 + 16 * 1_000_000)
    full = estimate_cost(vote.model_copy(update={"family": MethodFamily.FullBatch}), stats)
    budget = Budget(max_memory_bytes=10_000_000, max_time_seconds=3600)
    assert fits(estimate, budget) and not fits(full, budget)
    assert select_method(list(profiles.values()), stats, budget, TaskType.NodeClassifier) == vote


@pytest.mark.parametrize("content", ["not json", "[]", json.dumps([{"name": "x"}])])
def test_bad_profile_files(tmp_path, content):
    path = tmp_path / "profiles.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_profiles(path)


def test_missing_profile_file(tmp_path):
    with pytest.raises(ConfigError):
        load_profiles(tmp_path / "nope.json")


# TASK-SCOPED REDUCTION
def _large_dblp() -> list:
    """Ten thousand triples: venue-labelled publications plus people and events the venue task never needs."""
    n_papers, n_people, n_events = 400, 300, 1700
    triples = []
    for i in range(n_papers):
        publication = REC[f"big{i}"]
        triples += [(publication, RDF.type, DBLP.Publication), (publication, DBLP.title, Literal(f"Paper {i}")),
                    (publication, DBLP.authoredBy, PID[f"p{i % n_people}"]),
                    (publication, DBLP.authoredBy, PID[f"p{(7 * i + 1) % n_people}"]),
                    (publication, DBLP.publishedIn, VENUES[i % 2])]
    for j in range(n_people):
        person = PID[f"p{j}"]
        triples += [(person, RDF.type, DBLP.Person), (person, DBLP.name, Literal(f"Person {j}")),
                    (person, DBLP.affiliation, AFFILIATIONS[j % 2]),
                    (person, DBLP.coauthorWith, PID[f"p{(j + 1) % n_people}"])]
    for e in range(n_events):
        event = REC[f"event{e}"]
        triples += [(event, RDF.type, DBLP.Event), (event, DBLP.label, Literal(f"Event {e}")),
                    (event, DBLP.attendee, PID[f"p{e % n_people}"]), (event, DBLP.year, Literal(2000 + e % 20))]
    return triples


def test_task_scoped_subgraph_is_cheaper_to_train():
    kg = _large_dblp()
    assert len(set(kg)) == 10_000
    store = TripleStore()
    store.insert(KG, kg)
    scope = default_spec(TaskType.NodeClassifier, str(DBLP.Publication))
    kg_prime = extract_subgraph(StoreBackend(store, KG), scope)

    full, reduced = transform(kg, nc_spec()), transform(kg_prime, nc_spec())
    assert reduced.stats.total_triples == 2_000
    assert reduced.stats.n_labels == full.stats.n_labels == 400
    assert reduced.stats.total_nodes < full.stats.total_nodes
    assert reduced.stats.total_edges < full.stats.total_edges

    node_classifiers = [p for p in load_profiles(PROFILES_PATH) if TaskType.NodeClassifier in p.tasks]
    for profile in node_classifiers:
        on_kg_prime, on_kg = estimate_cost(profile, reduced.stats), estimate_cost(profile, full.stats)
        assert on_kg_prime.memory_bytes <= on_kg.memory_bytes
        assert on_kg_prime.time_seconds < on_kg.time_seconds
    vote = next(p for p in node_classifiers if p.name == "neighbor-label-frequency")
    assert estimate_cost(vote, reduced.stats).memory_bytes < estimate_cost(vote, full.stats).memory_bytes
