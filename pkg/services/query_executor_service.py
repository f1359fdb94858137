"""
Query executor: runs the rewritten data query and joins predictions into
it client-side.

Dictionary plans make one GMLaaS call per user-defined predicate,
PerBinding plans one call per distinct subject binding (bounded
parallelism). Rows come out in the data query's deterministic order with
each group's predictions expanded in model order.
"""

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from rdflib.term import Node

from schemas.planschema import InferenceCall, QueryPlan
from schemas.rdfschema import BindingTable
from services.dataset_transformer_service import key_to_term, node_key
from services.rdf_store_service import Backend, sort_key, to_csv, to_sparql_json
from utils.enums import PlanShape, TaskType
from utils.errors import InferenceError, KGNetError

logger = logging.getLogger(__name__)

DEFAULT_PARALLELISM = 8

Predictions = dict[str, list[Optional[Node]]]


def _call(gmlaas, call: InferenceCall, subjects: Optional[list[str]]) -> tuple[Predictions, list[str]]:
    """One GMLaaS request; ``subjects=None`` asks for the whole model."""
    if call.task_type == TaskType.NodeClassifier:
        response = gmlaas.infer_node_class(call.artifact_ref, subjects)
        found = {s: [key_to_term(label)] for s, label in response.predictions.items()}
    elif call.task_type == TaskType.LinkPredictor:
        response = gmlaas.infer_links(call.artifact_ref, subjects, call.k)
        found = {s: [key_to_term(d) for d in ranked] for s, ranked in response.predictions.items()}
    else:
        response = gmlaas.knn(call.artifact_ref, subjects, call.k)
        missing = set(response.unresolved)
        found = {s: [key_to_term(hit.iri) for hit in hits]
                 for s, hits in zip(subjects, response.results) if s not in missing}
    # an empty ranking answers nothing; treat the subject like one the model does not know
    empty = [s for s, values in found.items() if not values]
    for subject in empty:
        del found[subject]
    return found, list(response.unresolved) + empty


def _diagnostics(call: InferenceCall, **extra) -> dict:
    return {"predicate": call.predicate_var, "model": call.model_uri, "artifact_ref": call.artifact_ref,
            "shape": call.shape.value, **extra}


def _infer(gmlaas, call: InferenceCall, subjects: list[str], parallelism: int,
           filtered_dictionary: bool) -> tuple[Predictions, list[str], int]:
    if call.shape == PlanShape.Dictionary:
        batch = subjects if filtered_dictionary or call.task_type == TaskType.NodeSimilarity else None
        try:
            found, unresolved = _call(gmlaas, call, batch)
        except KGNetError as exc:
            raise InferenceError(f"inference for ?{call.predicate_var} failed: {exc}",
                                 **_diagnostics(call, completed_calls=0, cause=exc.detail)) from exc
        unresolved = sorted(set(unresolved) | {s for s in subjects if s not in found})
        return found, unresolved, 1

    found: Predictions = {}
    unresolved: list[str] = []
    failures = []
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        futures = [pool.submit(_call, gmlaas, call, [subject]) for subject in subjects]
        for subject, future in zip(subjects, futures):
            try:
                one, missing = future.result()
            except KGNetError as exc:
                failures.append((subject, exc))
                continue
            found.update(one)
            unresolved.extend(missing)
    if failures:
        subject, first = failures[0]
        raise InferenceError(
            f"{len(failures)} of {len(subjects)} inference calls for ?{call.predicate_var} failed: {first}",
            **_diagnostics(call, completed_calls=len(subjects) - len(failures),
                           failed_subjects=[s for s, _ in failures[:20]], cause=first.detail))
    return found, sorted(set(unresolved)), len(subjects)


def execute(query_plan: QueryPlan, backend: Backend, gmlaas, parallelism: int = DEFAULT_PARALLELISM,
            filtered_dictionary: bool = True, lenient: bool = False) -> BindingTable:
    """
    Evaluate a plan.

    Args:
        query_plan (QueryPlan): output of the planner.
        backend (Backend): data graph.
        gmlaas: GMLaaS client (HTTP or embedded).
        parallelism (int): PerBinding calls in flight.
        filtered_dictionary (bool): restrict Dictionary calls to the
            subjects the data query bound instead of the whole model.
        lenient (bool): keep rows whose subject has no prediction, with
            the predicted column unbound.

    Returns:
        BindingTable: columns in projection order.

    Raises:
        InferenceError: a GMLaaS call failed, or a subject has no
            prediction and ``lenient`` is off.
    """
    projection = list(query_plan.projection)
    if query_plan.empty:
        return BindingTable(projection, [])

    table = backend.select(query_plan.rewritten_query)
    rows = sorted(table.rows, key=lambda r: sort_key(r, query_plan.data_variables))
    if not rows:
        logger.info("data query returned no rows; no inference calls")
        return BindingTable(projection, [])

    predictions: dict[str, Predictions] = {}
    calls = 0
    for call in query_plan.manifest:
        subjects = list(dict.fromkeys(node_key(row[call.subject_var]) for row in rows))
        found, unresolved, made = _infer(gmlaas, call, subjects, parallelism, filtered_dictionary)
        calls += made
        if unresolved:
            if not lenient:
                raise InferenceError(
                    f"model has no prediction for {len(unresolved)} of {len(subjects)} bindings of "
                    f"?{call.subject_var}",
                    **_diagnostics(call, completed_calls=made, resolved=len(subjects) - len(unresolved),
                                   unresolved=unresolved[:20]))
            logger.warning("%d bindings of ?%s left unbound", len(unresolved), call.subject_var)
            for subject in unresolved:
                found[subject] = [None]
        predictions[call.predicate_var] = found

    result = []
    for row in rows:
        expansions = [[(call.object_var, value)
                       for value in predictions[call.predicate_var].get(node_key(row[call.subject_var]), [])]
                      for call in query_plan.manifest]
        for combination in itertools.product(*expansions):
            merged = {**row, **dict(combination)}
            result.append({v: merged.get(v) for v in projection})
    logger.info("%d rows, %d inference calls (%s)", len(result), calls, query_plan.shape.value)
    return BindingTable(projection, result)


def serialize(table: BindingTable, fmt: str = "json") -> str:
    """SPARQL JSON results (``json``) or CSV (``csv``)."""
    if fmt == "csv":
        return to_csv(table)
    if fmt == "json":
        return json.dumps(to_sparql_json(table), indent=2)
    raise ValueError(f"unknown result format {fmt!r}")
