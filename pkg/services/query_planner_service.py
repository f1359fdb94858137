"""
Query planner for SPARQL^ML SELECTs.

Planning is pure apart from the KGMeta lookup and the COUNT queries: one
model is chosen per user-defined predicate by exhaustive enumeration,
the plan shape comes from the call/transfer cost model and the query is
rewritten to plain SPARQL plus a manifest of inference calls that the
executor answers client-side.
"""

import itertools
import logging
from typing import Mapping, Optional, Sequence

from schemas.kgmetaschema import ModelMetadata
from schemas.planschema import (Assignment, Candidate, CardinalityEstimate, CostModelParams,
                                InferenceCall, ModelChoiceProblem, QueryPlan)
from schemas.sparqlmlschema import SparqlMlAst, UdpGroup
from services.rdf_store_service import Backend
from services.sparqlml_service import render_block
from utils.enums import ConstraintKey, Objective, PlanShape, QueryKind, TaskType
from utils.errors import InfeasibleModelChoice, KGNetError, NoModelMatches, QuerySemanticError
from utils.namespaces import KGNET

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 10

# sums of floats are compared at this precision so ties are ties
_PRECISION = 9


# MODEL SELECTION
def candidate_from_metadata(meta: ModelMetadata) -> Candidate:
    return Candidate(model_uri=meta.model_uri, artifact_ref=meta.artifact_ref, accuracy=meta.accuracy,
                     inference_time_ms=meta.inference_time_ms, cardinality=meta.model_cardinality)


def _violations(problem: ModelChoiceProblem) -> list[dict]:
    violations = []
    for index, candidates in enumerate(problem.groups):
        if problem.min_accuracy is not None:
            best = max(c.accuracy for c in candidates)
            if best < problem.min_accuracy:
                violations.append({"group": index, "constraint": "min_accuracy",
                                   "required": problem.min_accuracy, "best_available": best})
    if problem.max_time_ms is not None and not violations:
        fastest = [min(c.inference_time_ms for c in candidates
                       if problem.min_accuracy is None or c.accuracy >= problem.min_accuracy)
                   for candidates in problem.groups]
        if sum(fastest) > problem.max_time_ms:
            for index, time_ms in enumerate(fastest):
                violations.append({"group": index, "constraint": "max_time_ms",
                                   "required": problem.max_time_ms, "fastest_available": time_ms})
    return violations


def select_models(problem: ModelChoiceProblem) -> Assignment:
    """
    Exact optimum of the model-choice program by enumeration.

    Both bounds apply whatever the objective: summed inference time at
    most ``max_time_ms`` and every chosen accuracy at least
    ``min_accuracy``. ``MaxAccuracy`` maximizes summed accuracy,
    ``MinTime`` minimizes summed time. Ties go to higher accuracy, then
    lower time, then smaller model URIs.

    Raises:
        InfeasibleModelChoice: no assignment meets the bounds; the detail
            lists the violated constraint per group.
    """
    allowed = [[c for c in candidates
                if problem.min_accuracy is None or c.accuracy >= problem.min_accuracy]
               for candidates in problem.groups]

    best, best_key = None, None
    if all(allowed):
        for choices in itertools.product(*allowed):
            total_accuracy = round(sum(c.accuracy for c in choices), _PRECISION)
            total_time = round(sum(c.inference_time_ms for c in choices), _PRECISION)
            if problem.max_time_ms is not None and total_time > problem.max_time_ms:
                continue
            uris = tuple(c.model_uri for c in choices)
            if problem.objective == Objective.MaxAccuracy:
                key = (-total_accuracy, total_time, uris)
            else:
                key = (total_time, -total_accuracy, uris)
            if best_key is None or key < best_key:
                best, best_key = choices, key

    if best is None:
        violations = _violations(problem)
        raise InfeasibleModelChoice("no model assignment satisfies the query constraints",
                                    violations=violations)

    total_accuracy = sum(c.accuracy for c in best)
    total_time = sum(c.inference_time_ms for c in best)
    value = total_accuracy if problem.objective == Objective.MaxAccuracy else total_time
    return Assignment(choices=list(best), objective_value=value, total_accuracy=total_accuracy,
                      total_time_ms=total_time)


# CARDINALITIES
def count_query(ast: SparqlMlAst, variable: str) -> str:
    body = render_block(ast.data_patterns, _data_prefixes(ast))
    return f"{_prefix_lines(ast)}SELECT (COUNT(DISTINCT ?{variable}) AS ?n)\nWHERE {body}\n"


def estimate_cardinalities(ast: SparqlMlAst, backend: Backend,
                           fallback: Optional[Mapping[str, int]] = None) -> list[CardinalityEstimate]:
    """
    Distinct bindings of every user-defined predicate subject over the
    data patterns.

    When the backend fails the model cardinality from ``fallback`` is used
    as an upper bound and the estimate is flagged.
    """
    fallback = fallback or {}
    estimates = []
    for variable in dict.fromkeys(g.subject_var for g in ast.gml_patterns if g.subject_var):
        try:
            table = backend.select(count_query(ast, variable))
            value = table.rows[0].get("n") if table.rows else None
            count = int(str(value)) if value is not None else 0
            estimates.append(CardinalityEstimate(variable=variable, count=count))
        except KGNetError as exc:
            logger.warning("COUNT of ?%s failed (%s); using model cardinality %d", variable, exc,
                           fallback.get(variable, 0))
            estimates.append(CardinalityEstimate(variable=variable, count=fallback.get(variable, 0),
                                                 estimated=True))
    return estimates


# PLAN SHAPE
def plan_costs(bindings: Sequence[int], cardinalities: Sequence[int],
               params: CostModelParams) -> dict[PlanShape, float]:
    """
    Estimated milliseconds of both shapes for aligned per-group lists.

    PerBinding makes one call per binding; Dictionary makes one call per
    group and transfers the model's cardinality.
    """
    return {
        PlanShape.PerBinding: sum(bindings) * params.c_call_ms,
        PlanShape.Dictionary: len(bindings) * params.c_call_ms + sum(cardinalities) * params.c_item_ms,
    }


def _cheaper(costs: dict[PlanShape, float]) -> PlanShape:
    if costs[PlanShape.Dictionary] <= costs[PlanShape.PerBinding]:
        return PlanShape.Dictionary
    return PlanShape.PerBinding


def choose_plan(bindings: int, cardinality: int, params: Optional[CostModelParams] = None) -> PlanShape:
    """Cheaper shape for one group; a tie goes to Dictionary."""
    if bindings < 0 or cardinality < 0:
        raise ValueError("bindings and cardinality must be non-negative")
    return _cheaper(plan_costs([bindings], [cardinality], params or CostModelParams()))


# REWRITE
def _data_prefixes(ast: SparqlMlAst) -> dict[str, str]:
    return {p: iri for p, iri in ast.prefixes.items() if not iri.startswith(str(KGNET))}


def _prefix_lines(ast: SparqlMlAst) -> str:
    return "".join(f"PREFIX {p}: <{iri}>\n" for p, iri in _data_prefixes(ast).items())


def data_variables(ast: SparqlMlAst) -> list[str]:
    """Projected data variables followed by the subjects of user-defined predicates."""
    bound = ast.data_variables()
    names = [v for v in ast.projection if v in bound]
    for group in ast.gml_patterns:
        if group.subject_var and group.subject_var not in names:
            names.append(group.subject_var)
    return names


def _top_k(group: UdpGroup) -> Optional[int]:
    if group.task_type == TaskType.NodeClassifier:
        return None
    return group.top_k or DEFAULT_TOP_K


def rewrite(ast: SparqlMlAst, assignment: Optional[Assignment], shape: PlanShape,
            bindings: Optional[Mapping[str, int]] = None) -> tuple[str, list[InferenceCall]]:
    """
    Plain SPARQL over the data patterns plus one manifest entry per
    user-defined predicate.

    The query never mentions the kgnet namespace; predicted columns are
    filled in by the executor.
    """
    variables = data_variables(ast)
    query = (f"{_prefix_lines(ast)}SELECT {' '.join('?' + v for v in variables)}\n"
             f"WHERE {render_block(ast.data_patterns, _data_prefixes(ast))}\n")
    bindings = bindings or {}
    manifest = []
    choices = assignment.choices if assignment else []
    for group, choice in zip(ast.gml_patterns, choices):
        calls = 1 if shape == PlanShape.Dictionary else bindings.get(group.subject_var, 0)
        manifest.append(InferenceCall(predicate_var=group.predicate_var, task_type=group.task_type,
                                      model_uri=choice.model_uri, artifact_ref=choice.artifact_ref,
                                      subject_var=group.subject_var, object_var=group.object_var,
                                      shape=shape, k=_top_k(group), estimated_calls=calls))
    return query, manifest


# PLAN
def _lookup_constraints(group: UdpGroup) -> dict:
    return {key: value for key, value in group.constraints.items() if key != ConstraintKey.TopK}


def plan(ast: SparqlMlAst, governor, backend: Backend, params: Optional[CostModelParams] = None,
         objective: Objective = Objective.MaxAccuracy, max_time_ms: Optional[float] = None,
         min_accuracy: Optional[float] = None) -> QueryPlan:
    """
    Build the executable plan of a SELECT.

    Args:
        ast (SparqlMlAst): parsed SELECT.
        governor (KGMetaGovernor): model lookup.
        backend (Backend): data graph answering the COUNT queries.
        params (CostModelParams): call and transfer costs.
        objective (Objective): model-choice objective.
        max_time_ms (float): bound on summed inference time.
        min_accuracy (float): bound on every chosen accuracy.

    Returns:
        QueryPlan: shape, models, rewritten query and call manifest.

    Raises:
        NoModelMatches: a user-defined predicate has no KGMeta model.
        InfeasibleModelChoice: the bounds exclude every assignment.
    """
    if ast.kind != QueryKind.Select:
        raise QuerySemanticError(f"only SELECT queries are planned, not {ast.kind.value}")
    params = params or CostModelParams()

    groups = []
    for group in ast.gml_patterns:
        matches = governor.lookup_models(group.task_type, _lookup_constraints(group))
        if not matches:
            raise NoModelMatches(
                f"no model matches ?{group.predicate_var} ({group.task_type.value})",
                predicate=group.predicate_var,
                constraints={k.value: str(v) for k, v in group.constraints.items()})
        groups.append([candidate_from_metadata(m) for m in matches])

    assignment = None
    if groups:
        assignment = select_models(ModelChoiceProblem(groups=groups, objective=objective,
                                                      max_time_ms=max_time_ms, min_accuracy=min_accuracy))
        for group, choice in zip(ast.gml_patterns, assignment.choices):
            logger.info("?%s -> %s (accuracy %.3f, %.1f ms)", group.predicate_var, choice.model_uri,
                        choice.accuracy, choice.inference_time_ms)

    fallback = {}
    if assignment:
        for group, choice in zip(ast.gml_patterns, assignment.choices):
            fallback[group.subject_var] = max(fallback.get(group.subject_var, 0), choice.cardinality)
    cardinalities = estimate_cardinalities(ast, backend, fallback)
    counts = {c.variable: c.count for c in cardinalities}

    per_group_b = [counts.get(g.subject_var, 0) for g in ast.gml_patterns]
    per_group_c = [c.cardinality for c in assignment.choices] if assignment else []
    costs = plan_costs(per_group_b, per_group_c, params)
    shape = _cheaper(costs)
    query, manifest = rewrite(ast, assignment, shape, counts)

    empty = any(c.count == 0 and not c.estimated for c in cardinalities)
    if empty:
        logger.info("data patterns match nothing; no inference calls")
    estimated_calls = 0 if empty else sum(call.estimated_calls for call in manifest)
    logger.info("plan %s: %d estimated calls, %.2f ms", shape.value, estimated_calls, costs[shape])
    logger.debug("rewritten data query:\n%s", query)
    return QueryPlan(shape=shape, models={c.predicate_var: c.model_uri for c in manifest},
                     estimated_calls=estimated_calls, estimated_cost=costs[shape], rewritten_query=query,
                     data_variables=data_variables(ast), projection=list(ast.projection), manifest=manifest,
                     cardinalities=cardinalities, empty=empty)

