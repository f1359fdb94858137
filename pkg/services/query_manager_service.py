"""
SPARQL^ML query manager: parses a statement and dispatches it.

SELECT -> plan + execute, INSERT ... TrainGML -> training pipeline,
DELETE -> KGMeta governor.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from schemas.kgmetaschema import TrainingResult
from schemas.planschema import QueryPlan
from schemas.rdfschema import BindingTable
from services import query_executor_service, query_planner_service
from services.platform_service import Platform
from services.rdf_store_service import to_sparql_json
from services.sparqlml_service import parse
from services.training_pipeline_service import run_training
from utils.enums import Objective, QueryKind

logger = logging.getLogger(__name__)


@dataclass
class QueryOutcome:
    """What one statement produced; exactly one of the payload fields is set."""

    kind: QueryKind
    table: Optional[BindingTable] = None
    plan: Optional[QueryPlan] = None
    training: Optional[TrainingResult] = None
    deleted: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        """SPARQL JSON results for SELECT, metadata JSON otherwise."""
        if self.kind == QueryKind.Select:
            payload = to_sparql_json(self.table)
            if self.plan is not None:
                payload["plan"] = self.plan.model_dump(mode="json", exclude={"rewritten_query", "manifest"})
            return payload
        if self.kind == QueryKind.InsertTrain:
            return {"kind": self.kind.value, **self.training.model_dump(mode="json")}
        return {"kind": self.kind.value, "deleted": list(self.deleted)}


def run(platform: Platform, text: str, objective: Objective = Objective.MaxAccuracy,
        max_time_ms: Optional[float] = None, min_accuracy: Optional[float] = None,
        lenient: bool = False) -> QueryOutcome:
    """
    Execute one SPARQL^ML statement against ``platform``.

    Args:
        platform (Platform): configured components.
        text (str): SPARQL^ML statement.
        objective (Objective): model-choice objective for SELECT.
        max_time_ms (float): bound on summed inference time.
        min_accuracy (float): bound on every chosen model's accuracy.
        lenient (bool): keep rows without a prediction, unbound.

    Returns:
        QueryOutcome: result table, training result or deleted model URIs.
    """
    ast = parse(text)
    config = platform.config

    if ast.kind == QueryKind.Select:
        query_plan = query_planner_service.plan(ast, platform.governor, platform.data_backend,
                                                platform.cost_params, objective, max_time_ms, min_accuracy)
        table = query_executor_service.execute(query_plan, platform.data_backend, platform.gmlaas,
                                               parallelism=config.inference_parallelism,
                                               filtered_dictionary=config.filtered_dictionary, lenient=lenient)
        return QueryOutcome(kind=ast.kind, table=table, plan=query_plan)

    if ast.kind == QueryKind.InsertTrain:
        if ast.target_graph != config.kgmeta_graph:
            logger.warning("INSERT INTO <%s>: models are registered in KGMeta <%s>", ast.target_graph,
                           config.kgmeta_graph)
        result = run_training(ast.train_payload, platform.data_backend, platform.governor, platform.gmlaas,
                              platform.package_dir, trained_on=config.data_graph,
                              page_size=config.sampler_page_size, seed=config.split_seed)
        platform.save()
        return QueryOutcome(kind=ast.kind, training=result)

    deleted = []
    for group in ast.gml_patterns:
        deleted.extend(platform.governor.delete_models(group.task_type, group.constraints))
    platform.save()
    return QueryOutcome(kind=ast.kind, deleted=deleted)
