"""
Budget-driven method selection.

memory = alpha_fixed + f * (alpha_nodes * |V| * dim + alpha_edges * |E|)
time   = epochs * (beta_epoch_edge * |E| + beta_epoch_node * |V|)

with ``f`` the batch fraction for mini-batch methods and 1 for full batch.
"""

import json
import logging
import math
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from schemas.datasetschema import DatasetStats
from schemas.gmlschema import CostEstimate, MethodEstimate, MethodProfile
from schemas.sparqlmlschema import Budget
from utils.enums import MethodFamily, Priority, TaskType
from utils.errors import BudgetInfeasible, ConfigError, TrainingError

logger = logging.getLogger(__name__)


def load_profiles(path) -> list[MethodProfile]:
    """Read method profiles from a JSON file (a list, or ``{"profiles": [...]}``)."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read method profiles {path}: {exc}") from exc
    entries = raw.get("profiles", []) if isinstance(raw, dict) else raw
    try:
        profiles = [MethodProfile(**entry) for entry in entries]
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"invalid method profile in {path}: {exc}") from exc
    if not profiles:
        raise ConfigError(f"no method profiles in {path}")
    return profiles


def estimate_cost(profile: MethodProfile, stats: DatasetStats, dim: Optional[int] = None,
                  epochs: Optional[int] = None) -> CostEstimate:
    dim = profile.dim if dim is None else dim
    epochs = profile.epochs if epochs is None else epochs
    nodes = sum(stats.n_nodes.values())
    edges = sum(stats.n_edges.values())
    fraction = profile.batch_fraction if profile.family == MethodFamily.MiniBatchSampling else 1.0
    memory = profile.alpha_fixed + fraction * (profile.alpha_nodes * nodes * dim + profile.alpha_edges * edges)
    seconds = epochs * (profile.beta_epoch_edge * edges + profile.beta_epoch_node * nodes)
    return CostEstimate(memory_bytes=math.ceil(memory), time_seconds=seconds)


def priority_key(priority: Priority):
    """Sort key over (profile, estimate) pairs; the smallest key wins."""
    if priority == Priority.TrainingTime:
        return lambda p, e: (e.time_seconds, -p.quality_prior, e.memory_bytes, p.name)
    if priority == Priority.Memory:
        return lambda p, e: (e.memory_bytes, -p.quality_prior, e.time_seconds, p.name)
    return lambda p, e: (-p.quality_prior, e.time_seconds, e.memory_bytes, p.name)


def fits(estimate: CostEstimate, budget: Budget) -> bool:
    return estimate.memory_bytes <= budget.max_memory_bytes and estimate.time_seconds <= budget.max_time_seconds


def rank_methods(profiles: list[MethodProfile], stats: DatasetStats, budget: Budget,
                 task_type: Optional[TaskType] = None) -> list[MethodEstimate]:
    """Every applicable profile with its estimate, best first under the budget priority."""
    key = priority_key(budget.priority)
    scored = [(p, estimate_cost(p, stats)) for p in profiles if task_type is None or task_type in p.tasks]
    scored.sort(key=lambda pe: (not fits(pe[1], budget), key(*pe)))
    return [MethodEstimate(method=p.name, estimate=e, feasible=fits(e, budget)) for p, e in scored]


def select_method(profiles: list[MethodProfile], stats: DatasetStats, budget: Budget,
                  task_type: Optional[TaskType] = None) -> MethodProfile:
    """
    Best profile whose estimate fits the budget.

    Raises:
        TrainingError: no profile supports ``task_type``.
        BudgetInfeasible: nothing fits; lists every estimate against the budget.
    """
    candidates = [p for p in profiles if task_type is None or task_type in p.tasks]
    if not candidates:
        raise TrainingError(f"no training method supports {task_type}")
    key = priority_key(budget.priority)
    scored = [(p, estimate_cost(p, stats)) for p in candidates]
    feasible = [pe for pe in scored if fits(pe[1], budget)]
    if not feasible:
        raise BudgetInfeasible(
            "no training method fits the task budget",
            budget={"max_memory_bytes": budget.max_memory_bytes, "max_time_seconds": budget.max_time_seconds},
            estimates={p.name: e.model_dump() for p, e in scored},
        )
    chosen, estimate = min(feasible, key=lambda pe: key(*pe))
    logger.info("selected method %s (memory %d B, time %.2f s, priority %s)", chosen.name,
                estimate.memory_bytes, estimate.time_seconds, budget.priority.value)
    return chosen
