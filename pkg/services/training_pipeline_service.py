"""
Training pipeline behind ``INSERT INTO <kgmeta> ... TrainGML(...)``.

sample -> transform -> package -> GMLaaS train -> KGMeta register.
"""

import logging
import re
from pathlib import Path

from schemas.kgmetaschema import ModelMetadata, TrainingResult
from schemas.sparqlmlschema import TrainGmlSpec
from services.dataset_transformer_service import package_write, transform
from services.kgmeta_service import KGMetaGovernor
from services.meta_sampler_service import default_spec, extract_subgraph, resolve_link_predicates
from services.rdf_store_service import Backend
from utils.enums import TaskType
from utils.errors import DuplicateModel

logger = logging.getLogger(__name__)


def package_path(package_dir, spec: TrainGmlSpec, kg_digest: str) -> Path:
    """``<package_dir>/<task name>-<digest prefix>.zip``."""
    stem = re.sub(r"[^A-Za-z0-9_\-]", "_", spec.name)
    return Path(package_dir) / f"{stem}-{kg_digest[:12]}.zip"


def run_training(spec: TrainGmlSpec, data_backend: Backend, governor: KGMetaGovernor, gmlaas,
                 package_dir, trained_on: str, page_size: int = 100_000, seed: int = 0) -> TrainingResult:
    """
    Train and register one model.

    Args:
        spec (TrainGmlSpec): parsed TrainGML payload.
        data_backend (Backend): the data KG.
        governor (KGMetaGovernor): KGMeta to register into.
        gmlaas: GMLaaS client.
        package_dir: where the dataset package is written.
        trained_on (str): IRI of the data graph recorded in KGMeta.
        page_size (int): sampler page size.
        seed (int): split seed.

    Returns:
        TrainingResult: minted model URI and its metadata.

    Raises:
        DatasetError, BudgetInfeasible, TrainingError, DuplicateModel,
        GmlaasUnavailable: from the stage that failed.
    """
    sampling = default_spec(spec.task_type, spec.target_node_type, spec.sampling_direction, spec.sampling_hops)

    kg_prime = extract_subgraph(data_backend, sampling, page_size)

    if spec.task_type == TaskType.LinkPredictor and not spec.link_predicates:
        predicates = resolve_link_predicates(data_backend, spec.source_node_type, spec.destination_node_type)
        spec = spec.model_copy(update={"link_predicates": predicates})

    pkg = transform(kg_prime, spec, seed=seed)
    path = package_write(pkg, package_path(package_dir, spec, pkg.manifest["kg_digest"]))
    logger.info("dataset package for %s written to %s", spec.name, path)

    response = gmlaas.train(spec, path)

    meta = ModelMetadata(
        name=spec.name,
        task_type=spec.task_type,
        target_node_type=spec.target_node_type,
        label_predicate=spec.label_predicate,
        source_node_type=spec.source_node_type,
        destination_node_type=spec.destination_node_type,
        method_name=response.method_name,
        accuracy=response.accuracy,
        inference_time_ms=response.inference_time_ms,
        model_cardinality=response.model_cardinality,
        trained_on=trained_on,
        sampling_direction=sampling.direction,
        sampling_hops=sampling.hops,
        artifact_ref=response.artifact_ref,
        created_at=response.created_at,
        dataset_digest=response.dataset_digest,
        hits_at_10=response.hits_at_10,
        mrr=response.mrr,
    )
    try:
        uri = governor.register_model(meta)
    except DuplicateModel:
        logger.warning("discarding artifact %s: an identical model is already registered", response.artifact_ref)
        gmlaas.delete_model(response.artifact_ref)
        raise
    return TrainingResult(model_uri=uri, metadata=meta.model_copy(update={"model_uri": uri}),
                          package=str(path), kg_prime_triples=len(kg_prime),
                          estimate=response.estimate.model_dump())
