"""
KGNet operator interface.

    python cli.py [--config FILE] [--json] [--log-level LEVEL] <command> ...

Commands: serve, load, sample, transform, train, query, models list,
models delete, export-kgmeta. Exit code 0 on success, 1 on user errors,
2 on backend errors (unreachable endpoint or GMLaaS, failed inference).
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import ValidationError
from rdflib import URIRef

from schemas.datasetschema import SamplingSpec
from schemas.rdfschema import BindingTable
from schemas.sparqlmlschema import TrainGmlSpec
from services import query_manager_service
from services.dataset_transformer_service import package_write, transform
from services.meta_sampler_service import extract_subgraph, write_subgraph
from services.platform_service import build_platform
from services.query_executor_service import serialize
from services.rdf_store_service import parse_ntriples
from services.sparqlml_service import parse_train_json
from services.training_pipeline_service import run_training
from utils.enums import ConstraintKey, Objective, QueryKind, ServiceRole, SplitStrategy, TaskType
from utils.errors import KGNetError
from utils.logging_config import configure_logging
from utils.settings import default_budget, load_config

USER_ERROR = 1


class UsageError(Exception):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are user errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USER_ERROR, f"{self.prog}: error: {message}\n")


def _emit(args, payload, text: Optional[str] = None):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text if text is not None else payload)


def _plain(term) -> str:
    return "" if term is None else str(term)


def format_table(table: BindingTable) -> str:
    """Fixed-width text table of plain values."""
    if not table.rows:
        return " ".join(table.variables) + "\n(no rows)"
    frame = pd.DataFrame([[_plain(row.get(v)) for v in table.variables] for row in table.rows],
                         columns=table.variables)
    return frame.to_string(index=False)


# COMMANDS
def cmd_serve(args, config):
    import uvicorn  # pylint: disable=import-outside-toplevel

    from main import create_app  # pylint: disable=import-outside-toplevel

    uvicorn.run(create_app(ServiceRole(args.role), config=config), host=config.host, port=config.port,
                log_level=config.log_level.lower())
    return 0


def cmd_load(args, platform):
    graph = args.graph or platform.config.data_graph
    added = platform.store.load_ntriples(args.file, graph)
    _emit(args, {"graph": graph, "added": added}, f"{added} new triples in <{graph}>")
    return 0


def cmd_sample(args, platform):
    spec = SamplingSpec(target_node_type=args.target, direction=args.d, hops=args.h)
    triples = extract_subgraph(platform.data_backend, spec, platform.config.sampler_page_size)
    if args.out:
        write_subgraph(triples, args.out)
    payload = {"target": args.target, "scope": spec.label, "triples": len(triples), "out": args.out}
    _emit(args, payload, f"KG' ({spec.label}) of <{args.target}>: {len(triples)} triples"
                         + (f" -> {args.out}" if args.out else ""))
    return 0


def cmd_transform(args, platform):
    spec = parse_train_json(Path(args.train).read_text(encoding="utf-8"),
                            default_budget=default_budget(platform.config))
    updates = {}
    if args.split:
        updates["split_strategy"] = SplitStrategy(args.split)
    if args.community_edge:
        updates["community_edge"] = args.community_edge
    if updates:
        spec = TrainGmlSpec(**{**spec.model_dump(), **updates})
    kg_prime = parse_ntriples(Path(args.kg).read_text(encoding="utf-8"))
    seed = args.seed if args.seed is not None else platform.config.split_seed
    pkg = transform(kg_prime, spec, seed=seed)
    path = package_write(pkg, args.out)
    stats = pkg.stats.model_dump()
    _emit(args, {"package": str(path), "stats": stats},
          f"package {path}: {stats['total_nodes']} nodes, {stats['total_edges']} edges, "
          f"{stats['n_labels']} labels")
    return 0


def cmd_train(args, platform):
    spec = parse_train_json(Path(args.file).read_text(encoding="utf-8"),
                            default_budget=default_budget(platform.config))
    config = platform.config
    result = run_training(spec, platform.data_backend, platform.governor, platform.gmlaas,
                          platform.package_dir, trained_on=config.data_graph,
                          page_size=config.sampler_page_size, seed=config.split_seed)
    meta = result.metadata
    _emit(args, result.model_dump(mode="json"),
          f"{result.model_uri}\n  method {meta.method_name}, accuracy {meta.accuracy:.4f}, "
          f"inference {meta.inference_time_ms:.3f} ms, cardinality {meta.model_cardinality}")
    return 0


def cmd_query(args, platform):
    text = Path(args.file).read_text(encoding="utf-8")
    outcome = query_manager_service.run(platform, text, Objective(args.objective), args.max_time_ms,
                                        args.min_accuracy, args.lenient)
    if outcome.kind != QueryKind.Select:
        payload = outcome.to_json()
        if outcome.kind == QueryKind.InsertTrain:
            text_out = f"registered {outcome.training.model_uri}"
        else:
            text_out = "\n".join(f"deleted {uri}" for uri in outcome.deleted) or "no model matched; nothing deleted"
        _emit(args, payload, text_out)
        return 0
    fmt = "json" if args.json else args.format
    if fmt == "table":
        print(format_table(outcome.table))
    else:
        print(serialize(outcome.table, fmt))
    return 0


def cmd_models_list(args, platform):
    models = platform.governor.list_models()
    if args.json:
        _emit(args, [m.model_dump(mode="json") for m in models])
        return 0
    rows = [[m.model_uri, m.task_type.value, m.method_name, f"{m.accuracy:.4f}",
             f"{m.inference_time_ms:.3f}", m.model_cardinality] for m in models]
    frame = pd.DataFrame(rows, columns=["uri", "task", "method", "accuracy", "time_ms", "cardinality"])
    print(frame.to_string(index=False) if rows else "(no models)")
    return 0


def _constraints(pairs) -> dict:
    constraints = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"constraint must be KEY=IRI: {pair}")
        try:
            constraints[ConstraintKey(key)] = URIRef(value)
        except ValueError as exc:
            raise UsageError(f"unknown constraint {key!r}; one of "
                             f"{', '.join(k.value for k in ConstraintKey)}") from exc
    return constraints


def cmd_models_delete(args, platform):
    deleted = platform.governor.delete_models(TaskType(args.task), _constraints(args.constraint))
    _emit(args, {"deleted": deleted}, "\n".join(f"deleted {uri}" for uri in deleted) or "no model matched")
    return 0


def cmd_export_kgmeta(args, platform):
    data = platform.governor.export_ntriples()
    Path(args.file).write_bytes(data)
    count = len(data.splitlines())
    _emit(args, {"file": args.file, "triples": count}, f"{count} KGMeta triples -> {args.file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgnet", description="GML-enabled knowledge graph platform")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    serve = commands.add_parser("serve", help="run the HTTP services")
    serve.add_argument("--role", choices=[r.value for r in ServiceRole], default=ServiceRole.all.value)
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.set_defaults(handler=cmd_serve, needs_platform=False)

    load = commands.add_parser("load", help="load an N-Triples file")
    load.add_argument("file")
    load.add_argument("--graph", help="target graph IRI (data graph by default)")
    load.set_defaults(handler=cmd_load)

    sample = commands.add_parser("sample", help="extract the task subgraph KG'")
    sample.add_argument("--target", required=True, help="target node type IRI")
    sample.add_argument("--d", type=int, choices=[1, 2], default=1, help="1 outgoing, 2 bidirectional")
    sample.add_argument("--h", type=int, choices=[1, 2], default=1, help="hops")
    sample.add_argument("--out", help="write KG' as N-Triples")
    sample.set_defaults(handler=cmd_sample)

    trans = commands.add_parser("transform", help="encode KG' as a dataset package")
    trans.add_argument("--kg", required=True, help="KG' N-Triples file")
    trans.add_argument("--train", required=True, help="TrainGML JSON file")
    trans.add_argument("--out", required=True, help="package zip")
    trans.add_argument("--split", choices=[s.value for s in SplitStrategy])
    trans.add_argument("--community-edge")
    trans.add_argument("--seed", type=int)
    trans.set_defaults(handler=cmd_transform)

    train = commands.add_parser("train", help="train and register a model")
    train.add_argument("file", help="TrainGML JSON file")
    train.set_defaults(handler=cmd_train)

    query = commands.add_parser("query", help="run a SPARQL-ML statement")
    query.add_argument("file", help=".sparqlml file")
    query.add_argument("--format", choices=["table", "json", "csv"], default="table")
    query.add_argument("--lenient", action="store_true", help="keep rows without a prediction")
    query.add_argument("--objective", choices=[o.value for o in Objective], default=Objective.MaxAccuracy.value)
    query.add_argument("--max-time-ms", type=float)
    query.add_argument("--min-accuracy", type=float)
    query.set_defaults(handler=cmd_query)

    models = commands.add_parser("models", help="inspect or delete KGMeta models")
    model_commands = models.add_subparsers(dest="models_command", required=True, parser_class=_Parser)
    model_list = model_commands.add_parser("list")
    model_list.set_defaults(handler=cmd_models_list)
    model_delete = model_commands.add_parser("delete")
    model_delete.add_argument("--task", required=True, choices=[t.value for t in TaskType])
    model_delete.add_argument("--constraint", action="append", metavar="KEY=IRI")
    model_delete.set_defaults(handler=cmd_models_delete)

    export = commands.add_parser("export-kgmeta", help="write KGMeta as N-Triples")
    export.add_argument("file")
    export.set_defaults(handler=cmd_export_kgmeta)
    return parser


def _report(args, exc: KGNetError):
    if args.json:
        print(json.dumps({"error": exc.detail}, indent=2, sort_keys=True, default=str))
    else:
        print(f"error: {type(exc).__name__}: {exc.message}", file=sys.stderr)
        for key, value in exc.context.items():
            print(f"  {key}: {value}", file=sys.stderr)


def main(argv: Optional[list[str]] = None, platform=None) -> int:
    """
    Run one command.

    Args:
        argv (list): arguments without the program name.
        platform (Platform): use this platform instead of building one
            from the configuration (tests).

    Returns:
        int: exit code.
    """
    args = build_parser().parse_args(argv)
    owned = platform is None
    try:
        overrides = {"log_level": args.log_level, "host": getattr(args, "host", None),
                     "port": getattr(args, "port", None)}
        config = platform.config if platform is not None else load_config(args.config, overrides)
        configure_logging(args.log_level or config.log_level)
        if not getattr(args, "needs_platform", True):
            return args.handler(args, config)
        if owned:
            platform = build_platform(config)
        try:
            return args.handler(args, platform)
        finally:
            if owned:
                platform.close()
    except KGNetError as exc:
        _report(args, exc)
        return exc.exit_code
    except (UsageError, ValidationError, ValueError, OSError) as exc:
        if args.json:
            print(json.dumps({"error": {"error": type(exc).__name__, "message": str(exc)}}, indent=2))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
