"""
Data transformer: KG' triples -> ID-encoded, split dataset package.

Encoding rules:

- a node's type is the task's target type when it carries it, otherwise
  the lexicographically smallest of its ``rdf:type`` IRIs;
- objects of ``rdf:type`` without a type of their own are ``Class`` nodes,
  other untyped resources are ``Untyped`` nodes (or an error);
- literal objects become ``Literal_<datatype>`` nodes, or are dropped;
- ids are contiguous per type, assigned in N-Triples order of the nodes;
- the ``rdf:type`` relation is named ``a``, other relations by the local
  name of their predicate (suffixed with a short hash on collisions).

Label edges never reach ``relations``: every triple of the label predicate
for node classification, every held-out source->destination link for link
prediction.
"""

import hashlib
import io
import json
import logging
import math
import re
import zipfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from rdflib import RDF, XSD, Literal, URIRef
from rdflib.term import Node

from schemas.datasetschema import PACKAGE_FORMAT_VERSION, DatasetPackage, DatasetStats
from schemas.rdfschema import Triple
from schemas.sparqlmlschema import TrainGmlSpec
from services.rdf_store_service import parse_term, serialize_triples, term_to_nt
from utils.enums import LiteralHandling, SplitStrategy, TaskType, UntypedHandling
from utils.errors import DatasetError, PackageError
from utils.namespaces import local_name

logger = logging.getLogger(__name__)

CLASS_TYPE = "Class"
UNTYPED_TYPE = "Untyped"
TYPE_EDGE = "a"
DEFAULT_RATIOS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "valid", "test")
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


# NODE KEYS
def node_key(term: Node) -> str:
    """Text key of a node: the IRI itself, ``_:label`` or a literal's N-Triples form."""
    if isinstance(term, URIRef):
        return str(term)
    return term_to_nt(term)


def key_to_term(key: str) -> Node:
    if key.startswith('"') or key.startswith("_:"):
        return parse_term(key)
    return URIRef(key)


def kg_digest(triples: Iterable[Triple]) -> str:
    """sha256 of the canonical N-Triples form of a triple set."""
    return hashlib.sha256(serialize_triples(set(triples))).hexdigest()


def _safe_name(iri: str) -> str:
    name = re.sub(r"[^A-Za-z0-9_\-]", "_", local_name(iri))
    return name or "x"


def assign_names(iris: Iterable[str], reserved: Iterable[str] = ()) -> dict[str, str]:
    """File-safe names for IRIs; colliding or reserved names get a hash suffix."""
    by_name: dict[str, list[str]] = defaultdict(list)
    for iri in sorted(set(iris)):
        by_name[_safe_name(iri)].append(iri)
    reserved = set(reserved)
    names = {}
    for name, members in by_name.items():
        for iri in members:
            if len(members) > 1 or name in reserved:
                names[iri] = f"{name}_{hashlib.sha1(iri.encode('utf-8')).hexdigest()[:6]}"
            else:
                names[iri] = name
    return names


def _literal_type(term: Literal) -> str:
    if term.language:
        datatype = str(RDF.langString)
    else:
        datatype = str(term.datatype or XSD.string)
    return f"Literal_{_safe_name(datatype)}"


# SPLITS
def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"split ratios must be three non-negative numbers summing to 1: {list(ratios)}")
    return tuple(float(r) for r in ratios)


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor allocation for valid and test; the remainder goes to train."""
    _, valid, test = _check_ratios(ratios)
    if n < 3:
        return n, 0, 0
    n_valid = math.floor(n * valid + 1e-9)
    n_test = math.floor(n * test + 1e-9)
    return n - n_valid - n_test, n_valid, n_test


def _warn_empty(splits: dict, n: int):
    if n < 3:
        logger.warning("only %d labelled targets; all assigned to train", n)
    empty = [name for name in SPLIT_NAMES if not splits[name]]
    if empty and n >= 3:
        logger.warning("empty split(s) %s for %d targets", ", ".join(empty), n)


def split_random(target_ids: Iterable[int], ratios: Sequence[float] = DEFAULT_RATIOS,
                 seed: int = 0) -> dict[str, list[int]]:
    """Seeded random split; membership depends only on (ids, ratios, seed)."""
    ids = sorted(set(int(i) for i in target_ids))
    n_train, n_valid, n_test = split_sizes(len(ids), ratios)
    order = np.random.default_rng(seed).permutation(np.array(ids, dtype=np.int64)).tolist()
    splits = {
        "valid": sorted(order[:n_valid]),
        "test": sorted(order[n_valid:n_valid + n_test]),
        "train": sorted(order[n_valid + n_test:n_valid + n_test + n_train]),
    }
    _warn_empty(splits, len(ids))
    return {name: splits[name] for name in SPLIT_NAMES}


def split_community(target_ids: Mapping[int, Node], community_edge: str, kg_prime: Iterable[Triple],
                    ratios: Sequence[float] = DEFAULT_RATIOS) -> dict[str, list[int]]:
    """
    Keep communities together: targets sharing the (smallest) object they
    reach through ``community_edge`` form one group. Groups, largest first,
    go whole to the split with the largest remaining deficit against the
    floor allocation; ties resolve train, valid, test.
    """
    edge = URIRef(community_edge)
    reach: dict[Node, list[str]] = defaultdict(list)
    seen_edge = False
    for subject, predicate, obj in kg_prime:
        if predicate == edge:
            seen_edge = True
            reach[subject].append(term_to_nt(obj))
    if not seen_edge:
        raise DatasetError(f"community edge <{community_edge}> does not occur in KG'; "
                           "use the random split strategy", community_edge=community_edge)

    groups: dict[str, list[int]] = defaultdict(list)
    for target_id, node in target_ids.items():
        key = min(reach[node]) if reach.get(node) else "self:" + term_to_nt(node)
        groups[key].append(int(target_id))

    wanted = dict(zip(SPLIT_NAMES, split_sizes(len(target_ids), ratios)))
    if len(target_ids) < 3:
        wanted = {"train": len(target_ids), "valid": 0, "test": 0}
    splits: dict[str, list[int]] = {name: [] for name in SPLIT_NAMES}
    for key in sorted(groups, key=lambda k: (-len(groups[k]), k)):
        deficits = [(wanted[name] - len(splits[name]), -index) for index, name in enumerate(SPLIT_NAMES)]
        chosen = SPLIT_NAMES[-max(deficits)[1]]
        splits[chosen].extend(groups[key])
    if len(groups) == 1:
        logger.warning("community split found a single community; everything lands in train")
    _warn_empty(splits, len(target_ids))
    return {name: sorted(ids) for name, ids in splits.items()}


# TRANSFORM
def _resolve_types(triples, preferred: set[str], untyped: UntypedHandling, literal_nodes: bool):
    """Map every node key to its type label (IRI or synthetic name)."""
    declared: dict[str, set[str]] = defaultdict(set)
    classes = set()
    for subject, predicate, obj in triples:
        if predicate == RDF.type and isinstance(obj, URIRef) and not isinstance(subject, Literal):
            declared[node_key(subject)].add(str(obj))
            classes.add(str(obj))

    node_types: dict[str, str] = {}
    nodes: dict[str, Node] = {}
    for subject, _, obj in triples:
        nodes[node_key(subject)] = subject
        if not isinstance(obj, Literal) or literal_nodes:
            nodes[node_key(obj)] = obj

    multi_typed = 0
    for key, term in nodes.items():
        if isinstance(term, Literal):
            node_types[key] = _literal_type(term)
        elif key in declared:
            types = declared[key]
            multi_typed += len(types) > 1
            preferred_hits = sorted(types & preferred)
            node_types[key] = preferred_hits[0] if preferred_hits else min(types)
        elif key in classes:
            node_types[key] = CLASS_TYPE
        elif untyped == UntypedHandling.error:
            raise DatasetError(f"node {term_to_nt(term)} has no rdf:type", node=key)
        else:
            node_types[key] = UNTYPED_TYPE
    return node_types, nodes, multi_typed


def _targets_of(triples, type_iri: str) -> set[Node]:
    target = URIRef(type_iri)
    return {s for s, p, o in triples if p == RDF.type and o == target}


def _derive_link_predicates(triples, sources: set, destination_type: str) -> list[str]:
    destinations = _targets_of(triples, destination_type)
    return sorted({str(p) for s, p, o in triples if s in sources and o in destinations and p != RDF.type})


def transform(kg_prime: Iterable[Triple], task: TrainGmlSpec, split: Optional[SplitStrategy] = None,
              seed: int = 0, ratios: Sequence[float] = DEFAULT_RATIOS,
              literal_handling: LiteralHandling = LiteralHandling.nodes,
              untyped_handling: UntypedHandling = UntypedHandling.synthetic,
              exclude_predicates: Iterable[str] = ()) -> DatasetPackage:
    """
    Encode KG' for ``task``.

    Raises:
        DatasetError: empty KG', target type or label predicate absent,
            untyped nodes under the ``error`` policy, bad split settings.
    """
    ratios = list(_check_ratios(ratios))
    excluded = {URIRef(p) for p in exclude_predicates}
    triples = sorted({t for t in kg_prime if t[1] not in excluded}, key=lambda t: tuple(map(term_to_nt, t)))
    if not triples:
        raise DatasetError("KG' is empty; nothing to transform")
    split = SplitStrategy(split or task.split_strategy)

    target_iri = task.target_node_type
    targets = _targets_of(triples, target_iri)
    if not targets:
        raise DatasetError(f"target type <{target_iri}> is absent from KG'", target=target_iri)

    # label edges
    label_edges: set[Triple] = set()
    link_predicates: list[str] = []
    if task.task_type == TaskType.NodeClassifier:
        label_pred = URIRef(task.label_predicate)
        label_edges = {t for t in triples if t[1] == label_pred}
        if not any(t[0] in targets for t in label_edges):
            raise DatasetError(f"label predicate <{task.label_predicate}> is absent from KG'",
                               label_predicate=task.label_predicate)
    elif task.task_type == TaskType.LinkPredictor:
        link_predicates = sorted(task.link_predicates) or _derive_link_predicates(
            triples, targets, task.destination_node_type)
        links = {URIRef(p) for p in link_predicates}
        label_edges = {t for t in triples if t[0] in targets and t[1] in links and not isinstance(t[2], Literal)}
        if not label_edges:
            raise DatasetError(f"no <{task.source_node_type}> -> <{task.destination_node_type}> links in "
                               "KG'; set LinkPredicate", source=task.source_node_type)

    kept = [t for t in triples if t not in label_edges]
    literal_nodes = literal_handling == LiteralHandling.nodes
    if not literal_nodes:
        kept = [t for t in kept if not isinstance(t[2], Literal)]
    type_of, nodes, multi_typed = _resolve_types(kept, {target_iri}, untyped_handling, literal_nodes)

    # names and ids
    type_labels = sorted(set(type_of.values()))
    synthetic = {CLASS_TYPE, UNTYPED_TYPE} | {t for t in type_labels if t.startswith("Literal_")}
    type_names = assign_names([t for t in type_labels if t not in synthetic], reserved=synthetic)
    type_names.update({t: t for t in synthetic if t in type_labels})

    members: dict[str, list[Node]] = defaultdict(list)
    for key, label in type_of.items():
        members[type_names[label]].append(nodes[key])
    node_maps: dict[str, list[str]] = {}
    id_of: dict[str, tuple[str, int]] = {}
    for name in sorted(members):
        ordered = sorted(members[name], key=term_to_nt)
        node_maps[name] = [node_key(term) for term in ordered]
        for index, key in enumerate(node_maps[name]):
            id_of[key] = (name, index)

    predicates = sorted({str(p) for _, p, _ in kept if p != RDF.type})
    edge_names = assign_names(predicates, reserved={TYPE_EDGE})
    relations: dict[str, list] = defaultdict(list)
    for subject, predicate, obj in kept:
        name = TYPE_EDGE if predicate == RDF.type else edge_names[str(predicate)]
        src_type, src_id = id_of[node_key(subject)]
        dst_type, dst_id = id_of[node_key(obj)]
        relations[name].append((src_type, src_id, dst_type, dst_id))
    relations = {name: sorted(rows) for name, rows in sorted(relations.items())}

    # labels
    target_name = type_names[target_iri]
    labels: list[tuple[int, int]] = []
    label_dict: list[str] = []
    if task.task_type == TaskType.NodeClassifier:
        chosen: dict[int, str] = {}
        for subject, _, obj in label_edges:
            if subject in targets:
                target_id = id_of[node_key(subject)][1]
                value = node_key(obj)
                if target_id in chosen and chosen[target_id] != value:
                    logger.warning("%s has several labels; keeping the smallest", term_to_nt(subject))
                chosen[target_id] = min(value, chosen.get(target_id, value))
        label_dict = sorted(set(chosen.values()))
        label_index = {value: i for i, value in enumerate(label_dict)}
        labels = sorted((tid, label_index[value]) for tid, value in chosen.items())
        split_ids = sorted(chosen)
    elif task.task_type == TaskType.LinkPredictor:
        destinations = {node_key(o) for _, _, o in label_edges}
        destinations |= {node_key(t) for t in _targets_of(triples, task.destination_node_type)}
        label_dict = sorted(destinations)
        label_index = {value: i for i, value in enumerate(label_dict)}
        labels = sorted({(id_of[node_key(s)][1], label_index[node_key(o)]) for s, _, o in label_edges})
        split_ids = sorted({source for source, _ in labels})
    else:
        split_ids = list(range(len(node_maps[target_name])))

    if split == SplitStrategy.community:
        if not task.community_edge:
            raise DatasetError("community split needs CommunityEdge")
        by_id = {i: key_to_term(node_maps[target_name][i]) for i in split_ids}
        splits = split_community(by_id, task.community_edge, kept, ratios)
    else:
        splits = split_random(split_ids, ratios, seed)

    stats = DatasetStats(
        n_nodes={name: len(keys) for name, keys in node_maps.items()},
        n_edges={name: len(rows) for name, rows in relations.items()},
        n_node_types=len(node_maps),
        n_edge_types=len(relations),
        n_labels=len(labels),
        n_classes=len(label_dict),
        total_triples=len(triples),
        total_nodes=sum(len(keys) for keys in node_maps.values()),
        total_edges=sum(len(rows) for rows in relations.values()),
    )
    manifest = {
        "format_version": PACKAGE_FORMAT_VERSION,
        "task_type": task.task_type.value,
        "target_type": target_name,
        "target_type_iri": target_iri,
        "label_predicate": task.label_predicate,
        "source_node_type": task.source_node_type,
        "destination_node_type": task.destination_node_type,
        "link_predicates": link_predicates,
        "kg_digest": kg_digest(triples),
        "split": {"strategy": split.value, "seed": seed, "ratios": ratios,
                  "community_edge": task.community_edge},
        "literal_handling": LiteralHandling(literal_handling).value,
        "untyped_handling": UntypedHandling(untyped_handling).value,
        "excluded_predicates": sorted(str(p) for p in excluded),
        "type_resolution": "target type first, then lexicographically smallest rdf:type",
        "multi_typed_nodes": multi_typed,
    }
    node_type_iris = {name: label for label, name in type_names.items()}
    edge_type_iris = {name: iri for iri, name in edge_names.items() if name in relations}
    if TYPE_EDGE in relations:
        edge_type_iris[TYPE_EDGE] = str(RDF.type)
    logger.info("transformed %d triples: %d node types, %d edge types, %d labels",
                len(triples), stats.n_node_types, stats.n_edge_types, stats.n_labels)
    return DatasetPackage(manifest=manifest, node_maps=node_maps, relations=relations, labels=labels,
                          label_dict=label_dict, splits=splits, stats=stats,
                          node_types=dict(sorted(node_type_iris.items())),
                          edge_types=dict(sorted(edge_type_iris.items())))


def decode(pkg: DatasetPackage) -> set[Triple]:
    """Triples encoded by the package's node maps and relations."""
    triples = set()
    for name, rows in pkg.relations.items():
        predicate = URIRef(pkg.edge_types[name])
        for src_type, src_id, dst_type, dst_id in rows:
            triples.add((key_to_term(pkg.node_maps[src_type][src_id]), predicate,
                         key_to_term(pkg.node_maps[dst_type][dst_id])))
    return triples


def recompute_stats(pkg: DatasetPackage) -> DatasetStats:
    """Statistics derived from package contents alone."""
    return DatasetStats(
        n_nodes={name: len(keys) for name, keys in pkg.node_maps.items()},
        n_edges={name: len(rows) for name, rows in pkg.relations.items()},
        n_node_types=len(pkg.node_maps),
        n_edge_types=len(pkg.relations),
        n_labels=len(pkg.labels),
        n_classes=len(pkg.label_dict),
        total_triples=pkg.stats.total_triples,
        total_nodes=sum(len(keys) for keys in pkg.node_maps.values()),
        total_edges=sum(len(rows) for rows in pkg.relations.values()),
    )


# PACKAGE ARCHIVE
def _csv_bytes(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def _read_csv(data: bytes) -> pd.DataFrame:
    return pd.read_csv(io.BytesIO(data), dtype=str, keep_default_na=False)


def package_files(pkg: DatasetPackage) -> dict[str, bytes]:
    """Archive members except the manifest."""
    files = {
        "stats.json": json.dumps(pkg.stats.model_dump(), indent=2, sort_keys=True).encode("utf-8"),
        "labels.csv": _csv_bytes(pd.DataFrame(pkg.labels, columns=["target_id", "label_id"])),
        "label_dict.csv": _csv_bytes(pd.DataFrame(list(enumerate(pkg.label_dict)), columns=["label_id", "iri"])),
    }
    for name, keys in pkg.node_maps.items():
        files[f"nodes/{name}.csv"] = _csv_bytes(pd.DataFrame(list(enumerate(keys)), columns=["id", "iri"]))
    for name, rows in pkg.relations.items():
        files[f"relations/{name}.csv"] = _csv_bytes(
            pd.DataFrame(rows, columns=["src_type", "src_id", "dst_type", "dst_id"]))
    for name in SPLIT_NAMES:
        files[f"split/{name}.csv"] = _csv_bytes(pd.DataFrame({"id": pkg.splits[name]}, dtype="int64"))
    return files


def package_write(pkg: DatasetPackage, path) -> Path:
    """Write a byte-stable zip: sorted members, fixed timestamps, sha256 checksums in the manifest."""
    files = package_files(pkg)
    manifest = dict(pkg.manifest)
    manifest["node_types"] = pkg.node_types
    manifest["edge_types"] = pkg.edge_types
    manifest["checksums"] = {name: hashlib.sha256(data).hexdigest() for name, data in sorted(files.items())}
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name in sorted(files):
            info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            archive.writestr(info, files[name])
    logger.info("wrote dataset package %s (%d files)", path, len(files))
    return path


def package_read(path) -> DatasetPackage:
    """
    Read and verify a package.

    Raises:
        PackageError: unreadable archive, unknown format version, missing
            member or checksum mismatch.
    """
    try:
        with zipfile.ZipFile(path) as archive:
            contents = {name: archive.read(name) for name in archive.namelist()}
    except (OSError, zipfile.BadZipFile) as exc:
        raise PackageError(f"cannot read dataset package {path}: {exc}", path=str(path)) from exc
    if "manifest.json" not in contents:
        raise PackageError(f"{path} has no manifest.json", path=str(path))
    manifest = json.loads(contents["manifest.json"])
    if manifest.get("format_version") != PACKAGE_FORMAT_VERSION:
        raise PackageError(f"unsupported package format {manifest.get('format_version')!r}",
                           expected=PACKAGE_FORMAT_VERSION, path=str(path))
    checksums = manifest.pop("checksums", {})
    for name, digest in checksums.items():
        if name not in contents:
            raise PackageError(f"package member {name} is missing", member=name, path=str(path))
        if hashlib.sha256(contents[name]).hexdigest() != digest:
            raise PackageError(f"checksum mismatch for {name}", member=name, path=str(path))
    unlisted = set(contents) - set(checksums) - {"manifest.json"}
    if unlisted:
        raise PackageError(f"package members without checksum: {sorted(unlisted)}", path=str(path))

    node_types = manifest.pop("node_types", {})
    edge_types = manifest.pop("edge_types", {})
    node_maps, relations = {}, {}
    for name, data in sorted(contents.items()):
        if name.startswith("nodes/"):
            frame = _read_csv(data)
            node_maps[name[len("nodes/"):-len(".csv")]] = frame["iri"].tolist()
        elif name.startswith("relations/"):
            frame = _read_csv(data)
            relations[name[len("relations/"):-len(".csv")]] = list(zip(
                frame["src_type"].tolist(), frame["src_id"].astype(int).tolist(),
                frame["dst_type"].tolist(), frame["dst_id"].astype(int).tolist()))
    labels_frame = _read_csv(contents["labels.csv"])
    labels = list(zip(labels_frame["target_id"].astype(int).tolist(), labels_frame["label_id"].astype(int).tolist()))
    label_dict = _read_csv(contents["label_dict.csv"])["iri"].tolist()
    splits = {name: _read_csv(contents[f"split/{name}.csv"])["id"].astype(int).tolist() for name in SPLIT_NAMES}
    stats = DatasetStats(**json.loads(contents["stats.json"]))
    return DatasetPackage(manifest=manifest, node_maps=node_maps, relations=relations, labels=labels,
                          label_dict=label_dict, splits=splits, stats=stats,
                          node_types=node_types, edge_types=edge_types)


def package_digest(path) -> str:
    """sha256 of the archive bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
