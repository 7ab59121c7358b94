"""Persistence: canonical JSON graph snapshots, JSONL datasets, and the
memory/Bolt graph stores.

All JSON is written with sorted keys and no insignificant whitespace so
identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import logging
import os
from collections import deque
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .builder import BuildReport
from .errors import ConfigError, JsonlError, SnapshotFormatError, SnapshotVersionError, StoreError
from .graph import Edge, KnowledgeGraph, Node, PathSample
from .qgen import McqItem
from .validation import ValidationReport

log = logging.getLogger(__name__)

SNAPSHOT_SCHEMA_VERSION = 1


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# -- snapshots ----------------------------------------------------------------


def snapshot_document(
    graph: KnowledgeGraph,
    topic: str = "",
    config_echo: Mapping[str, Any] | None = None,
    report: BuildReport | None = None,
) -> dict:
    """Build the snapshot payload. The build report's wall time is excluded
    so repeated runs of a deterministic pipeline stay byte-identical."""
    return {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "topic": topic,
        "config": dict(config_echo or {}),
        "seed_id": graph.seed_id,
        "nodes": [
            {
                "id": n.id,
                "name": n.name,
                "depth": n.depth,
                "gloss": n.gloss,
                "provenance": list(n.provenance),
                "parametric_fallback": n.parametric_fallback,
                "retrieval_weights": list(n.retrieval_weights),
                "gamma_failed": n.gamma_failed,
            }
            for n in graph.sorted_nodes()
        ],
        "edges": [
            {"head": e.head, "relation": e.relation, "tail": e.tail}
            for e in graph.sorted_edges()
        ],
        "report": report.to_dict(include_wall_time=False) if report else None,
    }


def save_snapshot(
    graph: KnowledgeGraph,
    path: str | Path,
    topic: str = "",
    config_echo: Mapping[str, Any] | None = None,
    report: BuildReport | None = None,
) -> None:
    doc = snapshot_document(graph, topic, config_echo, report)
    Path(path).write_text(canonical_json(doc) + "\n", encoding="utf-8")


def load_snapshot(path: str | Path) -> KnowledgeGraph:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read snapshot {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"snapshot {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SnapshotFormatError("snapshot root must be an object")
    version = doc.get("schema_version")
    if version != SNAPSHOT_SCHEMA_VERSION:
        raise SnapshotVersionError(f"unsupported snapshot version {version!r}")
    try:
        nodes = doc["nodes"]
        edges = doc["edges"]
        seed_id = doc["seed_id"]
    except KeyError as exc:
        raise SnapshotFormatError(f"snapshot missing field {exc}") from exc

    by_id = {n["id"]: n for n in nodes}
    if seed_id not in by_id:
        raise SnapshotFormatError(f"seed {seed_id!r} not among nodes")
    graph = KnowledgeGraph(by_id[seed_id]["name"])
    try:
        for raw in nodes:
            if raw["id"] == seed_id:
                node = graph.nodes[seed_id]
            else:
                node = graph.add_node(raw["name"], depth=int(raw["depth"]))
            node.gloss = raw.get("gloss")
            node.provenance = list(raw.get("provenance", []))
            node.parametric_fallback = bool(raw.get("parametric_fallback", False))
            node.retrieval_weights = [float(w) for w in raw.get("retrieval_weights", [])]
            node.gamma_failed = bool(raw.get("gamma_failed", False))
        for raw in edges:
            graph.add_edge(raw["head"], raw["relation"], raw["tail"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotFormatError(f"snapshot node/edge malformed: {exc}") from exc
    return graph


# -- JSONL datasets -----------------------------------------------------------


def write_jsonl(records: Iterable[Mapping[str, Any]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(f"malformed JSON ({exc.msg})", line_number=lineno) from exc
            if not isinstance(doc, dict):
                raise JsonlError("record is not an object", line_number=lineno)
            out.append(doc)
    return out


def item_to_record(item: McqItem) -> dict:
    path_triples: list[list[str]] = []
    if item.path is not None:
        for head, relation, tail in zip(
            item.path.node_ids, item.path.relations, item.path.node_ids[1:]
        ):
            path_triples.append([head, relation, tail])
    return {
        "id": item.id,
        "topic": item.topic,
        "level": item.level,
        "orientation": item.orientation,
        "path": path_triples,
        "question": item.question,
        "options": dict(item.options),
        "answer_key": item.answer_key,
        "source_context": item.source_context,
        "validation": item.flags.to_dict() if item.flags is not None else None,
        "provenance": dict(item.provenance),
    }


def record_to_item(record: Mapping[str, Any]) -> McqItem:
    path = None
    triples = record.get("path") or []
    if triples:
        node_ids = [triples[0][0]] + [t[2] for t in triples]
        relations = [t[1] for t in triples]
        path = PathSample(node_ids, relations, record.get("orientation", "forward"))
    flags = None
    if record.get("validation") is not None:
        flags = ValidationReport.from_dict(record["validation"])
    return McqItem(
        id=record["id"],
        question=record["question"],
        options=dict(record["options"]),
        answer_key=record["answer_key"],
        topic=record.get("topic", ""),
        level=int(record["level"]),
        orientation=record.get("orientation", "forward"),
        path=path,
        source_context=record.get("source_context", ""),
        flags=flags,
        provenance=dict(record.get("provenance", {})),
    )


# -- graph stores -------------------------------------------------------------


class GraphStore(Protocol):
    def open(self) -> None: ...

    def close(self) -> None: ...

    def create_node(self, node: Node) -> None: ...

    def create_edge(self, edge: Edge) -> None: ...

    def query_path(self, start_id: str, length: int) -> list[PathSample]: ...


class MemoryGraphStore:
    """Default in-process store; mirrors the graph it is fed."""

    def __init__(self) -> None:
        self.nodes: dict[str, dict] = {}
        self.edges: set[tuple[str, str, str]] = set()

    def open(self) -> None:
        return None

    def close(self) -> None:
        return None

    def create_node(self, node: Node) -> None:
        self.nodes[node.id] = {
            "id": node.id,
            "name": node.name,
            "depth": node.depth,
            "gloss": node.gloss,
        }

    def create_edge(self, edge: Edge) -> None:
        if edge.head not in self.nodes or edge.tail not in self.nodes:
            raise StoreError(f"edge endpoints missing for {edge}")
        self.edges.add((edge.head, edge.relation, edge.tail))

    def all_nodes(self) -> list[dict]:
        return [self.nodes[k] for k in sorted(self.nodes)]

    def all_edges(self) -> list[tuple[str, str, str]]:
        return sorted(self.edges)

    def query_path(self, start_id: str, length: int) -> list[PathSample]:
        adj: dict[str, list[tuple[str, str]]] = {nid: [] for nid in self.nodes}
        for head, relation, tail in self.edges:
            adj[head].append((tail, relation))
        for nid in adj:
            adj[nid].sort()
        out: list[PathSample] = []

        def walk(nodes: list[str], relations: list[str]) -> None:
            if len(relations) == length:
                out.append(PathSample(list(nodes), list(relations)))
                return
            for tail, relation in adj.get(nodes[-1], []):
                if tail in nodes:
                    continue
                walk(nodes + [tail], relations + [relation])

        if start_id in self.nodes and length >= 1:
            walk([start_id], [])
        out.sort(key=lambda p: (p.node_ids, p.relations))
        return out


class BoltGraphStore:
    """Neo4j-backed store speaking parameterized Cypher over Bolt.

    Statement construction is separated from execution so the Cypher surface
    is testable without a server; a live run needs the optional ``neo4j``
    driver and a reachable instance.
    """

    NODE_STATEMENT = (
        "MERGE (n:Topic {id: $id}) "
        "SET n.name = $name, n.depth = $depth, n.gloss = $gloss"
    )
    EDGE_STATEMENT = (
        "MATCH (h:Topic {id: $head}), (t:Topic {id: $tail}) "
        "MERGE (h)-[r:RELATES {label: $label}]->(t)"
    )
    PATH_STATEMENT = (
        "MATCH p = (s:Topic {id: $start})-[r:RELATES*{length}]->(t:Topic) "
        "RETURN [n IN nodes(p) | n.id] AS node_ids, "
        "[rel IN relationships(p) | rel.label] AS relations"
    )

    def __init__(self, uri: str, user: str, password: str):
        if not uri:
            raise ConfigError("bolt backend requires NEO4J_URI")
        self.uri = uri
        self.user = user
        self.password = password
        self._driver = None

    @classmethod
    def node_statement(cls, node: Node) -> tuple[str, dict]:
        return cls.NODE_STATEMENT, {
            "id": node.id,
            "name": node.name,
            "depth": node.depth,
            "gloss": node.gloss,
        }

    @classmethod
    def edge_statement(cls, edge: Edge) -> tuple[str, dict]:
        return cls.EDGE_STATEMENT, {
            "head": edge.head,
            "tail": edge.tail,
            "label": edge.relation,
        }

    @classmethod
    def path_statement(cls, start_id: str, length: int) -> tuple[str, dict]:
        return cls.PATH_STATEMENT.replace("{length}", str(int(length))), {"start": start_id}

    def open(self) -> None:
        try:
            from neo4j import GraphDatabase
        except ImportError as exc:
            raise StoreError(
                "the bolt backend needs the optional neo4j driver "
                "(pip install 'knight[bolt]')"
            ) from exc
        try:
            self._driver = GraphDatabase.driver(self.uri, auth=(self.user, self.password))
            self._driver.verify_connectivity()
        except Exception as exc:
            raise StoreError(f"cannot open bolt store at {self.uri}: {exc}") from exc

    def close(self) -> None:
        if self._driver is not None:
            self._driver.close()
            self._driver = None

    def _run(self, statement: str, params: dict) -> list:
        if self._driver is None:
            raise StoreError("store is not open")
        with self._driver.session() as session:
            return list(session.run(statement, **params))

    def create_node(self, node: Node) -> None:
        self._run(*self.node_statement(node))

    def create_edge(self, edge: Edge) -> None:
        self._run(*self.edge_statement(edge))

    def query_path(self, start_id: str, length: int) -> list[PathSample]:
        rows = self._run(*self.path_statement(start_id, length))
        paths = [PathSample(list(r["node_ids"]), list(r["relations"])) for r in rows]
        paths.sort(key=lambda p: (p.node_ids, p.relations))
        return paths


def graph_store(backend: str = "memory", env: Mapping[str, str] | None = None) -> GraphStore:
    """Open a store handle; bolt reads NEO4J_URI/NEO4J_USER/NEO4J_PASS."""
    env = os.environ if env is None else env
    if backend == "memory":
        store = MemoryGraphStore()
        store.open()
        return store
    if backend == "bolt":
        uri = env.get("NEO4J_URI", "")
        if not uri:
            raise ConfigError("bolt backend requires NEO4J_URI to be set")
        store = BoltGraphStore(uri, env.get("NEO4J_USER", ""), env.get("NEO4J_PASS", ""))
        store.open()
        return store
    raise ConfigError(f"unknown graph backend {backend!r}")


def mirror_graph(store: GraphStore, graph: KnowledgeGraph) -> None:
    """Write every node then every edge of ``graph`` into ``store``."""
    for node in graph.sorted_nodes():
        store.create_node(node)
    for edge in graph.sorted_edges():
        store.create_edge(edge)


def export_graph(store: "MemoryGraphStore", seed_id: str | None = None) -> KnowledgeGraph:
    """Rebuild a KnowledgeGraph from a memory store's contents."""
    nodes = store.all_nodes()
    if not nodes:
        raise StoreError("store holds no nodes")
    if seed_id is None:
        zero_depth = [n for n in nodes if n["depth"] == 0]
        if not zero_depth:
            raise StoreError("no depth-0 node to use as seed")
        seed_id = zero_depth[0]["id"]
    seed = next(n for n in nodes if n["id"] == seed_id)
    graph = KnowledgeGraph(seed["name"])
    for raw in nodes:
        if raw["id"] == seed_id:
            graph.nodes[graph.seed_id].gloss = raw.get("gloss")
            continue
        node = graph.add_node(raw["name"], depth=raw["depth"])
        node.gloss = raw.get("gloss")
    for head, relation, tail in store.all_edges():
        graph.add_edge(head, relation, tail)
    return graph
