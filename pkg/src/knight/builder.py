"""Breadth-first, depth-bounded graph construction combining retrieval,
gloss synthesis, triple extraction, and curation.

Expansion is level-synchronous: the expensive per-node stage (retrieve,
gloss, extract, dedup) is pure given the backends and may fan out across
threads, while graph mutations are applied serially in queue order, so the
result is identical to a sequential FIFO run.
"""

from __future__ import annotations

import logging
import time
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .adapters import AdapterSuite
from .config import PipelineConfig
from .curation import curate
from .errors import (
    AmbiguousTitleError,
    ExtractionError,
    GatewayError,
    PageNotFoundError,
    RetrievalError,
)
from .gateway import ChatGateway
from .graph import KnowledgeGraph, Topic, Triple, add_curated, normalize_name
from .retrieval import RetrievalResult, WikiSource, retrieve_evidence
from .synthesis import Gloss, dedup_triples, extract_triples, gate_gloss, generate_gloss

log = logging.getLogger(__name__)


@dataclass
class BuildReport:
    nodes_added: int = 0
    edges_added: int = 0
    glosses_rejected_by_gamma: int = 0
    triples_deduped: int = 0
    curation_prune_rate: float = 0.0
    wall_time_seconds: float = 0.0
    per_depth_counts: dict[int, int] = field(default_factory=dict)
    aborted_reason: str | None = None
    candidates_seen: int = 0
    candidates_rejected: int = 0

    def to_dict(self, include_wall_time: bool = True) -> dict:
        out = {
            "nodes_added": self.nodes_added,
            "edges_added": self.edges_added,
            "glosses_rejected_by_gamma": self.glosses_rejected_by_gamma,
            "triples_deduped": self.triples_deduped,
            "curation_prune_rate": self.curation_prune_rate,
            "per_depth_counts": {str(k): v for k, v in sorted(self.per_depth_counts.items())},
            "aborted_reason": self.aborted_reason,
        }
        if include_wall_time:
            out["wall_time_seconds"] = self.wall_time_seconds
        return out


@dataclass
class RejectedCandidate:
    parent: str
    head: str
    relation: str
    tail: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "parent": self.parent,
            "head": self.head,
            "relation": self.relation,
            "tail": self.tail,
            "reason": self.reason,
        }


@dataclass
class _Stage:
    """Pure per-node computation results, safe to produce concurrently."""

    retrieval: RetrievalResult | None = None
    gloss: Gloss | None = None
    triples: list[Triple] = field(default_factory=list)
    dedup_dropped: int = 0
    error: str | None = None


def _node_stage(
    term: str,
    parent_term: str | None,
    topic_hint: str,
    config: PipelineConfig,
    gateway: ChatGateway,
    source: WikiSource,
) -> _Stage:
    stage = _Stage()
    try:
        hint = parent_term or topic_hint
        stage.retrieval = retrieve_evidence(term, source, gateway, config, context_hint=hint)
        stage.gloss = generate_gloss(gateway, term, stage.retrieval, config, parent_term)
        raw = extract_triples(gateway, stage.gloss, config)
        deduped = dedup_triples(raw, config.lambda_max)
        stage.triples = deduped
        stage.dedup_dropped = len(raw) - len(deduped)
    except (RetrievalError, PageNotFoundError, AmbiguousTitleError, ExtractionError) as exc:
        stage.error = f"{type(exc).__name__}: {exc}"
        log.warning("stage for %r degraded to zero children: %s", term, stage.error)
    return stage


def _apply_stage(
    graph: KnowledgeGraph,
    node_id: str,
    stage: _Stage,
    config: PipelineConfig,
    adapters: AdapterSuite,
    report: BuildReport,
    rejects: list[RejectedCandidate] | None,
) -> list[tuple[str, int, str]]:
    """Serial part of one expansion: attach the gloss, curate, mutate the
    graph, and return (child id, depth, parent name) entries to enqueue."""
    node = graph.nodes[node_id]
    if stage.gloss is not None:
        node.gloss = stage.gloss.text
        node.provenance = list(stage.gloss.supported_by)
        node.parametric_fallback = stage.gloss.parametric_fallback
        node.retrieval_weights = list(stage.gloss.mixture)
    report.triples_deduped += stage.dedup_dropped
    if stage.error is not None or stage.gloss is None:
        return []

    passages = stage.retrieval.texts() if stage.retrieval else []
    if not gate_gloss(stage.gloss, passages, config.eta_overlap):
        report.glosses_rejected_by_gamma += 1
        node.gamma_failed = True
        return []

    outcome = curate(graph, node_id, stage.triples, adapters, config)
    report.candidates_seen += len(stage.triples)
    report.candidates_rejected += len(outcome.rejected)
    if rejects is not None:
        for triple, reason in outcome.rejected:
            rejects.append(
                RejectedCandidate(
                    parent=node.name,
                    head=triple.head,
                    relation=triple.relation,
                    tail=triple.tail,
                    reason=reason,
                )
            )

    selected = outcome.accepted[: config.max_branches]
    child_depth = node.depth + 1
    may_add = config.literal_enqueue_gate or child_depth <= config.d_max
    if not selected or not may_add:
        return []

    known_before = set(graph.nodes)
    add_curated(graph, node_id, selected)
    children: list[tuple[str, int, str]] = []
    for triple in selected:
        child_id = normalize_name(triple.tail)
        if child_id in known_before:
            continue
        if child_depth <= config.d_max:
            children.append((child_id, child_depth, node.name))
        known_before.add(child_id)
    return children


def expand_node(
    graph: KnowledgeGraph,
    node_id: str,
    depth: int,
    config: PipelineConfig,
    gateway: ChatGateway,
    source: WikiSource,
    adapters: AdapterSuite,
    report: BuildReport | None = None,
    rejects: list[RejectedCandidate] | None = None,
    parent_term: str | None = None,
    topic_hint: str = "general knowledge",
) -> list[tuple[str, int]]:
    """One full pass of the expansion loop body for a single node."""
    node = graph.nodes.get(node_id)
    if node is None:
        raise ValueError(f"unknown node {node_id!r}")
    if node.depth != depth:
        raise ValueError(f"node {node_id!r} has depth {node.depth}, caller said {depth}")
    report = report if report is not None else BuildReport()
    stage = _node_stage(node.name, parent_term, topic_hint, config, gateway, source)
    enqueued = _apply_stage(graph, node_id, stage, config, adapters, report, rejects)
    return [(child_id, child_depth) for child_id, child_depth, _parent in enqueued]


def build_kg(
    topic: Topic,
    config: PipelineConfig,
    gateway: ChatGateway,
    source: WikiSource,
    adapters: AdapterSuite,
    rejects: list[RejectedCandidate] | None = None,
) -> tuple[KnowledgeGraph, BuildReport]:
    """Construct the depth-bounded graph for ``topic``.

    An unrecoverable backend failure stops expansion and is recorded on the
    report; the partial graph is still returned.
    """
    started = time.perf_counter()
    graph = KnowledgeGraph(topic.name)
    report = BuildReport()
    topic_hint = topic.optional_prompt or "general knowledge"

    queue: deque[tuple[str, int, str | None]] = deque([(graph.seed_id, 0, None)])
    visited: set[str] = set()
    workers = max(1, config.max_inflight)

    try:
        while queue:
            level_depth = queue[0][1]
            batch: list[tuple[str, int, str | None]] = []
            while queue and queue[0][1] == level_depth:
                entry = queue.popleft()
                if entry[0] not in visited:
                    visited.add(entry[0])
                    batch.append(entry)
            if not batch:
                continue

            if workers > 1 and len(batch) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    stages = list(
                        pool.map(
                            lambda e: _node_stage(
                                graph.nodes[e[0]].name, e[2], topic_hint, config, gateway, source
                            ),
                            batch,
                        )
                    )
            else:
                stages = [
                    _node_stage(graph.nodes[e[0]].name, e[2], topic_hint, config, gateway, source)
                    for e in batch
                ]

            for (node_id, _depth, _parent), stage in zip(batch, stages):
                queue.extend(_apply_stage(graph, node_id, stage, config, adapters, report, rejects))
    except GatewayError as exc:
        report.aborted_reason = f"{type(exc).__name__}: {exc}"
        log.error("build aborted: %s", report.aborted_reason)

    report.nodes_added = len(graph.nodes) - 1
    report.edges_added = len(graph.edges)
    report.per_depth_counts = dict(Counter(n.depth for n in graph.nodes.values()))
    if report.candidates_seen:
        report.curation_prune_rate = report.candidates_rejected / report.candidates_seen
    report.wall_time_seconds = time.perf_counter() - started
    graph.check_invariants()
    return graph, report
