"""The curator stage: duplicate and alias filtering, type agreement, NLI
consistency, and content-policy screening over candidate triples."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .adapters import AdapterSuite, EmbeddingAdapter
from .config import PipelineConfig
from .errors import AdapterError, GraphError
from .graph import KnowledgeGraph, Triple, normalize_name

log = logging.getLogger(__name__)

REJECT_REASONS = ("duplicate", "alias", "type_fail", "nli_fail", "policy_fail")


@dataclass
class CurationOutcome:
    accepted: list[Triple] = field(default_factory=list)
    merged: list[tuple[Triple, str]] = field(default_factory=list)
    rejected: list[tuple[Triple, str]] = field(default_factory=list)
    prune_rate: float = 0.0

    def counts(self) -> dict[str, int]:
        return {
            "accepted": len(self.accepted),
            "merged": len(self.merged),
            "rejected": len(self.rejected),
        }


def is_alias(embedding: EmbeddingAdapter, a: str, b: str, tau_alias: float) -> bool:
    """Two names denote the same entity: equal after normalization, or the
    embedding cosine clears the alias threshold. An embedding outage degrades
    to the string check with a warning."""
    if normalize_name(a) == normalize_name(b):
        return True
    try:
        return embedding.cosine(a, b) >= tau_alias
    except AdapterError as exc:
        log.warning("embedding adapter failed (%s); falling back to string equality", exc)
        return False


def content_filter(
    triple: Triple,
    head_gloss: str,
    adapters: AdapterSuite,
    tail_gloss: str | None = None,
    nli_threshold: float = 0.5,
    strict: bool = False,
) -> tuple[bool, str | None]:
    """Run the three content checks in order: ontology type agreement, NLI
    entailment of the verbalized triple against the head gloss, and the
    policy screen. The first failing check names the rejection reason; an
    adapter outage skips its check unless strict mode is on."""
    hypothesis = triple.verbalize()

    try:
        verdict = adapters.ontology.type_ok(triple.relation, triple.tail)
        if verdict is False:
            return False, "type_fail"
    except AdapterError as exc:
        if strict:
            return False, "type_fail"
        log.warning("ontology adapter outage for %s: %s (check skipped)", triple, exc)

    try:
        premise = head_gloss or triple.head
        if adapters.nli.entailment(premise, hypothesis) < nli_threshold:
            return False, "nli_fail"
    except AdapterError as exc:
        if strict:
            return False, "nli_fail"
        log.warning("NLI adapter outage for %s: %s (check skipped)", triple, exc)

    try:
        screened = " ".join(filter(None, (triple.head, triple.relation, triple.tail, tail_gloss)))
        if not adapters.policy.allowed(screened):
            return False, "policy_fail"
    except AdapterError as exc:
        if strict:
            return False, "policy_fail"
        log.warning("policy adapter outage for %s: %s (check skipped)", triple, exc)

    return True, None


def _resolve_head(graph: KnowledgeGraph, parent_id: str, triple: Triple) -> str:
    head_norm = normalize_name(triple.head)
    if head_norm in graph.nodes:
        return head_norm
    return parent_id


def curate(
    graph: KnowledgeGraph,
    parent_id: str,
    raw: list[Triple],
    adapters: AdapterSuite,
    config: PipelineConfig,
) -> CurationOutcome:
    """Filter candidates in order: duplicate name, semantic alias, content
    checks. Duplicates and aliases re-attribute their relation to the
    existing node (no new node, so no relation is lost); survivors are
    returned for the caller to attach via add_curated."""
    if parent_id not in graph.nodes:
        raise GraphError(f"unknown parent {parent_id!r}")
    outcome = CurationOutcome()
    if not raw:
        return outcome

    pending_names: set[str] = set()
    for triple in raw:
        tail_norm = normalize_name(triple.tail)
        head_id = _resolve_head(graph, parent_id, triple)

        existing = graph.nodes.get(tail_norm)
        if existing is not None:
            outcome.rejected.append((triple, "duplicate"))
            graph.add_edge(head_id, triple.relation, existing.id)
            continue
        if tail_norm in pending_names:
            outcome.rejected.append((triple, "duplicate"))
            continue

        alias_target = None
        for node in graph.sorted_nodes():
            if is_alias(adapters.embedding, triple.tail, node.name, config.tau_alias):
                alias_target = node
                break
        if alias_target is not None:
            outcome.merged.append((triple, alias_target.id))
            graph.add_edge(head_id, triple.relation, alias_target.id)
            continue

        head_gloss = graph.nodes[head_id].gloss or ""
        ok, reason = content_filter(
            triple,
            head_gloss,
            adapters,
            nli_threshold=config.nli_threshold,
            strict=config.strict_adapters,
        )
        if not ok:
            outcome.rejected.append((triple, reason or "policy_fail"))
            continue

        outcome.accepted.append(triple)
        pending_names.add(tail_norm)

    outcome.prune_rate = len(outcome.rejected) / len(raw)
    return outcome
