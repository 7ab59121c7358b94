"""End-to-end orchestration of the five pipeline modes.

Stage sets per mode:

* ``plain``   - direct generation, no evidence.
* ``rag``     - retrieval-grounded generation.
* ``rag_kg``  - retrieval + graph construction + path-structured items, no critic.
* ``rag_val`` - retrieval-grounded generation + critic, no graph.
* ``knight``  - the full pipeline: graph, paths, critic.

The token ledger's task tags are the observable contract: a run logs exactly
the tags of its mode's stage set (plus ``validate`` when forced).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from .adapters import AdapterSuite
from .builder import BuildReport, RejectedCandidate, build_kg
from .config import PipelineConfig
from .errors import ConfigError, GenerationRejected
from .fixture_world import FixtureWorld, load_world
from .gateway import ChatGateway, ChatRequest, MockChatBackend, OpenAiCompatBackend
from .graph import KnowledgeGraph, Topic, normalize_name
from .metrics import DatasetStats, compute_dataset_stats
from .prompts import MCQ_FORWARD_SYSTEM, direct_mcq_user
from .qgen import McqItem, generate_mcq, parse_mcq_output, sample_paths
from .retrieval import FixtureWikiSource, NetworkWikiSource, WikiSource, retrieve_evidence
from .validation import validate_item

log = logging.getLogger(__name__)

MODE_TASK_TAGS: dict[str, frozenset[str]] = {
    "plain": frozenset({"mcq_forward"}),
    "rag": frozenset({"title_check", "mcq_forward"}),
    "rag_kg": frozenset({"title_check", "gloss", "triples", "mcq_forward", "mcq_reverse"}),
    "rag_val": frozenset({"title_check", "mcq_forward", "validate"}),
    "knight": frozenset(
        {"title_check", "gloss", "triples", "mcq_forward", "mcq_reverse", "validate"}
    ),
}


def mode_uses_kg(mode: str) -> bool:
    return mode in ("rag_kg", "knight")


def mode_uses_retrieval(mode: str) -> bool:
    return mode != "plain"


def mode_uses_validator(mode: str) -> bool:
    return mode in ("rag_val", "knight")


@dataclass
class Services:
    """The wired backends one run shares."""

    gateway: ChatGateway
    source: WikiSource
    adapters: AdapterSuite
    world: FixtureWorld


def build_services(config: PipelineConfig) -> Services:
    world = load_world(config.fixture_dir or None)
    if config.backend == "mock":
        backend = MockChatBackend(world, rng_seed=config.rng_seed)
        source: WikiSource = FixtureWikiSource(world)
        adapters = AdapterSuite.fixture_suite(world, rng_seed=config.rng_seed)
    else:
        backend = OpenAiCompatBackend(
            base_url=config.openai_base_url,
            api_key=config.openai_api_key,
            model=config.openai_model,
            retry_attempts=config.retry_attempts,
        )
        source = NetworkWikiSource()
        # The scoring adapters stay fixture-backed unless endpoints are wired
        # in; swapping them is a constructor argument away.
        adapters = AdapterSuite.fixture_suite(world, rng_seed=config.rng_seed)
        log.info("network chat backend active; auxiliary adapters remain fixture-backed")
    gateway = ChatGateway(backend, max_inflight=config.max_inflight)
    return Services(gateway=gateway, source=source, adapters=adapters, world=world)


@dataclass
class PipelineResult:
    topic: str
    mode: str
    items: list[McqItem] = field(default_factory=list)
    kept_items: list[McqItem] = field(default_factory=list)
    graph: KnowledgeGraph | None = None
    build_report: BuildReport | None = None
    rejects: list[RejectedCandidate] = field(default_factory=list)
    stats: DatasetStats | None = None
    metric_rows: list[dict] = field(default_factory=list)
    attempts: int = 0
    generation_rejected: int = 0
    duplicates_dropped: int = 0
    validation_dropped: int = 0

    def tokens_per_kept_item(self, gateway: ChatGateway) -> float:
        prompt, completion = gateway.ledger.grand_total()
        if not self.kept_items:
            return 0.0
        return (prompt + completion) / len(self.kept_items)


def _slug(text: str) -> str:
    return normalize_name(text).replace(" ", "_") or "topic"


def _question_fingerprint(question: str) -> str:
    return " ".join(question.lower().split())


def _generate_path_items(
    topic: Topic,
    graph: KnowledgeGraph,
    config: PipelineConfig,
    services: Services,
    num_q: int,
    result: PipelineResult,
) -> list[McqItem]:
    pairs = sample_paths(graph, graph.seed_id, config.d_max, num_q, config.rng_seed)
    if not pairs:
        raise ConfigError(
            f"graph has no {config.d_max}-hop paths from the seed; "
            "increase --depth or loosen branching"
        )
    items: list[McqItem] = []
    seen_questions: set[str] = set()
    occurrences: Counter = Counter()
    slug = _slug(topic.name)
    for attempt, (path, orientation) in enumerate(pairs):
        key = (tuple(path.node_ids), orientation)
        variant = occurrences[key]
        occurrences[key] += 1
        result.attempts += 1
        item_id = f"{slug}-L{config.d_max}-{orientation[:3]}-{attempt:04d}"
        try:
            item = generate_mcq(
                services.gateway,
                path,
                orientation,
                topic.name,
                graph,
                config,
                item_id=item_id,
                variant=variant,
            )
        except GenerationRejected as exc:
            result.generation_rejected += 1
            log.warning("generation rejected (%s): %s", item_id, exc)
            continue
        fingerprint = _question_fingerprint(item.question)
        if fingerprint in seen_questions:
            result.duplicates_dropped += 1
            continue
        seen_questions.add(fingerprint)
        items.append(item)
    return items


def _generate_direct_items(
    topic: Topic,
    config: PipelineConfig,
    services: Services,
    num_q: int,
    result: PipelineResult,
    with_evidence: bool,
) -> list[McqItem]:
    passages: list[str] = []
    passage_ids: list[str] = []
    fallback = True
    if with_evidence:
        retrieval = retrieve_evidence(
            topic.name,
            services.source,
            services.gateway,
            config,
            context_hint=topic.optional_prompt or "general knowledge",
        )
        passages = retrieval.texts()
        passage_ids = retrieval.ids()
        fallback = retrieval.fallback
    source_context = (
        "Evidence passages:\n" + "\n\n".join(passages)
        if passages
        else "No source information provided."
    )
    items: list[McqItem] = []
    seen_questions: set[str] = set()
    slug = _slug(topic.name)
    for attempt in range(num_q):
        result.attempts += 1
        item_id = f"{slug}-L{config.d_max}-dir-{attempt:04d}"
        response = services.gateway.complete(
            ChatRequest(
                system_prompt=MCQ_FORWARD_SYSTEM,
                user_prompt=direct_mcq_user(topic.name, config.d_max, passages, variant=attempt),
                temperature=config.temp_desc,
                task_tag="mcq_forward",
            )
        )
        try:
            question, options, answer_key = parse_mcq_output(response.text)
        except GenerationRejected as exc:
            result.generation_rejected += 1
            log.warning("generation rejected (%s): %s", item_id, exc)
            continue
        fingerprint = _question_fingerprint(question)
        if fingerprint in seen_questions:
            result.duplicates_dropped += 1
            continue
        seen_questions.add(fingerprint)
        items.append(
            McqItem(
                id=item_id,
                question=question,
                options=options,
                answer_key=answer_key,
                topic=topic.name,
                level=config.d_max,
                orientation="forward",
                path=None,
                source_context=source_context,
                provenance={
                    "seed_node": _slug(topic.name),
                    "passage_ids": passage_ids,
                    "mixture_weights": [],
                    "parametric_fallback": fallback,
                },
            )
        )
    return items


def run_pipeline(
    topic: Topic,
    config: PipelineConfig,
    num_q: int,
    services: Services | None = None,
    validate_flag: bool | None = None,
    graph: KnowledgeGraph | None = None,
) -> tuple[PipelineResult, Services]:
    """Execute the configured mode end to end. A pre-built ``graph`` skips
    construction (snapshot reuse). ``validate_flag`` overrides the mode's
    critic stage: True forces it on, False suppresses it, None leaves the
    mode's own stage set in charge."""
    if num_q < 1:
        raise ConfigError("num_q must be >= 1")
    services = services or build_services(config)
    mode = config.pipeline_mode
    result = PipelineResult(topic=topic.name, mode=mode)

    if mode_uses_kg(mode):
        if graph is None:
            graph, report = build_kg(
                topic, config, services.gateway, services.source, services.adapters,
                rejects=result.rejects,
            )
            result.build_report = report
        result.graph = graph
        result.items = _generate_path_items(topic, graph, config, services, num_q, result)
    else:
        result.items = _generate_direct_items(
            topic, config, services, num_q, result, with_evidence=mode_uses_retrieval(mode)
        )

    run_critic = mode_uses_validator(mode) if validate_flag is None else validate_flag
    if run_critic:
        kept: list[McqItem] = []
        for index, item in enumerate(result.items):
            item.flags = validate_item(services.gateway, item, index, config)
            if item.flags.kept:
                kept.append(item)
            else:
                result.validation_dropped += 1
        result.kept_items = kept
    else:
        result.kept_items = list(result.items)

    stats, rows = compute_dataset_stats(result.kept_items, services.adapters, topic.name)
    result.stats = stats
    result.metric_rows = rows
    return result, services
