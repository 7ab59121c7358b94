"""Gloss generation from evidence, the traceability gate, and triple
extraction with near-duplicate removal."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .config import PipelineConfig
from .errors import ExtractionError
from .gateway import ChatGateway, ChatRequest
from .graph import Triple
from .prompts import GLOSS_HEADINGS, GLOSS_SYSTEM, TRIPLES_SYSTEM, gloss_user, triples_user
from .retrieval import RetrievalResult, mixture_weights

log = logging.getLogger(__name__)

__all__ = [
    "Gloss",
    "Triple",
    "generate_gloss",
    "overlap",
    "gate_gloss",
    "extract_triples",
    "dedup_triples",
    "levenshtein",
]

# Small fixed stopword list for content-token overlap; intentionally minimal
# so the measure stays cheap and reproducible.
STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in into is it its of on
    or that the their this to was were which with""".split()
)


@dataclass
class Gloss:
    term: str
    text: str
    sections_present: int
    supported_by: list[str] = field(default_factory=list)
    parametric_fallback: bool = False
    mixture: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.parametric_fallback == bool(self.supported_by):
            raise ValueError("exactly one of parametric_fallback / supported_by must hold")


def count_sections(text: str) -> int:
    return sum(1 for heading in GLOSS_HEADINGS if heading in text)


def generate_gloss(
    gateway: ChatGateway,
    term: str,
    retrieval: RetrievalResult,
    config: PipelineConfig,
    parent_term: str | None = None,
) -> Gloss:
    """Produce the structured description for ``term``. Evidence passages are
    injected in mixture-weight order; an empty retrieval falls back to the
    model's parametric knowledge and is flagged as such."""
    if retrieval.fallback:
        passages: list[str] = []
        weights: list[float] = []
    else:
        weights = mixture_weights(retrieval.scores())
        order = sorted(range(len(weights)), key=lambda i: (-weights[i], retrieval.ids()[i]))
        passages = [retrieval.texts()[i] for i in order]
        weights = [weights[i] for i in order]

    response = gateway.complete(
        ChatRequest(
            system_prompt=GLOSS_SYSTEM,
            user_prompt=gloss_user(term, passages, parent_term),
            temperature=config.temp_desc,
            task_tag="gloss",
        )
    )
    sections = count_sections(response.text)
    if sections < 4:
        log.warning("gloss for %r has only %d/8 sections", term, sections)
    return Gloss(
        term=term,
        text=response.text,
        sections_present=sections,
        supported_by=[] if retrieval.fallback else retrieval.ids(),
        parametric_fallback=retrieval.fallback,
        mixture=weights,
    )


def content_tokens(text: str) -> set[str]:
    return {t for t in re.findall(r"[a-z0-9]+", text.lower()) if t not in STOPWORDS}


def overlap(passage_text: str, gloss_text: str) -> float:
    """Fraction of the gloss's content tokens that appear in the passage."""
    gloss_tokens = content_tokens(gloss_text)
    if not gloss_tokens:
        return 0.0
    return len(gloss_tokens & content_tokens(passage_text)) / len(gloss_tokens)


def gate_gloss(gloss: Gloss, passages: list[str], eta: float = 0.35) -> bool:
    """Traceability gate: some passage must cover at least ``eta`` of the
    gloss. Parametric-fallback glosses have no evidence to trace and pass."""
    if gloss.parametric_fallback:
        return True
    return any(overlap(p, gloss.text) >= eta for p in passages)


_RELATION_CLEAN = re.compile(r"[^a-z0-9]+")


def _normalize_relation(raw: str) -> str:
    cleaned = _RELATION_CLEAN.sub("_", raw.strip().lower()).strip("_")
    return cleaned


def _first_json_object(text: str) -> str:
    """Extract the first balanced top-level JSON object from free text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    raise ExtractionError("no balanced JSON object in response")


def parse_triples_json(text: str) -> list[Triple]:
    """Strict parse of the {"triplets": [...]} payload; entries with missing
    or empty fields are dropped, relations are normalized to
    lowercase_underscore."""
    try:
        doc = json.loads(_first_json_object(text))
    except json.JSONDecodeError as exc:
        raise ExtractionError(f"unparseable JSON payload: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("triplets"), list):
        raise ExtractionError('payload must be an object with a "triplets" list')
    out: list[Triple] = []
    for raw in doc["triplets"]:
        if not isinstance(raw, dict):
            continue
        head = str(raw.get("head") or "").strip()
        tail = str(raw.get("tail") or "").strip()
        relation = _normalize_relation(str(raw.get("relation") or ""))
        if not (head and relation and tail):
            continue
        out.append(Triple(head=head, relation=relation, tail=tail))
    return out


def extract_triples(gateway: ChatGateway, gloss: Gloss, config: PipelineConfig) -> list[Triple]:
    if not gloss.text.strip():
        raise ExtractionError("gloss text is empty")
    response = gateway.complete(
        ChatRequest(
            system_prompt=TRIPLES_SYSTEM,
            user_prompt=triples_user(gloss.text),
            temperature=config.temp_triples,
            task_tag="triples",
            max_tokens=config.max_tokens_triples,
        )
    )
    return parse_triples_json(response.text)


def levenshtein(a: str, b: str) -> int:
    """Edit distance via the two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def dedup_triples(triples: list[Triple], lambda_max: float) -> list[Triple]:
    """Drop each triple whose serialized form sits within ``lambda_max``
    normalized edit distance of an earlier kept one (input order wins)."""
    if not 0.0 <= lambda_max <= 1.0:
        raise ValueError(f"lambda_max {lambda_max} outside [0, 1]")
    kept: list[Triple] = []
    for candidate in triples:
        ck = candidate.key()
        if any(normalized_edit_distance(ck, existing.key()) <= lambda_max for existing in kept):
            continue
        kept.append(candidate)
    return kept
