"""Auxiliary scoring adapters: embeddings, NLI, ontology typing, content
policy, grammar checking, and the answer probe.

Each has a deterministic fixture-backed mock and, where a conventional wire
format exists, a thin network client. Pipelines depend only on the
protocols.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence

from .errors import AdapterError
from .fixture_world import FixtureWorld
from .graph import normalize_name

log = logging.getLogger(__name__)


class EmbeddingAdapter(Protocol):
    def cosine(self, a: str, b: str) -> float: ...


class NliAdapter(Protocol):
    def entailment(self, premise: str, hypothesis: str) -> float: ...


class OntologyAdapter(Protocol):
    def type_ok(self, relation: str, tail: str) -> bool | None:
        """True/False when the relation constrains the tail type; None when
        the pair is outside the adapter's knowledge."""
        ...


class PolicyAdapter(Protocol):
    def allowed(self, text: str) -> bool: ...


class GrammarAdapter(Protocol):
    def error_count(self, text: str) -> int: ...


class ProbeAdapter(Protocol):
    def logits(self, question: str, options: dict[str, str], answer_key: str, level: int) -> tuple[float, float, float, float]: ...


# -- fixture-backed mocks ---------------------------------------------------


class FixtureEmbedding:
    def __init__(self, world: FixtureWorld):
        self.world = world

    def cosine(self, a: str, b: str) -> float:
        return self.world.cosine(a, b)


class FixtureNli:
    def __init__(self, world: FixtureWorld):
        self.world = world

    def entailment(self, premise: str, hypothesis: str) -> float:
        return self.world.entailment(premise, hypothesis)


class FixtureOntology:
    def __init__(self, world: FixtureWorld):
        self.world = world

    def type_ok(self, relation: str, tail: str) -> bool | None:
        allowed = self.world.relation_types.get(relation)
        if allowed is None:
            return None
        tail_type = self.world.term_types.get(normalize_name(tail))
        if tail_type is None:
            return None
        return tail_type in allowed


class FixturePolicy:
    def __init__(self, world: FixtureWorld):
        self.world = world

    def allowed(self, text: str) -> bool:
        lowered = text.lower()
        return not any(term in lowered for term in self.world.blocked_terms)


class RuleGrammarChecker:
    """Tiny deterministic grammar screen: counts doubled words, doubled
    spaces, unspaced punctuation, and a short list of classic typos."""

    TYPOS = ("teh ", " hte ", "recieve", "seperate", "definately")

    def error_count(self, text: str) -> int:
        errors = 0
        lowered = " " + text.lower()
        errors += sum(lowered.count(t) for t in self.TYPOS)
        errors += text.count("  ")
        errors += text.count(" ,") + text.count(" .")
        words = text.lower().split()
        errors += sum(1 for prev, cur in zip(words, words[1:]) if prev == cur and prev.isalpha())
        return errors


class LevelCalibratedProbe:
    """Deterministic probe whose confidence decays with item level.

    The key option gets logit 6/level; distractors draw from [0, 2.5) seeded
    by the question text. Level-1 items are always answered correctly with a
    sharp distribution; by level 3 distractors can overtake the key, so
    entropy rises and accuracy falls, which is the calibration signal the
    reporting stack is meant to surface.
    """

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = rng_seed

    def logits(
        self, question: str, options: dict[str, str], answer_key: str, level: int
    ) -> tuple[float, float, float, float]:
        digest = hashlib.sha256(f"{self.rng_seed}:{question}".encode("utf-8")).hexdigest()
        rng = random.Random(int(digest[:16], 16))
        level = max(1, level)
        values = []
        for letter in ("A", "B", "C", "D"):
            if letter == answer_key:
                values.append(6.0 / level)
            else:
                values.append(rng.uniform(0.0, 2.5))
        return tuple(values)  # type: ignore[return-value]


# -- network clients ---------------------------------------------------------


class OpenAiEmbedding:
    """Embeddings endpoint client; cosine of the two returned vectors."""

    def __init__(self, base_url: str, api_key: str, model: str = "text-embedding-3-small",
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout

    def _embed(self, texts: Sequence[str]) -> list[list[float]]:
        import requests

        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise AdapterError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterError(f"embedding endpoint returned {resp.status_code}")
        return [row["embedding"] for row in resp.json()["data"]]

    def cosine(self, a: str, b: str) -> float:
        va, vb = self._embed([a, b])
        dot = sum(x * y for x, y in zip(va, vb))
        na = math.sqrt(sum(x * x for x in va))
        nb = math.sqrt(sum(x * x for x in vb))
        if not na or not nb:
            return 0.0
        return dot / (na * nb)


class HttpNli:
    """POSTs {premise, hypothesis}; expects {"entailment": <prob>} back."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def entailment(self, premise: str, hypothesis: str) -> float:
        import requests

        try:
            resp = requests.post(
                self.endpoint,
                json={"premise": premise, "hypothesis": hypothesis},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise AdapterError(f"NLI request failed: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterError(f"NLI endpoint returned {resp.status_code}")
        return float(resp.json()["entailment"])


class WikidataOntology:
    """Looks up the tail entity's instance-of labels and checks them against
    a user-supplied relation -> admissible types mapping."""

    def __init__(self, relation_types: dict[str, list[str]],
                 base_url: str = "https://www.wikidata.org", timeout: float = 30.0):
        self.relation_types = relation_types
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def type_ok(self, relation: str, tail: str) -> bool | None:
        allowed = self.relation_types.get(relation)
        if allowed is None:
            return None
        import requests

        try:
            resp = requests.get(
                f"{self.base_url}/w/api.php",
                params={
                    "action": "wbsearchentities",
                    "search": tail,
                    "language": "en",
                    "format": "json",
                    "limit": 1,
                },
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise AdapterError(f"wikidata request failed: {exc}") from exc
        if resp.status_code != 200:
            raise AdapterError(f"wikidata returned {resp.status_code}")
        hits = resp.json().get("search", [])
        if not hits:
            return None
        description = (hits[0].get("description") or "").lower()
        return any(t.lower() in description for t in allowed)


@dataclass
class AdapterSuite:
    """The bundle of auxiliary adapters a pipeline run wires together."""

    embedding: EmbeddingAdapter
    nli: NliAdapter
    ontology: OntologyAdapter
    policy: PolicyAdapter
    grammar: GrammarAdapter
    probe: ProbeAdapter

    @classmethod
    def fixture_suite(cls, world: FixtureWorld, rng_seed: int = 0) -> "AdapterSuite":
        return cls(
            embedding=FixtureEmbedding(world),
            nli=FixtureNli(world),
            ontology=FixtureOntology(world),
            policy=FixturePolicy(world),
            grammar=RuleGrammarChecker(),
            probe=LevelCalibratedProbe(rng_seed),
        )
