"""Evidence gathering and ranking: title search, relevance check, summary and
page fetch, chunking, two-stage scoring, and mixture weights.

Sources sit behind the ``WikiSource`` protocol; the fixture source reads a
directory of title -> text files so tests never touch the network.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .config import PipelineConfig
from .errors import AmbiguousTitleError, PageNotFoundError, RetrievalError
from .fixture_world import FixtureWorld
from .gateway import ChatGateway, ChatRequest
from .prompts import TITLE_CHECK_SYSTEM, title_check_user

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\S+")
_SENTENCE_END = re.compile(r"[.!?][\"')\]]*$")


@dataclass(frozen=True)
class Passage:
    id: str
    source_title: str
    text: str
    score: float

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("passage text must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"passage score {self.score} outside [0, 1]")


@dataclass
class RetrievalResult:
    passages: list[Passage] = field(default_factory=list)
    fallback: bool = False

    def __post_init__(self) -> None:
        if self.fallback != (not self.passages):
            raise ValueError("fallback must be set exactly when no passages survive")

    def texts(self) -> list[str]:
        return [p.text for p in self.passages]

    def ids(self) -> list[str]:
        return [p.id for p in self.passages]

    def scores(self) -> list[float]:
        return [p.score for p in self.passages]


class WikiSource(Protocol):
    def search(self, term: str, limit: int) -> list[str]: ...

    def summary(self, title: str, max_chars: int) -> str: ...

    def page_text(self, title: str) -> str: ...


class FixtureWikiSource:
    """Offline source backed by the fixture corpus directory."""

    def __init__(self, world: FixtureWorld, corpus_dir: str | Path | None = None):
        self.world = world
        self.corpus_dir = Path(corpus_dir) if corpus_dir else world.root / "corpus"

    def search(self, term: str, limit: int) -> list[str]:
        if limit <= 0:
            return []
        key = " ".join(term.lower().split())
        return list(self.world.search.get(key, []))[:limit]

    def _read(self, title: str) -> str:
        if title in self.world.disambiguation:
            raise AmbiguousTitleError(f"{title!r} is a disambiguation page")
        filename = self.world.title_files.get(title)
        if filename is None:
            raise PageNotFoundError(f"no fixture page for {title!r}")
        path = self.corpus_dir / filename
        if not path.exists():
            raise PageNotFoundError(f"fixture file missing for {title!r}: {path}")
        return path.read_text(encoding="utf-8").strip()

    def summary(self, title: str, max_chars: int) -> str:
        text = self._read(title)
        first_para = text.split("\n\n", 1)[0]
        return truncate_at_word(first_para, max_chars)

    def page_text(self, title: str) -> str:
        return self._read(title)


class NetworkWikiSource:
    """Thin client for the Wikipedia REST endpoints."""

    def __init__(self, base_url: str = "https://en.wikipedia.org", timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _get(self, url: str, params: dict | None = None) -> dict:
        import requests

        try:
            resp = requests.get(url, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RetrievalError(f"wiki request failed: {exc}") from exc
        if resp.status_code == 404:
            raise PageNotFoundError(url)
        if resp.status_code != 200:
            raise RetrievalError(f"wiki returned {resp.status_code} for {url}")
        return resp.json()

    def search(self, term: str, limit: int) -> list[str]:
        if limit <= 0:
            return []
        doc = self._get(
            f"{self.base_url}/w/rest.php/v1/search/page",
            params={"q": term, "limit": limit},
        )
        return [page["title"] for page in doc.get("pages", [])][:limit]

    def summary(self, title: str, max_chars: int) -> str:
        doc = self._get(f"{self.base_url}/api/rest_v1/page/summary/{title.replace(' ', '_')}")
        if doc.get("type") == "disambiguation":
            raise AmbiguousTitleError(f"{title!r} is a disambiguation page")
        return truncate_at_word(doc.get("extract", ""), max_chars)

    def page_text(self, title: str) -> str:
        doc = self._get(
            f"{self.base_url}/w/api.php",
            params={
                "action": "query",
                "prop": "extracts",
                "explaintext": 1,
                "format": "json",
                "titles": title,
            },
        )
        pages = doc.get("query", {}).get("pages", {})
        for page in pages.values():
            if "extract" in page:
                return page["extract"]
        raise PageNotFoundError(title)


def truncate_at_word(text: str, max_chars: int) -> str:
    """Cut at the last whitespace at or before ``max_chars``; never mid-word."""
    text = text.strip()
    if len(text) <= max_chars:
        return text
    head = text[:max_chars]
    cut = head.rsplit(None, 1)
    return cut[0] if len(cut) == 2 else head


def search_titles(source: WikiSource, term: str, limit: int = 5) -> list[str]:
    if not term.strip():
        raise RetrievalError("search term must be non-empty")
    return source.search(term, limit)


def check_title_relevance(
    gateway: ChatGateway, term: str, candidate_title: str, context_hint: str
) -> bool:
    """True iff the relevance classifier answers exactly "yes"."""
    response = gateway.complete(
        ChatRequest(
            system_prompt=TITLE_CHECK_SYSTEM,
            user_prompt=title_check_user(term, candidate_title, context_hint),
            temperature=0.0,
            task_tag="title_check",
        )
    )
    answer = response.text.strip().lower()
    if answer == "yes":
        return True
    if answer != "no":
        log.warning("title check returned %r for %r; treating as no", response.text, candidate_title)
    return False


def fetch_summary(source: WikiSource, title: str, max_chars: int = 1000) -> str:
    return source.summary(title, max_chars)


def chunk_text(text: str, size: int = 1000, overlap: int = 100) -> list[str]:
    """Split into chunks of at most ``size`` whitespace tokens, preferring
    paragraph then sentence boundaries, with consecutive chunks sharing at
    most ``overlap`` tokens.
    """
    if overlap >= size:
        raise ValueError("overlap must be smaller than size")
    spans = [m.span() for m in _WORD_RE.finditer(text)]
    n = len(spans)
    if n == 0:
        return []
    if n <= size:
        return [text[spans[0][0]:spans[-1][1]]]

    paragraph_cuts = _boundary_token_indexes(text, spans, "\n\n")
    sentence_cuts = {
        i + 1
        for i, (start, end) in enumerate(spans)
        if _SENTENCE_END.search(text[start:end])
    }

    chunks: list[str] = []
    start = 0
    while start < n:
        hard_end = min(start + size, n)
        if hard_end == n:
            end = n
        else:
            end = _best_cut(start, hard_end, paragraph_cuts, sentence_cuts)
        chunks.append(text[spans[start][0]:spans[end - 1][1]])
        if end == n:
            break
        start = max(end - overlap, start + 1)
    return chunks


def _boundary_token_indexes(text: str, spans: list[tuple[int, int]], sep: str) -> set[int]:
    """Token indexes that begin right after ``sep`` in the original text."""
    cuts: set[int] = set()
    offset = 0
    while True:
        pos = text.find(sep, offset)
        if pos == -1:
            return cuts
        for i, (start, _end) in enumerate(spans):
            if start >= pos + len(sep):
                cuts.add(i)
                break
        offset = pos + len(sep)


def _best_cut(start: int, hard_end: int, paragraphs: set[int], sentences: set[int]) -> int:
    # Require a reasonable fill so boundary-seeking never degenerates.
    floor = start + max(1, (hard_end - start) // 2)
    for candidates in (paragraphs, sentences):
        eligible = [c for c in candidates if floor <= c <= hard_end]
        if eligible:
            return max(eligible)
    return hard_end


class Bm25:
    """Okapi BM25 over whitespace-tokenized documents (k1=1.2, b=0.75)."""

    def __init__(self, documents: Sequence[str], k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.docs = [self._tokens(d) for d in documents]
        self.doc_lens = [len(d) for d in self.docs]
        self.n = len(self.docs)
        self.avgdl = (sum(self.doc_lens) / self.n) if self.n else 0.0
        self.term_freqs = [Counter(d) for d in self.docs]
        doc_freq: Counter[str] = Counter()
        for tf in self.term_freqs:
            doc_freq.update(tf.keys())
        self.idf = {
            t: math.log(1.0 + (self.n - df + 0.5) / (df + 0.5)) for t, df in doc_freq.items()
        }

    @staticmethod
    def _tokens(text: str) -> list[str]:
        return re.findall(r"\w+", text.lower())

    def scores(self, query: str) -> list[float]:
        q_tokens = self._tokens(query)
        out = []
        for tf, dl in zip(self.term_freqs, self.doc_lens):
            norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl) if self.avgdl else 0.0
            s = 0.0
            for token in q_tokens:
                f = tf.get(token, 0)
                if f:
                    s += self.idf[token] * f * (self.k1 + 1.0) / (f + norm)
            out.append(s)
        return out


class DenseScorer(Protocol):
    """Second-stage scorer; returns per-chunk scores already in [0, 1]."""

    def score(self, query: str, chunks: Sequence[str]) -> list[float]: ...


class LexicalCosineScorer:
    """Deterministic mock reranker: cosine between term-frequency vectors."""

    def score(self, query: str, chunks: Sequence[str]) -> list[float]:
        q = Counter(Bm25._tokens(query))
        q_norm = math.sqrt(sum(v * v for v in q.values()))
        out = []
        for chunk in chunks:
            c = Counter(Bm25._tokens(chunk))
            c_norm = math.sqrt(sum(v * v for v in c.values()))
            if not q_norm or not c_norm:
                out.append(0.0)
                continue
            dot = sum(q[t] * c[t] for t in q)
            out.append(dot / (q_norm * c_norm))
        return out


class EmbeddingScorer:
    """Reranker backed by an embedding adapter; raw cosines are min-max
    normalized per query since backend score ranges vary."""

    def __init__(self, embedder):
        self.embedder = embedder

    def score(self, query: str, chunks: Sequence[str]) -> list[float]:
        try:
            raw = [self.embedder.cosine(query, chunk) for chunk in chunks]
        except Exception as exc:
            raise RetrievalError(f"dense scorer failed: {exc}") from exc
        return minmax_normalize(raw)


def minmax_normalize(scores: Sequence[float]) -> list[float]:
    """Rescale to [0, 1]; a constant vector maps to 1.0 (or 0.0 if <= 0)."""
    if not scores:
        return []
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [1.0 if hi > 0 else 0.0] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def score_and_rerank(
    query: str,
    chunks: Sequence[str],
    scorer: DenseScorer,
    k: int = 5,
    score_floor: float = 0.15,
    first_stage_cut: int = 50,
    id_prefix: str = "chunk",
    source_title: str = "",
) -> RetrievalResult:
    """Two-stage ranking: BM25 keeps the lexical top candidates, the dense
    scorer re-scores them, and only passages above the floor survive."""
    indexed = list(enumerate(chunks))
    if not indexed:
        return RetrievalResult(passages=[], fallback=True)

    if len(indexed) > first_stage_cut:
        bm25 = Bm25([c for _, c in indexed])
        lexical = bm25.scores(query)
        order = sorted(range(len(indexed)), key=lambda i: (-lexical[i], i))
        indexed = [indexed[i] for i in order[:first_stage_cut]]

    dense = scorer.score(query, [c for _, c in indexed])
    scored = [
        Passage(id=f"{id_prefix}{idx:03d}", source_title=source_title, text=chunk, score=score)
        for (idx, chunk), score in zip(indexed, dense)
        if score > score_floor
    ]
    scored.sort(key=lambda p: (-p.score, p.id))
    passages = scored[:k]
    return RetrievalResult(passages=passages, fallback=not passages)


def mixture_weights(scores: Sequence[float]) -> list[float]:
    """Softmax over retrieval scores; the weight each passage carries."""
    if not scores:
        raise ValueError("mixture_weights requires at least one score")
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def retrieve_evidence(
    term: str,
    source: WikiSource,
    gateway: ChatGateway,
    config: PipelineConfig,
    context_hint: str = "general knowledge",
    scorer: DenseScorer | None = None,
) -> RetrievalResult:
    """Full evidence pass for one term: search, LLM title filter, summary and
    page fetch, chunking, and two-stage reranking. Empty results flag the
    parametric fallback instead of raising.
    """
    try:
        titles = search_titles(source, term, config.search_limit)
    except RetrievalError:
        raise
    chosen: str | None = None
    for title in titles:
        if check_title_relevance(gateway, term, title, context_hint):
            chosen = title
            break
    if chosen is None:
        return RetrievalResult(passages=[], fallback=True)

    candidates: list[tuple[str, str]] = []
    try:
        summary = fetch_summary(source, chosen, config.summary_char_limit)
        if summary:
            candidates.append((f"{chosen}#summary", summary))
        page = source.page_text(chosen)
        for i, chunk in enumerate(chunk_text(page, config.chunk_size, config.chunk_overlap)):
            candidates.append((f"{chosen}#chunk{i}", chunk))
    except (PageNotFoundError, AmbiguousTitleError) as exc:
        log.warning("fetch failed for %r: %s", chosen, exc)
    if not candidates:
        return RetrievalResult(passages=[], fallback=True)

    if scorer is None:
        scorer = LexicalCosineScorer()
    texts = [text for _, text in candidates]
    ranked = score_and_rerank(
        term,
        texts,
        scorer,
        k=config.search_limit,
        score_floor=config.score_floor,
        first_stage_cut=config.first_stage_cut,
        source_title=chosen,
    )
    if ranked.fallback:
        return ranked
    # Re-key passages with their source-derived ids for provenance.
    by_text = {text: pid for pid, text in candidates}
    passages = [
        Passage(id=by_text[p.text], source_title=chosen, text=p.text, score=p.score)
        for p in ranked.passages
    ]
    return RetrievalResult(passages=passages, fallback=False)
