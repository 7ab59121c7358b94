from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knight.errors import AmbiguousTitleError, PageNotFoundError, RetrievalError
from knight.gateway import ChatGateway, MockChatBackend, MockOverride
from knight.retrieval import (
    Bm25,
    FixtureWikiSource,
    LexicalCosineScorer,
    Passage,
    RetrievalResult,
    check_title_relevance,
    chunk_text,
    fetch_summary,
    minmax_normalize,
    mixture_weights,
    retrieve_evidence,
    score_and_rerank,
    search_titles,
    truncate_at_word,
)


@pytest.fixture()
def source(world):
    return FixtureWikiSource(world)


# -- search -------------------------------------------------------------------


def test_search_zero_limit(source):
    assert search_titles(source, "Biology", 0) == []


def test_search_fixture_index(source):
    titles = search_titles(source, "Biology", 5)
    assert titles[0] == "Biology"
    assert len(titles) == 5  # index holds 7 hits; engine order truncated


def test_search_unknown_term(source):
    assert search_titles(source, "Quantum Baking", 5) == []


def test_search_empty_term(source):
    with pytest.raises(RetrievalError):
        search_titles(source, "   ", 5)


# -- title relevance ----------------------------------------------------------


def test_title_relevance_yes_no(world, gateway):
    assert check_title_relevance(gateway, "Biology", "Biology", "general knowledge") is True
    assert check_title_relevance(gateway, "Biology", "Ottoman Empire", "general") is False


def test_title_relevance_garbage_is_no(world, caplog):
    backend = MockChatBackend(
        world, overrides=[MockOverride("title_check", "Biology", "Maybe")]
    )
    gw = ChatGateway(backend)
    with caplog.at_level("WARNING"):
        assert check_title_relevance(gw, "Biology", "Biology", "hint") is False
    assert any("treating as no" in r.message for r in caplog.records)


# -- summaries ----------------------------------------------------------------


def test_fetch_summary_short_unchanged(source):
    text = fetch_summary(source, "Pharmacology", 1000)
    assert text.startswith("Pharmacology is the study of drugs")
    assert len(text) <= 1000


def test_truncate_at_word_boundary():
    words = " ".join(f"word{i}" for i in range(400))  # ~2800 chars
    cut = truncate_at_word(words, 1000)
    assert len(cut) <= 1000
    assert cut.split()[-1] in words.split()  # no mid-word fragment
    assert truncate_at_word("short text", 1000) == "short text"


def test_fetch_summary_missing_title(source):
    with pytest.raises(PageNotFoundError):
        fetch_summary(source, "Atlantology", 1000)


def test_fetch_summary_disambiguation(source):
    with pytest.raises(AmbiguousTitleError):
        fetch_summary(source, "Mercury", 1000)


# -- chunking -----------------------------------------------------------------


def test_chunk_small_text_single_chunk():
    text = " ".join(f"w{i}" for i in range(500))
    assert chunk_text(text, 1000, 100) == [text]


def test_chunk_1900_tokens_two_chunks_with_overlap():
    tokens = [f"w{i:04d}" for i in range(1900)]
    chunks = chunk_text(" ".join(tokens), 1000, 100)
    assert len(chunks) == 2
    first, second = (c.split() for c in chunks)
    assert len(first) == 1000 and len(second) == 1000
    assert first[-100:] == second[:100]
    # concatenation minus the overlap reconstructs the token sequence
    assert first + second[100:] == tokens


def test_chunk_empty():
    assert chunk_text("", 1000, 100) == []
    assert chunk_text("   \n  ", 1000, 100) == []


def test_chunk_prefers_paragraph_boundary():
    para1 = " ".join(f"a{i}" for i in range(60))
    para2 = " ".join(f"b{i}" for i in range(60))
    chunks = chunk_text(para1 + "\n\n" + para2, size=80, overlap=10)
    assert chunks[0].split() == para1.split()  # cut lands on the blank line


def test_chunk_overlap_must_be_smaller():
    with pytest.raises(ValueError):
        chunk_text("a b c", 10, 10)


@settings(max_examples=40)
@given(
    st.integers(min_value=1, max_value=260),
    st.integers(min_value=10, max_value=40),
    st.integers(min_value=0, max_value=9),
)
def test_chunk_properties(n_tokens, size, overlap):
    tokens = [f"t{i}" for i in range(n_tokens)]
    chunks = chunk_text(" ".join(tokens), size, overlap)
    seen = set()
    for chunk in chunks:
        parts = chunk.split()
        assert len(parts) <= size
        seen.update(parts)
    assert seen == set(tokens)


# -- scoring ------------------------------------------------------------------


class _StubScorer:
    def __init__(self, scores):
        self._scores = scores

    def score(self, query, chunks):
        return list(self._scores[: len(chunks)])


def test_rerank_all_below_floor():
    result = score_and_rerank("q", ["a", "b"], _StubScorer([0.1, 0.15]), score_floor=0.15)
    assert result.fallback is True
    assert result.passages == []


def test_rerank_threshold_and_sort():
    result = score_and_rerank(
        "q", ["first", "second", "third"], _StubScorer([0.9, 0.5, 0.1]), k=5
    )
    assert [p.score for p in result.passages] == [0.9, 0.5]
    assert [p.text for p in result.passages] == ["first", "second"]
    assert result.fallback is False


def test_rerank_first_stage_cut():
    chunks = [f"doc {i} filler" for i in range(60)] + ["the exact query words here"]
    scorer = LexicalCosineScorer()
    result = score_and_rerank("exact query words", chunks, scorer, k=3, first_stage_cut=50)
    assert result.passages[0].text == "the exact query words here"


def test_rerank_fixture_corpus_photosynthesis(world, source):
    texts, titles = [], []
    for title in sorted(world.title_files):
        texts.append(source.page_text(title))
        titles.append(title)
    result = score_and_rerank("photosynthesis", texts, LexicalCosineScorer(), k=3)
    top_index = int(result.passages[0].id.removeprefix("chunk"))
    assert titles[top_index] == "Photosynthesis"


def test_passage_validation():
    with pytest.raises(ValueError):
        Passage(id="x", source_title="t", text="  ", score=0.5)
    with pytest.raises(ValueError):
        Passage(id="x", source_title="t", text="ok", score=1.5)
    with pytest.raises(ValueError):
        RetrievalResult(passages=[], fallback=False)


def test_minmax_normalize():
    assert minmax_normalize([]) == []
    assert minmax_normalize([2.0, 2.0]) == [1.0, 1.0]
    assert minmax_normalize([0.0, 0.0]) == [0.0, 0.0]
    assert minmax_normalize([1.0, 3.0, 2.0]) == [0.0, 1.0, 0.5]


# -- mixture weights ----------------------------------------------------------


def test_mixture_symmetry():
    assert mixture_weights([0.5, 0.5]) == [0.5, 0.5]


def test_mixture_singleton():
    assert mixture_weights([1.0]) == [1.0]


def test_mixture_frozen_value():
    # Oracle: high-precision softmax evaluated with mpmath (50 digits).
    w = mixture_weights([0.2, 0.8])
    assert w[0] == pytest.approx(0.3543436938, abs=1e-4)
    assert w[1] == pytest.approx(0.6456563062, abs=1e-4)


def test_mixture_empty_rejected():
    with pytest.raises(ValueError):
        mixture_weights([])


@settings(max_examples=60)
@given(st.lists(st.floats(min_value=-20, max_value=20), min_size=1, max_size=8))
def test_mixture_properties(scores):
    weights = mixture_weights(scores)
    assert math.isclose(sum(weights), 1.0, abs_tol=1e-9)
    for i in range(len(scores)):
        for j in range(len(scores)):
            # strict monotonicity, checked above float resolution
            if scores[i] > scores[j] + 1e-6:
                assert weights[i] > weights[j]
    shifted = mixture_weights([s + 3.5 for s in scores])
    for a, b in zip(weights, shifted):
        assert math.isclose(a, b, abs_tol=1e-9)


# -- full evidence pass -------------------------------------------------------


def test_retrieve_evidence_biology(world, gateway, config, source):
    result = retrieve_evidence("Biology", source, gateway, config)
    assert result.fallback is False
    scores = result.scores()
    assert scores == sorted(scores, reverse=True)
    assert all(s > config.score_floor for s in scores)
    assert any(p.id.startswith("Biology#") for p in result.passages)


def test_retrieve_evidence_unknown_term_falls_back(world, gateway, config, source):
    result = retrieve_evidence("Gleeb Zorp", source, gateway, config)
    assert result.fallback is True
    assert result.passages == []


def test_bm25_ranks_matching_doc_first():
    docs = ["apples and pears", "bm25 ranking function for search", "dense embeddings"]
    scores = Bm25(docs).scores("bm25 search ranking")
    assert scores.index(max(scores)) == 1
