from __future__ import annotations

import json

import pytest

import knight.gateway as gateway_mod
from knight.errors import AuthError, EmptyResponseError, RetriesExhaustedError
from knight.gateway import (
    ChatGateway,
    ChatRequest,
    ChatResponse,
    MockChatBackend,
    MockOverride,
    OpenAiCompatBackend,
    TokenLedger,
)
from knight.prompts import GLOSS_SYSTEM, TRIPLES_SYSTEM, gloss_user, triples_user


def _request(tag="gloss", user="hello", temperature=0.4):
    return ChatRequest(system_prompt="sys", user_prompt=user, temperature=temperature, task_tag=tag)


def test_request_validation():
    with pytest.raises(ValueError):
        _request(temperature=1.5)
    with pytest.raises(ValueError):
        _request(tag="mystery")


def test_mock_determinism(world):
    backend = MockChatBackend(world, rng_seed=7)
    req = ChatRequest(
        system_prompt=GLOSS_SYSTEM,
        user_prompt=gloss_user("Biology", [], None),
        temperature=0.4,
        task_tag="gloss",
    )
    first = backend.complete(req)
    second = backend.complete(req)
    assert first == second
    assert first.text.encode("utf-8") == second.text.encode("utf-8")


def test_mock_seed_changes_mcq_shape(world):
    user = (
        'Path: "A --[links_to]--> B"\nStart Node: "Genetics"\nDescription: "d"\n'
        'End Node: "Heredity"\nDescription: "d"'
    )
    req = ChatRequest(system_prompt="s", user_prompt=user, temperature=0.4, task_tag="mcq_forward")
    texts = {MockChatBackend(world, rng_seed=s).complete(req).text for s in range(6)}
    assert len(texts) > 1  # seed reshuffles distractors/key letter


def test_mock_triples_for_hafez_gloss(world):
    """A gloss about Hafez that mentions Shiraz must yield the fixture's
    born_in triple."""
    backend = MockChatBackend(world, rng_seed=7)
    gloss = backend.complete(
        ChatRequest(
            system_prompt=GLOSS_SYSTEM,
            user_prompt=gloss_user(
                "Hafez", ["Hafez was a Persian poet. He was born in Shiraz."], None
            ),
            temperature=0.4,
            task_tag="gloss",
        )
    )
    assert "Shiraz" in gloss.text
    triples_resp = backend.complete(
        ChatRequest(
            system_prompt=TRIPLES_SYSTEM,
            user_prompt=triples_user(gloss.text),
            temperature=0.1,
            task_tag="triples",
        )
    )
    doc = json.loads(triples_resp.text)
    rows = {(t["head"], t["relation"], t["tail"]) for t in doc["triplets"]}
    assert ("Hafez", "born_in", "Shiraz") in rows


def test_mock_override_wins(world):
    backend = MockChatBackend(
        world,
        rng_seed=7,
        overrides=[MockOverride(task_tag="title_check", substring="Biology", response="Maybe")],
    )
    resp = backend.complete(
        ChatRequest(
            system_prompt="s",
            user_prompt='Term to define: "Biology".\nCandidate page title: "Biology".',
            temperature=0.0,
            task_tag="title_check",
        )
    )
    assert resp.text == "Maybe"


def test_ledger_starts_empty_and_adds():
    ledger = TokenLedger()
    assert ledger.totals() == {}
    assert ledger.grand_total() == (0, 0)
    ledger.record("gloss", 10, 5)
    ledger.record("gloss", 10, 5)
    assert ledger.totals() == {"gloss": (20, 10)}
    ledger.record("triples", 1, 2)
    assert ledger.grand_total() == (21, 12)
    ledger.reset()
    assert ledger.totals() == {}


def test_gateway_records_ledger(world):
    gw = ChatGateway(MockChatBackend(world, rng_seed=1))
    req = _request(tag="title_check", user='Term to define: "X".\nCandidate page title: "X".')
    resp = gw.complete(req)
    totals = gw.ledger.totals()
    assert totals["title_check"] == (resp.prompt_tokens, resp.completion_tokens)
    assert gw.ledger.tags_seen() == {"title_check"}


def test_per_item_token_average():
    # Arithmetic oracle over a ledger fixture: 3 calls, 2 kept items.
    ledger = TokenLedger()
    for prompt_tokens, completion in ((100, 40), (80, 20), (120, 40)):
        ledger.record("mcq_forward", prompt_tokens, completion)
    prompt_total, completion_total = ledger.grand_total()
    assert (prompt_total + completion_total) / 2 == 200.0


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload


def test_network_auth_error_no_retry(monkeypatch):
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        return _FakeResponse(401)

    import requests

    monkeypatch.setattr(requests, "post", fake_post)
    backend = OpenAiCompatBackend("https://api.example/v1", "bad-key", "model-x")
    with pytest.raises(AuthError):
        backend.complete(_request())
    assert len(calls) == 1


def test_network_retries_then_succeeds(monkeypatch):
    calls = []
    payload = {
        "choices": [{"message": {"content": "ok"}}],
        "usage": {"prompt_tokens": 3, "completion_tokens": 1},
    }

    def fake_post(url, **kwargs):
        calls.append(url)
        if len(calls) < 3:
            return _FakeResponse(500)
        return _FakeResponse(200, payload)

    import requests

    monkeypatch.setattr(requests, "post", fake_post)
    monkeypatch.setattr(gateway_mod.time, "sleep", lambda _s: None)
    backend = OpenAiCompatBackend("https://api.example/v1", "key", "model-x", retry_attempts=3)
    resp = backend.complete(_request())
    assert resp == ChatResponse(text="ok", prompt_tokens=3, completion_tokens=1)
    assert len(calls) == 3


def test_network_retries_exhausted(monkeypatch):
    import requests

    monkeypatch.setattr(requests, "post", lambda url, **kw: _FakeResponse(503))
    monkeypatch.setattr(gateway_mod.time, "sleep", lambda _s: None)
    backend = OpenAiCompatBackend("https://api.example/v1", "key", "model-x", retry_attempts=2)
    with pytest.raises(RetriesExhaustedError):
        backend.complete(_request())


def test_network_empty_response(monkeypatch):
    import requests

    payload = {"choices": [{"message": {"content": "   "}}]}
    monkeypatch.setattr(requests, "post", lambda url, **kw: _FakeResponse(200, payload))
    backend = OpenAiCompatBackend("https://api.example/v1", "key", "model-x")
    with pytest.raises(EmptyResponseError):
        backend.complete(_request())


def test_missing_key_rejected_up_front():
    with pytest.raises(AuthError):
        OpenAiCompatBackend("https://api.example/v1", "", "model-x")
