import json

import pytest

from acof.llmclient import (
    API_KEY_ENV,
    ChatRequest,
    ConfigurationError,
    HttpxTransport,
    LLMClient,
    ScriptedTransport,
    TransportError,
)

MSGS = [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}]


def make(script, **kw):
    sleeps = []
    c = LLMClient("http://llm.test/v1/", "m", "sk-secret", transport=ScriptedTransport(script),
                  sleep=sleeps.append, **kw)
    return c, sleeps


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("m", ())
    with pytest.raises(ValueError):
        ChatRequest("m", ({"role": "user", "content": "u"},))
    with pytest.raises(ValueError):
        ChatRequest("m", tuple(MSGS), temperature=3.0)
    with pytest.raises(ValueError):
        ChatRequest("m", tuple(MSGS), max_tokens=0)
    r = ChatRequest("m", tuple(MSGS))
    assert r.digest() == ChatRequest("m", tuple(MSGS)).digest()
    assert r.body()["messages"] == MSGS


def test_success_posts_to_chat_completions():
    c, sleeps = make(["hello"])
    assert c.complete(c.request(MSGS)) == "hello"
    url, headers, body = c.transport.requests[0]
    assert url == "http://llm.test/v1/chat/completions"
    assert headers["Authorization"] == "Bearer sk-secret"
    assert body["model"] == "m" and sleeps == []
    assert [e.outcome for e in c.transcript.entries] == ["ok"]


def test_retries_with_exponential_backoff():
    c, sleeps = make([503, TimeoutError("slow"), "fine"])
    assert c.complete(c.request(MSGS)) == "fine"
    assert sleeps == [1.0, 2.0]
    assert [e.outcome for e in c.transcript.entries] == ["http_error", "timeout", "ok"]


def test_gives_up_after_three_attempts():
    c, sleeps = make([TimeoutError(), TimeoutError(), TimeoutError(), "never"])
    with pytest.raises(TransportError, match="3 attempts"):
        c.complete(c.request(MSGS))
    assert len(c.transport.requests) == 3 and sleeps == [1.0, 2.0]


def test_client_errors_are_not_retried():
    c, _ = make([400, "never"])
    with pytest.raises(TransportError, match="400"):
        c.complete(c.request(MSGS))
    assert len(c.transport.requests) == 1


def test_malformed_body():
    class Broken:
        def send(self, *a):
            return 200, json.dumps({"choices": []})

    c = LLMClient("http://x", "m", "k", transport=Broken(), sleep=lambda s: None)
    with pytest.raises(TransportError, match="malformed"):
        c.complete(c.request(MSGS))


def test_key_from_env_and_kept_private(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(ConfigurationError):
        LLMClient.from_env("http://x", "m")
    monkeypatch.setenv(API_KEY_ENV, "sk-from-env")
    c = LLMClient.from_env("http://x", "m", transport=ScriptedTransport(["ok"]))
    assert "sk-from-env" not in repr(c)
    c.complete(c.request(MSGS))
    assert all("sk-from-env" not in json.dumps(e.to_dict()) for e in c.transcript.entries)


def test_empty_key_rejected():
    with pytest.raises(ConfigurationError):
        LLMClient("http://x", "m", "")


def test_httpx_transport_maps_connection_errors():
    # nothing listens on port 9 of localhost
    with pytest.raises((ConnectionError, TimeoutError)):
        HttpxTransport().send("http://127.0.0.1:9/v1/chat/completions", {}, {}, 1.0)
